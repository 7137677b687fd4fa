#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "chenflow/chen.hpp"

namespace chenflow {

struct LearnerConfig {
  std::optional<Vector> theta0;  // defaults to zero
  std::optional<Matrix> p0;      // defaults to identity
  std::size_t reset_period = 25;  // samples between covariance resets, 0 = never
};

/// θ̂(N), P(N-1) and the bookkeeping for periodic covariance resetting.
struct LearnerState {
  CoefficientVector theta;
  Matrix covariance;
  Matrix covariance0;
  std::size_t reset_period = 0;
  std::size_t steps_since_reset = 0;
  std::size_t n = 0;
};

namespace detail {

inline double asymmetry(const Matrix& p) { return (p - p.transpose()).cwiseAbs().maxCoeff(); }

}  // namespace detail

inline LearnerState learner_init(const LearnerConfig& config, const OrderPtr& order) {
  const auto l = static_cast<Eigen::Index>(order->size());
  Vector theta0 = config.theta0.value_or(Vector::Zero(l));
  Matrix p0 = config.p0.value_or(Matrix::Identity(l, l));
  if (theta0.size() != l) throw std::invalid_argument("learner_init: theta0 has wrong length");
  if (p0.rows() != l || p0.cols() != l) throw std::invalid_argument("learner_init: P0 has wrong shape");
  if (!p0.allFinite() || !theta0.allFinite()) throw std::invalid_argument("learner_init: non-finite initial data");
  if (detail::asymmetry(p0) > 1e-12 * std::max(1.0, p0.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("learner_init: P0 is not symmetric");
  Eigen::LLT<Matrix> llt(p0);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("learner_init: P0 is not positive definite");

  LearnerState state;
  state.theta = CoefficientVector::from(order, std::move(theta0));
  state.covariance = p0;
  state.covariance0 = std::move(p0);
  state.reset_period = config.reset_period;
  return state;
}

/// One recursive least-squares step:
///   e = y - φᵀθ,  g = Pφ / (1 + φᵀPφ),  θ += g e,  P -= Pφφᵀ P / (1 + φᵀPφ).
/// Resets P to P0 after the update once every `reset_period` steps.
inline void rls_update_in_place(LearnerState& state, const Vector& phi, double y) {
  if (phi.size() != state.theta.theta.size()) throw std::invalid_argument("rls_update: regressor has wrong length");
  if (!std::isfinite(y) || !phi.allFinite()) throw std::domain_error("rls_update: non-finite data");

  const Vector p_phi = state.covariance * phi;
  const double denom = 1.0 + phi.dot(p_phi);
  const double innovation = y - phi.dot(state.theta.theta);
  state.theta.theta += (innovation / denom) * p_phi;
  state.covariance.noalias() -= (p_phi / denom) * p_phi.transpose();
  state.covariance = 0.5 * (state.covariance + state.covariance.transpose()).eval();

  ++state.n;
  ++state.steps_since_reset;
  if (state.reset_period > 0 && state.steps_since_reset >= state.reset_period) {
    state.covariance = state.covariance0;
    state.steps_since_reset = 0;
  }
}

inline LearnerState rls_update(LearnerState state, const Vector& phi, double y) {
  rls_update_in_place(state, phi, y);
  return state;
}

struct LearnStep {
  double predicted = 0.0;   // ŷ_p(N) = φᵀ(N) θ̂(N-1)
  double innovation = 0.0;  // e(N) = y(NΔ) - ŷ_p(N)
};

/// Predict with the current estimate, then absorb the measurement.
inline LearnStep learn_step_in_place(LearnerState& state, const ChenState& chen, double y) {
  LearnStep out;
  out.predicted = evaluate(state.theta, chen);
  out.innovation = y - out.predicted;
  rls_update_in_place(state, chen.regressor(), y);
  return out;
}

struct LearnStepResult {
  LearnerState state;
  double predicted = 0.0;
  double innovation = 0.0;
};

inline LearnStepResult learn_step(LearnerState state, const ChenState& chen, double y) {
  LearnStep s = learn_step_in_place(state, chen, y);
  return {std::move(state), s.predicted, s.innovation};
}

}  // namespace chenflow
