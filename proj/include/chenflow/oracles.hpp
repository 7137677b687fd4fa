#pragma once

// Independent reference computations used by the test suites and by the
// `selftest` subcommand. Each check pits a production path against a route
// that shares none of its code: brute-force suffix tests, the iterated-sum
// recursion, or a dense normal-equations solve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chenflow/chen.hpp"
#include "chenflow/learner.hpp"

namespace chenflow::oracles {

using SMatrixBuilder = std::function<Matrix(const InputSample&, const OrderPtr&)>;

inline Matrix production_builder(const InputSample& u, const OrderPtr& order) {
  return s_matrix_inductive(u, order).data;
}

inline InputSample random_sample(std::size_t m, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Vector v(static_cast<Eigen::Index>(m + 1));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
  return InputSample(std::move(v));
}

inline std::vector<InputSample> random_sequence(std::size_t m, std::size_t length, std::mt19937_64& rng,
                                                double scale = 1.0) {
  std::vector<InputSample> out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) out.push_back(random_sample(m, rng, scale));
  return out;
}

/// max |S_inductive - S_direct| over `trials` random samples.
inline double s_matrix_discrepancy(const OrderPtr& order, std::size_t trials, std::mt19937_64& rng,
                                   const SMatrixBuilder& builder = production_builder) {
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const InputSample u = random_sample(order->alphabet().m(), rng);
    const Matrix direct = s_matrix(u, order).data;
    const Matrix built = builder(u, order);
    if (built.rows() != direct.rows() || built.cols() != direct.cols()) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, (built - direct).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// max |apply_s_matrix(u, r) - S(u) r| with S from the direct construction.
inline double apply_discrepancy(const OrderPtr& order, std::size_t trials, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const InputSample u = random_sample(order->alphabet().m(), rng);
    Vector r(static_cast<Eigen::Index>(order->size()));
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = normal(rng);
    worst = std::max(worst, (apply_s_matrix(u, *order, r) - s_matrix(u, order).data * r).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Π(S[u](N)) as the directed product of builder matrices.
inline Matrix representation(const OrderPtr& order, std::span<const InputSample> samples,
                             const SMatrixBuilder& builder = production_builder) {
  const auto l = static_cast<Eigen::Index>(order->size());
  Matrix pi = Matrix::Identity(l, l);
  for (const InputSample& u : samples) pi = builder(u, order) * pi;
  return pi;
}

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// Chen's identity: column 0 of Π(S[v]) Π(S[u]) against the iterated sums of
/// the concatenated input v #_M u. Returns the worst relative error.
inline double chen_identity_error(const OrderPtr& order, std::span<const InputSample> u,
                                  std::span<const InputSample> v, const SMatrixBuilder& builder = production_builder) {
  const Matrix product = representation(order, v, builder) * representation(order, u, builder);
  std::vector<InputSample> joined(u.begin(), u.end());
  joined.insert(joined.end(), v.begin(), v.end());
  const std::size_t n = joined.size() - 1;
  double worst = 0.0;
  for (std::size_t j = 0; j < order->size(); ++j) {
    const double want = iterated_sum((*order)[j], joined, n);
    worst = std::max(worst, relative_error(product(static_cast<Eigen::Index>(j), 0), want));
  }
  return worst;
}

/// Regressor of the production ChenState against iterated sums.
inline double regressor_error(const OrderPtr& order, std::span<const InputSample> samples) {
  const Vector phi = chen_run(order, samples).regressor();
  double worst = 0.0;
  for (std::size_t j = 0; j < order->size(); ++j)
    worst = std::max(worst, relative_error(phi[static_cast<Eigen::Index>(j)],
                                           iterated_sum((*order)[j], samples, samples.size() - 1)));
  return worst;
}

/// |predict_next(θ, s, u) - evaluate(θ, chen_step(s, u))|.
inline double predict_next_error(const OrderPtr& order, std::size_t trials, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto history = random_sequence(order->alphabet().m(), 1 + t % 6, rng, 0.5);
    const ChenState state = chen_run(order, history);
    Vector theta(static_cast<Eigen::Index>(order->size()));
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = normal(rng);
    const CoefficientVector c = CoefficientVector::from(order, theta);
    const InputSample next = random_sample(order->alphabet().m(), rng);
    const double want = evaluate(c, chen_step(state, next));
    worst = std::max(worst, relative_error(predict_next(c, state, next), want));
  }
  return worst;
}

/// Minimizer of Σ (y - φᵀθ)² + (θ - θ0)ᵀ P0⁻¹ (θ - θ0) by a dense solve.
inline Vector batch_least_squares(const std::vector<Vector>& phis, const std::vector<double>& ys, const Vector& theta0,
                                  const Matrix& p0) {
  const Matrix p0_inv = p0.llt().solve(Matrix::Identity(p0.rows(), p0.cols()));
  Matrix normal = p0_inv;
  Vector rhs = p0_inv * theta0;
  for (std::size_t i = 0; i < phis.size(); ++i) {
    normal.noalias() += phis[i] * phis[i].transpose();
    rhs += phis[i] * ys[i];
  }
  return normal.ldlt().solve(rhs);
}

struct RlsBatchCheck {
  double relative_error = 0.0;
  double max_asymmetry = 0.0;
};

/// Runs `steps` RLS updates (no resets) on random data and compares θ̂ to
/// the batch solution.
inline RlsBatchCheck rls_batch_check(std::size_t dim, std::size_t steps, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  // Any order vector of length `dim` will do; the regressors are synthetic.
  auto order = OrderVector::make(Alphabet::driftless(1), dim - 1);
  LearnerConfig cfg;
  cfg.reset_period = 0;
  LearnerState state = learner_init(cfg, order);

  std::vector<Vector> phis;
  std::vector<double> ys;
  RlsBatchCheck out;
  for (std::size_t i = 0; i < steps; ++i) {
    Vector phi(static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < phi.size(); ++k) phi[k] = normal(rng);
    const double y = normal(rng);
    rls_update_in_place(state, phi, y);
    out.max_asymmetry = std::max(out.max_asymmetry, detail::asymmetry(state.covariance));
    phis.push_back(std::move(phi));
    ys.push_back(y);
  }
  const Vector batch = batch_least_squares(phis, ys, Vector::Zero(static_cast<Eigen::Index>(dim)),
                                           Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
  out.relative_error = (state.theta.theta - batch).norm() / std::max(1e-300, batch.norm());
  return out;
}

}  // namespace chenflow::oracles
