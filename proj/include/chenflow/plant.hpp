#pragma once

// Continuous-time truth models  ż = g_0(z) + Σ g_i(z) u_i,  y = h(z),
// a fixed-step RK4 integrator, and the sampler that turns u(t) into input
// areas û(N) = ∫_{(N-1)Δ}^{NΔ} u dt.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chenflow/chen.hpp"

namespace chenflow {

struct DiscretizationConfig {
  double horizon = 6.0;     // T
  std::size_t samples = 100;  // L
  std::size_t degree = 3;   // J
  double epsilon = 0.05;    // orbit tolerance
  std::size_t substeps = 10;  // RK4 / Simpson substeps per Δ

  double delta() const { return horizon / static_cast<double>(samples); }

  void validate() const {
    if (samples == 0) throw std::invalid_argument("discretization: L must be >= 1");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("discretization: T must be positive");
    if (substeps == 0) throw std::invalid_argument("discretization: substeps must be >= 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("discretization: epsilon must be positive");
  }

  bool operator==(const DiscretizationConfig&) const = default;
};

using VectorField = std::function<Vector(const Vector&)>;
using InputSignal = std::function<Vector(double)>;

struct PlantModel {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  VectorField drift;
  std::vector<VectorField> controls;
  VectorField output;
  Vector z0;

  Vector field(const Vector& z, const Vector& u) const {
    Vector dz = drift(z);
    for (std::size_t i = 0; i < controls.size(); ++i) dz += controls[i](z) * u[static_cast<Eigen::Index>(i)];
    return dz;
  }

  Vector observe(const Vector& z) const { return output(z); }
};

/// Raised when the state leaves the finite reals; carries the sample index.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::size_t sample, const std::string& what)
      : std::runtime_error(what + " at sample " + std::to_string(sample)), sample_(sample) {}
  std::size_t sample() const { return sample_; }

 private:
  std::size_t sample_;
};

/// Classical RK4 over [t0, t0 + span] in `substeps` equal steps; `u(t)` is
/// sampled at the usual stage times.
template <class Input>
Vector rk4_advance(const PlantModel& model, Vector z, Input&& u, double t0, double span, std::size_t substeps) {
  const double h = span / static_cast<double>(substeps);
  for (std::size_t s = 0; s < substeps; ++s) {
    const double t = t0 + h * static_cast<double>(s);
    const Vector u0 = u(t), um = u(t + 0.5 * h), u1 = u(t + h);
    const Vector k1 = model.field(z, u0);
    const Vector k2 = model.field(z + 0.5 * h * k1, um);
    const Vector k3 = model.field(z + 0.5 * h * k2, um);
    const Vector k4 = model.field(z + h * k3, u1);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return z;
}

/// One sample interval under a held (zero-order-hold) input.
inline Vector advance_held(const PlantModel& model, const Vector& z, const Vector& u, double span,
                           std::size_t substeps) {
  const double h = span / static_cast<double>(substeps);
  Vector x = z;
  for (std::size_t s = 0; s < substeps; ++s) {
    const Vector k1 = model.field(x, u);
    const Vector k2 = model.field(x + 0.5 * h * k1, u);
    const Vector k3 = model.field(x + 0.5 * h * k2, u);
    const Vector k4 = model.field(x + h * k3, u);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

/// Samples at t_N = NΔ, N = 0..L. `u[N]` is the input in effect on
/// ((N-1)Δ, NΔ]; u[0] is the value at t = 0 for continuous signals and zero
/// for held inputs.
struct Trajectory {
  std::vector<double> t;
  std::vector<Vector> z;
  std::vector<Vector> y;
  std::vector<Vector> u;
};

namespace detail {

inline void record(Trajectory& traj, const PlantModel& model, double t, const Vector& z, Vector u) {
  traj.t.push_back(t);
  traj.z.push_back(z);
  traj.y.push_back(model.observe(z));
  traj.u.push_back(std::move(u));
}

inline void check_finite(const Vector& z, std::size_t n) {
  if (!z.allFinite()) throw SimulationError(n, "non-finite state");
}

}  // namespace detail

inline Trajectory integrate(const PlantModel& model, const InputSignal& u, const DiscretizationConfig& disc) {
  disc.validate();
  const double delta = disc.delta();
  Trajectory traj;
  Vector z = model.z0;
  detail::record(traj, model, 0.0, z, u(0.0));
  for (std::size_t n = 1; n <= disc.samples; ++n) {
    const double t0 = delta * static_cast<double>(n - 1);
    z = rk4_advance(model, std::move(z), u, t0, delta, disc.substeps);
    detail::check_finite(z, n);
    const double t = delta * static_cast<double>(n);
    detail::record(traj, model, t, z, u(t));
  }
  return traj;
}

/// `held[N-1]` is applied on ((N-1)Δ, NΔ]; needs exactly L entries.
inline Trajectory integrate_held(const PlantModel& model, std::span<const Vector> held,
                                 const DiscretizationConfig& disc) {
  disc.validate();
  if (held.size() != disc.samples) throw std::invalid_argument("integrate_held: need one held input per sample");
  const double delta = disc.delta();
  Trajectory traj;
  Vector z = model.z0;
  detail::record(traj, model, 0.0, z, Vector::Zero(static_cast<Eigen::Index>(model.input_dim)));
  for (std::size_t n = 1; n <= disc.samples; ++n) {
    z = advance_held(model, z, held[n - 1], delta, disc.substeps);
    detail::check_finite(z, n);
    detail::record(traj, model, delta * static_cast<double>(n), z, held[n - 1]);
  }
  return traj;
}

/// û(N) for N = 0..L with û_0(N) = Δ and û_i(N) by composite Simpson over the
/// integrator's substeps. Entry 0 is the all-zero sample: sampling starts at
/// N = 1, and Π(S[û](0)) = I.
inline std::vector<InputSample> discretize_input(const InputSignal& u, std::size_t input_dim,
                                                 const DiscretizationConfig& disc) {
  disc.validate();
  const double delta = disc.delta();
  const double h = delta / static_cast<double>(disc.substeps);
  std::vector<InputSample> out;
  out.reserve(disc.samples + 1);
  out.push_back(InputSample::zero(input_dim));
  for (std::size_t n = 1; n <= disc.samples; ++n) {
    const double t0 = delta * static_cast<double>(n - 1);
    Vector area = Vector::Zero(static_cast<Eigen::Index>(input_dim));
    for (std::size_t s = 0; s < disc.substeps; ++s) {
      const double a = t0 + h * static_cast<double>(s);
      area += (h / 6.0) * (u(a) + 4.0 * u(a + 0.5 * h) + u(a + h));
    }
    Vector v(area.size() + 1);
    v[0] = delta;
    v.tail(area.size()) = area;
    out.emplace_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lotka-Volterra predator-prey
//   ż1 = β1 z1 - α12 z1 z2,   ż2 = -β2 z2 + α21 z1 z2,   y = z.

struct LotkaVolterraParams {
  double alpha12 = 1.0;
  double alpha21 = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;

  void validate() const {
    if (!(alpha12 > 0.0) || !(alpha21 > 0.0)) throw std::invalid_argument("Lotka-Volterra: alpha must be positive");
    if (!std::isfinite(beta1) || !std::isfinite(beta2)) throw std::invalid_argument("Lotka-Volterra: beta not finite");
  }

  bool operator==(const LotkaVolterraParams&) const = default;
};

enum class LvActuation {
  both_betas,  // u1 = β1, u2 = β2
  beta1_only,  // u1 = β1, β2 fixed
};

inline PlantModel lv_model(const LotkaVolterraParams& p, LvActuation actuation, Vector z0) {
  p.validate();
  if (z0.size() != 2) throw std::invalid_argument("Lotka-Volterra: initial state must have 2 entries");
  PlantModel model;
  model.name = "lotka_volterra";
  model.state_dim = 2;
  model.output_dim = 2;
  model.z0 = std::move(z0);
  model.output = [](const Vector& z) { return z; };
  model.controls.push_back([](const Vector& z) { return Vector{{z[0], 0.0}}; });
  if (actuation == LvActuation::both_betas) {
    model.input_dim = 2;
    model.drift = [a12 = p.alpha12, a21 = p.alpha21](const Vector& z) {
      return Vector{{-a12 * z[0] * z[1], a21 * z[0] * z[1]}};
    };
    model.controls.push_back([](const Vector& z) { return Vector{{0.0, -z[1]}}; });
  } else {
    model.input_dim = 1;
    model.drift = [a12 = p.alpha12, a21 = p.alpha21, b2 = p.beta2](const Vector& z) {
      return Vector{{-a12 * z[0] * z[1], -b2 * z[1] + a21 * z[0] * z[1]}};
    };
  }
  return model;
}

/// Center (β2/α21, β1/α12).
inline Vector lv_equilibrium(const LotkaVolterraParams& p) { return Vector{{p.beta2 / p.alpha21, p.beta1 / p.alpha12}}; }

/// V(z) = α21 z1 - β2 ln z1 + α12 z2 - β1 ln z2, constant along orbits when
/// the β's are held fixed.
inline double lv_invariant(const LotkaVolterraParams& p, const Vector& z) {
  return p.alpha21 * z[0] - p.beta2 * std::log(z[0]) + p.alpha12 * z[1] - p.beta1 * std::log(z[1]);
}

// ---------------------------------------------------------------------------
// ż = u, z(0) = 0, y = exp(z): generating series c = Σ x1^k.

inline PlantModel exp_model() {
  PlantModel model;
  model.name = "exponential";
  model.state_dim = 1;
  model.input_dim = 1;
  model.output_dim = 1;
  model.z0 = Vector::Zero(1);
  model.drift = [](const Vector&) { return Vector::Zero(1).eval(); };
  model.controls.push_back([](const Vector&) { return Vector::Ones(1).eval(); });
  model.output = [](const Vector& z) { return Vector{{std::exp(z[0])}}; };
  return model;
}

}  // namespace chenflow
