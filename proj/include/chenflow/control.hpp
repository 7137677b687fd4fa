#pragma once

// One-step-ahead predictive control with Chen-Fliess learning units.
//
// At every sample the controller picks the held input u with |u_i| <= ū that
// minimizes  y_eᵀ W y_e,  y_e = y_d((N+1)Δ) - [ŷ((N+1)Δ; u) + Q(û)], where ŷ
// is the physical model integrated one step under the candidate and Q is each
// learning unit's prediction of the modeling error. After actuation every
// unit absorbs û(N+1) and learns from e = y - ŷ.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "chenflow/chen.hpp"
#include "chenflow/learner.hpp"
#include "chenflow/optimize.hpp"
#include "chenflow/plant.hpp"

namespace chenflow {

struct ControllerConfig {
  double u_bound = 2.0;
  Matrix weight = Matrix::Identity(2, 2);
  BoxSearchConfig search;

  void validate(std::size_t channels) const {
    if (!(u_bound > 0.0) || !std::isfinite(u_bound)) throw std::invalid_argument("controller: u_bound must be positive");
    if (weight.rows() != static_cast<Eigen::Index>(channels) || weight.cols() != weight.rows())
      throw std::invalid_argument("controller: W must be " + std::to_string(channels) + "x" + std::to_string(channels));
    if ((weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("controller: W must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(weight);
    if (eig.eigenvalues().minCoeff() < -1e-12) throw std::invalid_argument("controller: W must be positive semi-definite");
    search.validate();
  }
};

enum class LoopMode { with_model, model_free };

/// y_d(NΔ) for N = 0..L (entry 0 is the initial output) plus the held
/// reference input that produced it.
struct ReferenceTrajectory {
  std::vector<Vector> outputs;
  std::vector<Vector> inputs;  // inputs[N-1] held on ((N-1)Δ, NΔ]
  std::string provenance;

  std::size_t length() const { return outputs.empty() ? 0 : outputs.size() - 1; }
  const Vector& at(std::size_t n) const { return outputs.at(n); }
};

inline ReferenceTrajectory make_reference(const PlantModel& model, std::span<const Vector> u_ref,
                                          const DiscretizationConfig& disc, double u_bound, std::string provenance) {
  for (const Vector& u : u_ref) {
    if (u.size() != static_cast<Eigen::Index>(model.input_dim))
      throw std::invalid_argument("make_reference: reference input has wrong dimension");
    if (u.cwiseAbs().maxCoeff() > u_bound) throw std::invalid_argument("make_reference: reference input exceeds bound");
  }
  Trajectory traj = integrate_held(model, u_ref, disc);
  ReferenceTrajectory ref;
  ref.outputs = std::move(traj.y);
  ref.inputs.assign(u_ref.begin(), u_ref.end());
  ref.provenance = std::move(provenance);
  return ref;
}

/// Designer input for the stock orbit transfer: hold `base` (β's of the
/// initial orbit family) and add the energy-raising correction
///   δ1 = k (α21 z1 - β2),  δ2 = -k (α12 z2 - β1)
/// (clipped to ±max_deviation) until V has risen by `level_increase`; then
/// hold `base` again so the system coasts on the target orbit.
struct OrbitTransferDesign {
  Vector base = Vector{{0.4, 0.4}};
  double gain = 1.0;
  double max_deviation = 0.08;
  double level_increase = 0.1;

  bool operator==(const OrbitTransferDesign&) const = default;
};

/// Parameters whose conserved quantity labels the orbits of the design.
inline LotkaVolterraParams orbit_params(const LotkaVolterraParams& nominal, LvActuation actuation,
                                        const OrbitTransferDesign& design) {
  LotkaVolterraParams p = nominal;
  p.beta1 = design.base[0];
  if (actuation == LvActuation::both_betas) p.beta2 = design.base[1];
  return p;
}

inline double orbit_target_level(const LotkaVolterraParams& nominal, LvActuation actuation, const Vector& z0,
                                 const OrbitTransferDesign& design) {
  return lv_invariant(orbit_params(nominal, actuation, design), z0) + design.level_increase;
}

inline std::vector<Vector> orbit_transfer_input(const LotkaVolterraParams& nominal, LvActuation actuation,
                                                const Vector& z0, const OrbitTransferDesign& design,
                                                const DiscretizationConfig& disc) {
  disc.validate();
  const std::size_t inputs = actuation == LvActuation::both_betas ? 2 : 1;
  if (static_cast<std::size_t>(design.base.size()) != inputs)
    throw std::invalid_argument("orbit transfer: base input has wrong dimension");
  const LotkaVolterraParams level = orbit_params(nominal, actuation, design);
  const double target = orbit_target_level(nominal, actuation, z0, design);
  const PlantModel model = lv_model(nominal, actuation, z0);

  std::vector<Vector> out;
  out.reserve(disc.samples);
  Vector z = z0;
  for (std::size_t n = 0; n < disc.samples; ++n) {
    Vector u = design.base;
    if (lv_invariant(level, z) < target) {
      const double d1 = design.gain * (level.alpha21 * z[0] - level.beta2);
      u[0] += std::clamp(d1, -design.max_deviation, design.max_deviation);
      if (inputs == 2) {
        const double d2 = -design.gain * (level.alpha12 * z[1] - level.beta1);
        u[1] += std::clamp(d2, -design.max_deviation, design.max_deviation);
      }
    }
    z = advance_held(model, z, u, disc.delta(), disc.substeps);
    out.push_back(std::move(u));
  }
  return out;
}

/// One Chen state + learner per tracked output channel.
struct LearningChannel {
  std::size_t output = 0;
  ChenState chen;
  LearnerState learner;
};

struct LoopState {
  Vector plant_state;
  Vector model_state;
  std::vector<LearningChannel> channels;
  std::size_t n = 0;
  LoopMode mode = LoopMode::with_model;
};

struct ControlDecision {
  Vector u;             // held input value, |u_i| <= ū
  InputSample sample;   // û(N+1) = [Δ, u Δ]
  double cost = 0.0;
  double grid_best = 0.0;
  std::size_t evaluations = 0;
};

/// Chooses û(N+1) given y_d((N+1)Δ). `model` is ignored in model-free mode.
inline ControlDecision control_step(const LoopState& loop, const PlantModel* model, const Vector& y_desired,
                                    const ControllerConfig& cfg, const DiscretizationConfig& disc,
                                    std::size_t input_dim) {
  const auto k = static_cast<Eigen::Index>(loop.channels.size());
  const double delta = disc.delta();
  const bool use_model = loop.mode == LoopMode::with_model;
  if (use_model && model == nullptr) throw std::invalid_argument("control_step: model required in with-model mode");

  Vector target(k);
  for (Eigen::Index c = 0; c < k; ++c) target[c] = y_desired[static_cast<Eigen::Index>(loop.channels[static_cast<std::size_t>(c)].output)];

  auto cost = [&](const Vector& u) {
    const InputSample sample = InputSample::held(delta, u);
    Vector predicted = Vector::Zero(k);
    if (use_model) {
      const Vector y_model = model->observe(advance_held(*model, loop.model_state, u, delta, disc.substeps));
      for (Eigen::Index c = 0; c < k; ++c)
        predicted[c] = y_model[static_cast<Eigen::Index>(loop.channels[static_cast<std::size_t>(c)].output)];
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      const LearningChannel& ch = loop.channels[static_cast<std::size_t>(c)];
      predicted[c] += predict_next(ch.learner.theta, ch.chen, sample);
    }
    const Vector err = target - predicted;
    const double value = err.dot(cfg.weight * err);
    return std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
  };

  const Vector bound = Vector::Constant(static_cast<Eigen::Index>(input_dim), cfg.u_bound);
  BoxSearchResult found = minimize_in_box(cost, -bound, bound, cfg.search);

  ControlDecision out;
  out.u = std::move(found.x);
  out.sample = InputSample::held(delta, out.u);
  out.cost = found.value;
  out.grid_best = found.grid_best;
  out.evaluations = found.evaluations;
  return out;
}

struct LoopOptions {
  LoopMode mode = LoopMode::with_model;
  bool learning = true;  // false freezes θ̂ at its initial value
  LearnerConfig learner;
  std::vector<std::size_t> tracked = {0, 1};
};

struct RunRow {
  std::size_t n = 0;
  double t = 0.0;
  Vector y_desired;   // all outputs
  Vector y;           // plant outputs
  Vector y_model;     // model outputs (zero in model-free mode)
  Vector error;       // per channel: e = y - ŷ
  Vector predicted;   // per channel: ŷ_p(N) = φᵀ(N) θ̂(N-1)
  Vector innovation;  // per channel: e - ŷ_p
  Vector theta_norm;  // per channel: ‖θ̂(N)‖
  Vector u;           // held input on ((N-1)Δ, NΔ]
  double cost = 0.0;
  double grid_best = 0.0;
};

struct RunReport {
  std::vector<RunRow> rows;  // N = 1..L (fewer if aborted)
  std::vector<std::size_t> tracked;
  Vector initial_output;
  double delta = 0.0;
  std::optional<std::size_t> aborted_at;
  std::string abort_reason;
};

inline RunReport closed_loop_run(const PlantModel& plant, const PlantModel* model, const ReferenceTrajectory& reference,
                                 const ControllerConfig& cfg, const DiscretizationConfig& disc,
                                 const LoopOptions& options) {
  disc.validate();
  cfg.validate(options.tracked.size());
  if (reference.length() != disc.samples) throw std::invalid_argument("closed_loop_run: reference must have L samples");
  const bool use_model = options.mode == LoopMode::with_model;
  if (use_model) {
    if (model == nullptr) throw std::invalid_argument("closed_loop_run: model required in with-model mode");
    if (model->state_dim != plant.state_dim || model->input_dim != plant.input_dim ||
        model->output_dim != plant.output_dim)
      throw std::invalid_argument("closed_loop_run: plant and model dimensions differ");
  }
  for (std::size_t out : options.tracked)
    if (out >= plant.output_dim) throw std::invalid_argument("closed_loop_run: tracked output out of range");

  const double delta = disc.delta();
  const auto order = OrderVector::make(Alphabet::with_drift(plant.input_dim), disc.degree);

  LoopState loop;
  loop.mode = options.mode;
  loop.plant_state = plant.z0;
  loop.model_state = use_model ? model->z0 : Vector();
  for (std::size_t out : options.tracked) {
    loop.channels.push_back({out, chen_init(order, InputSample::zero(plant.input_dim)),
                             learner_init(options.learner, order)});
  }

  RunReport report;
  report.tracked = options.tracked;
  report.initial_output = plant.observe(plant.z0);
  report.delta = delta;
  const auto k = static_cast<Eigen::Index>(loop.channels.size());

  for (std::size_t n = 1; n <= disc.samples; ++n) {
    const Vector& y_desired = reference.at(n);
    ControlDecision decision = control_step(loop, model, y_desired, cfg, disc, plant.input_dim);

    Vector next_plant = advance_held(plant, loop.plant_state, decision.u, delta, disc.substeps);
    if (!next_plant.allFinite()) {
      report.aborted_at = n;
      report.abort_reason = "plant state became non-finite";
      break;
    }
    loop.plant_state = std::move(next_plant);
    const Vector y = plant.observe(loop.plant_state);
    Vector y_model = Vector::Zero(y.size());
    if (use_model) {
      loop.model_state = advance_held(*model, loop.model_state, decision.u, delta, disc.substeps);
      y_model = model->observe(loop.model_state);
    }

    RunRow row;
    row.n = n;
    row.t = delta * static_cast<double>(n);
    row.y_desired = y_desired;
    row.y = y;
    row.y_model = y_model;
    row.error.resize(k);
    row.predicted.resize(k);
    row.innovation.resize(k);
    row.theta_norm.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) {
      LearningChannel& ch = loop.channels[static_cast<std::size_t>(c)];
      const auto out = static_cast<Eigen::Index>(ch.output);
      const double e = y[out] - y_model[out];
      ch.chen.advance(decision.sample);
      LearnStep step;
      if (options.learning) {
        step = learn_step_in_place(ch.learner, ch.chen, e);
      } else {
        step.predicted = evaluate(ch.learner.theta, ch.chen);
        step.innovation = e - step.predicted;
      }
      row.error[c] = e;
      row.predicted[c] = step.predicted;
      row.innovation[c] = step.innovation;
      row.theta_norm[c] = ch.learner.theta.theta.norm();
    }
    row.u = decision.u;
    row.cost = decision.cost;
    row.grid_best = decision.grid_best;
    report.rows.push_back(std::move(row));
    loop.n = n;
  }
  return report;
}

struct TrackingMetrics {
  Vector normalized_rms;  // δy_i, one per plant output
  double u_inf = 0.0;     // max |u_i| over the run
};

/// δy_i = sqrt( (1/L) Σ ((y_i - y_d,i) / y_d,i)^2 ) over the recorded samples.
inline TrackingMetrics rms_report(const RunReport& run, const ReferenceTrajectory& reference) {
  if (run.rows.empty()) throw std::invalid_argument("rms_report: empty run");
  const Eigen::Index outputs = run.rows.front().y.size();
  TrackingMetrics m;
  m.normalized_rms = Vector::Zero(outputs);
  for (const RunRow& row : run.rows) {
    const Vector& yd = reference.at(row.n);
    for (Eigen::Index i = 0; i < outputs; ++i) {
      if (yd[i] == 0.0) throw std::domain_error("rms_report: zero reference sample at N=" + std::to_string(row.n));
      const double rel = (row.y[i] - yd[i]) / yd[i];
      m.normalized_rms[i] += rel * rel;
    }
    m.u_inf = std::max(m.u_inf, row.u.cwiseAbs().maxCoeff());
  }
  m.normalized_rms = (m.normalized_rms / static_cast<double>(run.rows.size())).cwiseSqrt();
  return m;
}

}  // namespace chenflow
