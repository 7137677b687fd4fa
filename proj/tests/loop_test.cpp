#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "chenflow/control.hpp"
#include "chenflow/optimize.hpp"
#include "chenflow/plant.hpp"

using namespace chenflow;

namespace {

const Vector kZ0{{0.4, 0.6}};

ReferenceTrajectory stock_reference(const DiscretizationConfig& disc = {}) {
  const LotkaVolterraParams nominal;
  const PlantModel plant = lv_model(nominal, LvActuation::both_betas, kZ0);
  const auto u = orbit_transfer_input(nominal, LvActuation::both_betas, kZ0, OrbitTransferDesign{}, disc);
  return make_reference(plant, u, disc, 2.0, "test");
}

double max_invariant_drift(const DiscretizationConfig& disc) {
  const LotkaVolterraParams p;
  const PlantModel model = lv_model(p, LvActuation::both_betas, kZ0);
  const std::vector<Vector> held(disc.samples, Vector::Ones(2));
  const Trajectory traj = integrate_held(model, held, disc);
  const double v0 = lv_invariant(p, kZ0);
  double drift = 0.0;
  for (const Vector& z : traj.z) drift = std::max(drift, std::abs(lv_invariant(p, z) - v0));
  return drift;
}

}  // namespace

// ---------------------------------------------------------------------------
// plant

TEST(Discretization, DefaultsAreTheStandardSimulationSettings) {
  const DiscretizationConfig d;
  EXPECT_EQ(d.samples, 100u);
  EXPECT_EQ(d.degree, 3u);
  EXPECT_EQ(d.horizon, 6.0);
  EXPECT_EQ(d.delta(), 0.06);
  EXPECT_EQ(d.epsilon, 0.05);
}

TEST(Discretization, RejectsDegenerateSettings) {
  DiscretizationConfig d;
  d.samples = 0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d = {};
  d.horizon = -1;
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d = {};
  d.substeps = 0;
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

TEST(Plant, ExponentialPlantClosedForm) {
  // u = cos t gives z = sin t, y = exp(sin t).
  const InputSignal u = [](double t) { return Vector{{std::cos(t)}}; };
  const Trajectory traj = integrate(exp_model(), u, DiscretizationConfig{});
  ASSERT_EQ(traj.t.size(), 101u);
  for (std::size_t n = 0; n < traj.t.size(); ++n) {
    EXPECT_NEAR(traj.z[n][0], std::sin(traj.t[n]), 1e-9);
    EXPECT_NEAR(traj.y[n][0], std::exp(std::sin(traj.t[n])), 1e-8);
  }
}

TEST(Plant, SimpsonAreasAreExactForCubics) {
  const InputSignal u = [](double t) { return Vector{{t * t * t - t, 2.0}}; };
  const DiscretizationConfig disc;
  const auto samples = discretize_input(u, 2, disc);
  ASSERT_EQ(samples.size(), 101u);
  EXPECT_EQ(samples[0].values(), Vector::Zero(3));
  const double d = disc.delta();
  for (std::size_t n = 1; n <= 100; ++n) {
    const double a = d * double(n - 1), b = d * double(n);
    EXPECT_DOUBLE_EQ(samples[n][0], d);
    // the closed form cancels terms of size b^4, so its own rounding scales with it
    EXPECT_NEAR(samples[n][1], (std::pow(b, 4) - std::pow(a, 4)) / 4 - (b * b - a * a) / 2, 1e-15 * std::max(1.0, std::pow(b, 4)));
    EXPECT_NEAR(samples[n][2], 2.0 * d, 1e-15);
  }
}

TEST(Plant, LotkaVolterraVectorFields) {
  LotkaVolterraParams p{1.5, 0.7, 0.9, 1.1};
  const Vector z{{0.8, 1.3}};
  const PlantModel both = lv_model(p, LvActuation::both_betas, z);
  const Vector dz = both.field(z, Vector{{0.9, 1.1}});
  EXPECT_NEAR(dz[0], 0.9 * 0.8 - 1.5 * 0.8 * 1.3, 1e-15);
  EXPECT_NEAR(dz[1], -1.1 * 1.3 + 0.7 * 0.8 * 1.3, 1e-15);
  EXPECT_EQ(both.drift(z), (Vector{{-1.5 * 0.8 * 1.3, 0.7 * 0.8 * 1.3}}));
  EXPECT_EQ(both.controls[0](z), (Vector{{0.8, 0.0}}));
  EXPECT_EQ(both.controls[1](z), (Vector{{0.0, -1.3}}));

  const PlantModel single = lv_model(p, LvActuation::beta1_only, z);
  EXPECT_EQ(single.input_dim, 1u);
  EXPECT_LE((single.field(z, Vector{{0.9}}) - dz).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(both.field(lv_equilibrium(p), Vector{{0.9, 1.1}}).norm(), 1e-15);
}

TEST(Plant, RejectsBadParameters) {
  EXPECT_THROW(lv_model(LotkaVolterraParams{0.0, 1, 1, 1}, LvActuation::both_betas, kZ0), std::invalid_argument);
  EXPECT_THROW(lv_model(LotkaVolterraParams{}, LvActuation::both_betas, Vector::Ones(3)), std::invalid_argument);
}

TEST(Plant, ConservedQuantityOverOneOrbit) {
  // The orbit through (0.4, 0.6) closes in well under 10 time units.
  DiscretizationConfig disc;
  disc.horizon = 9.96;
  disc.samples = 166;  // Δ = 0.06
  EXPECT_LE(max_invariant_drift(disc), 1e-6);
}

TEST(Plant, StatesStayPositive) {
  DiscretizationConfig disc;
  disc.horizon = 30.0;
  disc.samples = 500;
  const PlantModel model = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, Vector{{0.1, 3.0}});
  const Trajectory traj = integrate_held(model, std::vector<Vector>(500, Vector::Ones(2)), disc);
  for (const Vector& z : traj.z) EXPECT_TRUE((z.array() > 0.0).all());
}

TEST(Plant, RungeKuttaIsFourthOrder) {
  const PlantModel model = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, kZ0);
  const Vector u{{0.7, 1.2}};
  const Vector fine = advance_held(model, kZ0, u, 1.0, 4096);
  const double e1 = (advance_held(model, kZ0, u, 1.0, 8) - fine).norm();
  const double e2 = (advance_held(model, kZ0, u, 1.0, 16) - fine).norm();
  EXPECT_NEAR(std::log2(e1 / e2), 4.0, 0.3);
}

TEST(Plant, IntegrateHeldNeedsOneInputPerSample) {
  const PlantModel model = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, kZ0);
  EXPECT_THROW(integrate_held(model, std::vector<Vector>(99, Vector::Ones(2)), DiscretizationConfig{}),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// optimizer

TEST(BoxSearch, FindsInteriorVertexOfAQuadratic) {
  for (double c : {-1.3, -0.017, 0.0, 0.45, 1.99}) {
    auto cost = [c](const Vector& x) { return (x[0] - c) * (x[0] - c) + 0.5; };
    const BoxSearchResult r = minimize_in_box(cost, Vector{{-2.0}}, Vector{{2.0}}, BoxSearchConfig{});
    EXPECT_NEAR(r.x[0], c, 1e-4);
    EXPECT_LE(r.value, r.grid_best);
  }
}

TEST(BoxSearch, ClipsToTheBound) {
  auto cost = [](const Vector& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
  const BoxSearchResult r = minimize_in_box(cost, Vector{{-0.5}}, Vector{{0.5}}, BoxSearchConfig{});
  EXPECT_EQ(r.x[0], 0.5);
}

TEST(BoxSearch, CoupledQuadraticInTwoDimensions) {
  const Matrix h{{2.0, 0.6}, {0.6, 1.0}};
  const Vector center{{0.3, -0.7}};
  auto cost = [&](const Vector& x) { return (x - center).dot(h * (x - center)); };
  const BoxSearchResult r = minimize_in_box(cost, Vector::Constant(2, -1), Vector::Constant(2, 1), BoxSearchConfig{});
  EXPECT_LE((r.x - center).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_TRUE((r.x.array().abs() <= 1.0).all());
}

TEST(BoxSearch, TiesGoToTheLexicographicallySmallestPoint) {
  auto flat = [](const Vector&) { return 1.0; };
  const BoxSearchResult r = minimize_in_box(flat, Vector{{-1.0, -2.0}}, Vector{{1.0, 2.0}}, BoxSearchConfig{});
  EXPECT_EQ(r.x, (Vector{{-1.0, -2.0}}));
}

TEST(BoxSearch, NaNCostsNeverWin) {
  auto cost = [](const Vector& x) {
    return x[0] < 0 ? std::numeric_limits<double>::quiet_NaN() : (x[0] - 0.25) * (x[0] - 0.25);
  };
  const BoxSearchResult r = minimize_in_box(cost, Vector{{-1.0}}, Vector{{1.0}}, BoxSearchConfig{});
  EXPECT_NEAR(r.x[0], 0.25, 1e-4);
}

TEST(BoxSearch, IsDeterministic) {
  auto cost = [](const Vector& x) { return std::sin(3 * x[0]) * std::cos(2 * x[1]) + 0.1 * x.squaredNorm(); };
  const auto a = minimize_in_box(cost, Vector::Constant(2, -2), Vector::Constant(2, 2), BoxSearchConfig{});
  const auto b = minimize_in_box(cost, Vector::Constant(2, -2), Vector::Constant(2, 2), BoxSearchConfig{});
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(BoxSearch, RejectsBadBoxes) {
  auto cost = [](const Vector& x) { return x[0]; };
  EXPECT_THROW(minimize_in_box(cost, Vector{{1.0}}, Vector{{0.0}}, BoxSearchConfig{}), std::invalid_argument);
  BoxSearchConfig cfg;
  cfg.grid_points = 1;
  EXPECT_THROW(minimize_in_box(cost, Vector{{0.0}}, Vector{{1.0}}, cfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// controller

TEST(Controller, WeightMatrixValidation) {
  ControllerConfig cfg;
  EXPECT_NO_THROW(cfg.validate(2));
  cfg.weight = Matrix{{1, 0.25}, {0.25, 1}};
  EXPECT_NO_THROW(cfg.validate(2));
  EXPECT_THROW(cfg.validate(1), std::invalid_argument);
  cfg.weight = Matrix{{1, 0.25}, {0.0, 1}};
  EXPECT_THROW(cfg.validate(2), std::invalid_argument);
  cfg.weight = Matrix{{1, 2}, {2, 1}};
  EXPECT_THROW(cfg.validate(2), std::invalid_argument);
  cfg = {};
  cfg.u_bound = 0.0;
  EXPECT_THROW(cfg.validate(2), std::invalid_argument);
}

TEST(Controller, QuadraticCostReturnsClippedVertex) {
  // One learning channel, empty history, θ on e and x1 only:
  // ŷ = a + b·Δ·u, so the cost (y_d - ŷ)² has its vertex at (y_d - a)/(bΔ).
  const DiscretizationConfig disc;
  const auto order = OrderVector::make(Alphabet::with_drift(1), 2);
  const double a = 0.2, b = 5.0;
  Vector theta = Vector::Zero(7);
  theta[static_cast<Eigen::Index>(order->index_of(Word{}))] = a;
  theta[static_cast<Eigen::Index>(order->index_of(Word{1}))] = b;

  LoopState loop;
  loop.mode = LoopMode::model_free;
  loop.channels.push_back({0, chen_init(order, InputSample::zero(1)), learner_init(LearnerConfig{}, order)});
  loop.channels[0].learner.theta = CoefficientVector::from(order, theta);

  ControllerConfig cfg;
  cfg.weight = Matrix::Identity(1, 1);
  for (double yd : {0.2, 0.5, -0.3, 1.0, -5.0}) {
    const double vertex = (yd - a) / (b * disc.delta());
    const ControlDecision d = control_step(loop, nullptr, Vector{{yd}}, cfg, disc, 1);
    EXPECT_NEAR(d.u[0], std::clamp(vertex, -cfg.u_bound, cfg.u_bound), 1e-4) << "y_d = " << yd;
    EXPECT_LE(d.cost, d.grid_best);
    EXPECT_EQ(d.sample.values(), (Vector{{disc.delta(), d.u[0] * disc.delta()}}));
  }
}

TEST(Reference, OrbitTransferReachesTheTargetLevel) {
  const DiscretizationConfig disc;
  const LotkaVolterraParams nominal;
  const OrbitTransferDesign design;
  const ReferenceTrajectory ref = stock_reference(disc);
  ASSERT_EQ(ref.length(), 100u);
  const double target = orbit_target_level(nominal, LvActuation::both_betas, kZ0, design);
  const double reached = lv_invariant(orbit_params(nominal, LvActuation::both_betas, design), ref.outputs.back());
  EXPECT_LE(std::abs(reached - target), disc.epsilon);
  for (const Vector& u : ref.inputs) EXPECT_LE(u.cwiseAbs().maxCoeff(), 0.5);
  for (const Vector& y : ref.outputs) EXPECT_TRUE((y.array() > 0.0).all());
}

TEST(Reference, RejectsInputsBeyondTheBound) {
  const DiscretizationConfig disc;
  const PlantModel plant = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, kZ0);
  const std::vector<Vector> u(100, Vector::Constant(2, 0.6));
  EXPECT_THROW(make_reference(plant, u, disc, 0.5, "too big"), std::invalid_argument);
}

TEST(ClosedLoop, ExactModelTracksAndRespectsBounds) {
  const DiscretizationConfig disc;
  const PlantModel plant = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, kZ0);
  const ReferenceTrajectory ref = stock_reference(disc);
  const ControllerConfig cfg;
  const RunReport run = closed_loop_run(plant, &plant, ref, cfg, disc, LoopOptions{});
  ASSERT_FALSE(run.aborted_at.has_value());
  ASSERT_EQ(run.rows.size(), 100u);
  for (const RunRow& row : run.rows) {
    EXPECT_LE(row.u.cwiseAbs().maxCoeff(), cfg.u_bound);
    EXPECT_LE(row.cost, row.grid_best);
    EXPECT_LE(row.error.cwiseAbs().maxCoeff(), 1e-12);  // no modeling error to learn
  }
  const TrackingMetrics m = rms_report(run, ref);
  EXPECT_LE(m.normalized_rms.maxCoeff(), 1e-3);
}

TEST(ClosedLoop, RunsAreBitwiseReproducible) {
  const DiscretizationConfig disc;
  const PlantModel plant = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, kZ0);
  const PlantModel model = lv_model(LotkaVolterraParams{1.0, 1.2, 1, 1}, LvActuation::both_betas, kZ0);
  const ReferenceTrajectory ref = stock_reference(disc);
  ControllerConfig cfg;
  cfg.u_bound = 0.5;
  const RunReport a = closed_loop_run(plant, &model, ref, cfg, disc, LoopOptions{});
  const RunReport b = closed_loop_run(plant, &model, ref, cfg, disc, LoopOptions{});
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].u, b.rows[i].u);
    EXPECT_EQ(a.rows[i].y, b.rows[i].y);
    EXPECT_EQ(a.rows[i].theta_norm, b.rows[i].theta_norm);
  }
}

TEST(ClosedLoop, LearningOffKeepsTheEstimateAtZero) {
  DiscretizationConfig disc;
  disc.samples = 20;
  disc.horizon = 1.2;
  const PlantModel plant = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, kZ0);
  const PlantModel model = lv_model(LotkaVolterraParams{1.2, 1, 1, 1}, LvActuation::both_betas, kZ0);
  const ReferenceTrajectory ref = stock_reference(disc);
  LoopOptions options;
  options.learning = false;
  ControllerConfig cfg;
  cfg.u_bound = 0.5;
  const RunReport run = closed_loop_run(plant, &model, ref, cfg, disc, options);
  for (const RunRow& row : run.rows) {
    EXPECT_EQ(row.theta_norm, Vector::Zero(2));
    EXPECT_EQ(row.predicted, Vector::Zero(2));
  }
}

TEST(ClosedLoop, SingleChannelConfiguration) {
  DiscretizationConfig disc;
  disc.samples = 20;
  disc.horizon = 1.2;
  const LotkaVolterraParams nominal;
  const PlantModel plant = lv_model(nominal, LvActuation::beta1_only, kZ0);
  OrbitTransferDesign design;
  design.base = Vector{{1.0}};
  design.max_deviation = 0.2;
  const auto u = orbit_transfer_input(nominal, LvActuation::beta1_only, kZ0, design, disc);
  const ReferenceTrajectory ref = make_reference(plant, u, disc, 1.4, "siso");
  LoopOptions options;
  options.tracked = {1};
  ControllerConfig cfg;
  cfg.u_bound = 1.4;
  cfg.weight = Matrix::Identity(1, 1);
  const RunReport run = closed_loop_run(plant, &plant, ref, cfg, disc, options);
  ASSERT_EQ(run.rows.size(), 20u);
  EXPECT_EQ(run.rows.front().error.size(), 1);
  EXPECT_EQ(run.rows.front().u.size(), 1);
  EXPECT_TRUE(std::isfinite(rms_report(run, ref).normalized_rms[1]));
}

TEST(ClosedLoop, ArgumentChecks) {
  const DiscretizationConfig disc;
  const PlantModel plant = lv_model(LotkaVolterraParams{}, LvActuation::both_betas, kZ0);
  const ReferenceTrajectory ref = stock_reference(disc);
  EXPECT_THROW(closed_loop_run(plant, nullptr, ref, ControllerConfig{}, disc, LoopOptions{}), std::invalid_argument);
  LoopOptions bad;
  bad.tracked = {0, 2};
  EXPECT_THROW(closed_loop_run(plant, &plant, ref, ControllerConfig{}, disc, bad), std::invalid_argument);
  DiscretizationConfig shorter = disc;
  shorter.samples = 50;
  EXPECT_THROW(closed_loop_run(plant, &plant, ref, ControllerConfig{}, shorter, LoopOptions{}), std::invalid_argument);
}

TEST(ClosedLoop, FiniteEscapeIsReportedNotThrown) {
  // ż = z² + u from z = 1 escapes at t = 1 whatever the bounded input does.
  PlantModel plant;
  plant.name = "escape";
  plant.state_dim = plant.input_dim = plant.output_dim = 1;
  plant.z0 = Vector::Ones(1);
  plant.drift = [](const Vector& z) { return Vector{{z[0] * z[0]}}; };
  plant.controls.push_back([](const Vector&) { return Vector::Ones(1).eval(); });
  plant.output = [](const Vector& z) { return z; };

  DiscretizationConfig disc;
  ReferenceTrajectory ref;
  ref.outputs.assign(101, Vector::Ones(1));
  ControllerConfig cfg;
  cfg.u_bound = 0.1;
  cfg.weight = Matrix::Identity(1, 1);
  LoopOptions options;
  options.mode = LoopMode::model_free;
  options.tracked = {0};
  const RunReport run = closed_loop_run(plant, nullptr, ref, cfg, disc, options);
  ASSERT_TRUE(run.aborted_at.has_value());
  EXPECT_LT(*run.aborted_at, 100u);
  EXPECT_EQ(run.rows.size() + 1, *run.aborted_at);
}

TEST(Metrics, NormalizedRmsAndZeroReferenceGuard) {
  RunReport run;
  ReferenceTrajectory ref;
  ref.outputs = {Vector{{1.0, 2.0}}, Vector{{2.0, 4.0}}, Vector{{1.0, 1.0}}};
  RunRow r1;
  r1.n = 1;
  r1.y = Vector{{2.2, 4.0}};
  r1.u = Vector{{0.3, -0.9}};
  RunRow r2;
  r2.n = 2;
  r2.y = Vector{{0.9, 1.0}};
  r2.u = Vector{{0.1, 0.2}};
  run.rows = {r1, r2};
  const TrackingMetrics m = rms_report(run, ref);
  EXPECT_NEAR(m.normalized_rms[0], std::sqrt((0.01 + 0.01) / 2), 1e-15);
  EXPECT_EQ(m.normalized_rms[1], 0.0);
  EXPECT_EQ(m.u_inf, 0.9);
  ref.outputs[2][1] = 0.0;
  EXPECT_THROW(rms_report(run, ref), std::domain_error);
}
