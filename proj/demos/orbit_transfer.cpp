// Predator-prey orbit transfer with a model whose α21 is 20% too large,
// with and without the learning units compensating the error.

#include <cstdio>

#include "chenflow/control.hpp"

using namespace chenflow;

int main() {
  const DiscretizationConfig disc;
  const LotkaVolterraParams nominal;
  const Vector z0{{0.4, 0.6}};
  const OrbitTransferDesign design;  // pump both β's around 0.4

  const PlantModel plant = lv_model(nominal, LvActuation::both_betas, z0);
  const auto u_ref = orbit_transfer_input(nominal, LvActuation::both_betas, z0, design, disc);
  const ReferenceTrajectory reference = make_reference(plant, u_ref, disc, 0.5, "orbit transfer");

  LotkaVolterraParams wrong = nominal;
  wrong.alpha21 = 1.2;
  const PlantModel model = lv_model(wrong, LvActuation::both_betas, z0);

  ControllerConfig controller;
  controller.u_bound = 0.5;

  for (bool learning : {false, true}) {
    LoopOptions options;
    options.learning = learning;
    const RunReport run = closed_loop_run(plant, &model, reference, controller, disc, options);
    const TrackingMetrics m = rms_report(run, reference);
    std::printf("learning %-3s  dy1 = %.4f  dy2 = %.4f  |u|_inf = %.3f\n", learning ? "on" : "off",
                m.normalized_rms[0], m.normalized_rms[1], m.u_inf);
  }

  const Vector& end = reference.outputs.back();
  std::printf("target orbit level %.5f, reference ends at V = %.5f\n",
              orbit_target_level(nominal, LvActuation::both_betas, z0, design),
              lv_invariant(orbit_params(nominal, LvActuation::both_betas, design), end));
}
