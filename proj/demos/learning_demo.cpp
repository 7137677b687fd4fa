// Learn the exponential plant ż = u, y = e^z from input/output samples alone
// and print the one-step predictions next to the true output.

#include <cmath>
#include <cstdio>
#include <numbers>

#include "chenflow/learner.hpp"
#include "chenflow/plant.hpp"

using namespace chenflow;

int main() {
  const DiscretizationConfig disc;  // T = 6, L = 100, J = 3
  const InputSignal u = [](double t) {
    return Vector{{2.0 * std::exp(-t / 3.0) * std::sin(2.0 * std::numbers::pi * t)}};
  };

  const Trajectory truth = integrate(exp_model(), u, disc);
  const auto samples = discretize_input(u, 1, disc);

  const auto order = OrderVector::make(Alphabet::driftless(1), disc.degree);
  ChenState chen = chen_init(order, samples[0]);
  LearnerState learner = learner_init(LearnerConfig{}, order);

  std::printf("%6s %10s %10s %10s\n", "t", "y", "yhat_p", "error");
  for (std::size_t n = 1; n <= disc.samples; ++n) {
    chen.advance(samples[n]);
    const double y = truth.y[n][0];
    const LearnStep step = learn_step_in_place(learner, chen, y);
    if (n % 5 == 0) std::printf("%6.2f %10.5f %10.5f %10.2e\n", truth.t[n], y, step.predicted, step.innovation);
  }

  std::printf("\nlearned coefficients (true series has all ones):\n");
  for (std::size_t j = 0; j < order->size(); ++j)
    std::printf("  %-8s %9.5f\n", to_string((*order)[j]).c_str(), learner.theta.theta[static_cast<Eigen::Index>(j)]);
}
