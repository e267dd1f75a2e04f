// Simulate one scenario-(a) dataset, then compare the ATT from a maximum
// likelihood propensity fit with the power(2) fit.
#include <cstdio>

#include "nawt/nawt.hpp"

int main() {
  nawt::RngStream rng(7, 0);
  const auto sim = nawt::generate_main('a', 1000, rng);

  for (const auto& scheme : {nawt::WeightingScheme::mle(), nawt::WeightingScheme::power(2.0)}) {
    const auto fit = nawt::fit_nawt(sim.data, scheme);
    const auto est = nawt::estimate_att(sim.data, fit);
    const auto var = nawt::sandwich_att(sim.data, fit, est);
    std::printf("%-10s tau=%8.4f  se=%.4f  (truth %.1f, %d iterations)\n", scheme.name().c_str(), est.tau,
                var.se_tau, sim.true_tau, fit.iterations);
  }
}
