// Decreasing-step estimate of E[x_1] for the 2-d oblique example (true value 0.5).
// usage: demo_oblique_2d [n] [alpha]

#include <cstdio>
#include <cstdlib>

#include "refsim/reference.hpp"
#include "refsim/scheme.hpp"

int main(int argc, char** argv) {
  using namespace refsim;
  const std::uint64_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 200'000;
  const double alpha = argc > 2 ? std::atof(argv[2]) : 0.5;

  const ProblemSpec spec = example_2d();
  WeightedMeasure nu(spec.dimension());
  Chain chain(spec, StepSchedule::power(1.0, alpha), NoiseModel::standard_normal(), {},
              initial_state(Vector{1.0, 1.0}, 1, 0));
  chain.attach(&nu);

  for (std::uint64_t k = 10; k <= n; k *= 10) {
    chain.run(k - chain.state().k);
    std::printf("n=%-10llu  nu_n(x1)=%.6f  nu_n(x2)=%.6f\n", static_cast<unsigned long long>(k), nu.mean(0),
                nu.mean(1));
  }
  if (chain.state().k < n) chain.run(n - chain.state().k);
  std::printf("final n=%llu  E[x1] estimate %.6f  (reference %.1f)\n", static_cast<unsigned long long>(n), nu.mean(0),
              example_2d_reference().value);
  return 0;
}
