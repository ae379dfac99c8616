// 3-d product-form example: empirical coordinate marginals against the
// exponential rates 2 alpha with alpha = -R^{-1} b (R + R^T = 2 I here).
// usage: demo_product_form [n]

#include <cstdio>
#include <cstdlib>

#include "refsim/reference.hpp"
#include "refsim/scheme.hpp"

int main(int argc, char** argv) {
  using namespace refsim;
  const std::uint64_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1'000'000;

  const ProblemSpec spec = example_3d();
  const Vector alpha = solve_linear(spec.reflection(), -1.0 * spec.drift().constant_value());
  WeightedMeasure nu(spec.dimension());
  Chain chain(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {},
              initial_state(Vector(3, 1.0), 1, 0));
  chain.attach(&nu);
  chain.run(n);

  const ReferenceLaw tabulated = example_3d_reference();
  std::printf("coord  mean      1/(2a)    KS(Exp(2a))  KS(Exp(tabulated))\n");
  for (std::size_t c = 0; c < 3; ++c) {
    const double rate = 2.0 * alpha[c];
    const double ks = nu.marginal_stats(c, {}, [rate](double x) { return exponential_cdf(rate, x); }).ks.value();
    const double tab = tabulated.rates[c];
    const double ks_tab = nu.marginal_stats(c, {}, [tab](double x) { return exponential_cdf(tab, x); }).ks.value();
    std::printf("%-5zu  %.5f  %.5f   %.4f       %.4f\n", c + 1, nu.mean(c), 1.0 / rate, ks, ks_tab);
  }
  return 0;
}
