#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>

#include "refsim/checkpoint.hpp"
#include "refsim/reference.hpp"
#include "refsim/scheme.hpp"

using namespace refsim;

namespace {

ProblemSpec one_dim(double b, double s) {
  return ProblemSpec("1d", Matrix::identity(1), DriftField::constant(Vector{b}),
                     DiffusionField::constant(Matrix{{s}}));
}

}  // namespace

TEST(Schedule, PowerValues) {
  const auto s = StepSchedule::power(1.0, 0.5);
  EXPECT_DOUBLE_EQ(s.lambda(1), 1.0);
  EXPECT_DOUBLE_EQ(s.lambda(4), 0.5);
  EXPECT_DOUBLE_EQ(s.lambda(2), std::sqrt(0.5));
  EXPECT_NEAR(StepSchedule::power(2.0, 0.3).lambda(7), 2.0 * std::pow(7.0, -0.3), 1e-15);
  EXPECT_EQ(StepSchedule::power(1e-3, 0.0).lambda(123456), 1e-3);
  EXPECT_EQ(s.sup(), 1.0);
}

TEST(Schedule, Rejects) {
  EXPECT_THROW(StepSchedule::power(0.0, 0.5), Error);
  EXPECT_THROW(StepSchedule::power(1.0, 1.5), Error);
  EXPECT_THROW(StepSchedule::explicit_list({}), Error);
  EXPECT_THROW(StepSchedule::explicit_list({0.1, -0.1}), Error);
  EXPECT_THROW(StepSchedule::power(1.0, 0.5).lambda(0), Error);
  const auto e = StepSchedule::explicit_list({0.3, 0.2});
  EXPECT_EQ(e.lambda(2), 0.2);
  EXPECT_EQ(e.sup(), 0.3);
  EXPECT_THROW(e.lambda(3), Error);
}

TEST(Schedule, LambdaFourAtHalf) {
  const auto d = lambda_diagnostics(StepSchedule::power(1.0, 0.5), 4);
  EXPECT_NEAR(d.lambda_n, 1.0 + 0.70711 + 0.57735 + 0.5, 1e-5);
  EXPECT_NEAR(d.lambda_n, 2.78446, 1e-5);
  EXPECT_NEAR(d.lambda_3_2, 2.3869, 1e-4);
  // 2.3869 / sqrt(2.78446) = 1.43039
  const double l32 = 1.0 + std::pow(2.0, -0.75) + std::pow(3.0, -0.75) + std::pow(4.0, -0.75);
  EXPECT_NEAR(d.ratio, l32 / std::sqrt(1.0 + std::sqrt(0.5) + std::sqrt(1.0 / 3.0) + 0.5), 1e-14);
  EXPECT_NEAR(d.ratio, 1.4304, 1e-4);
}

TEST(Schedule, AlphaOneSingleStep) {
  const auto d = lambda_diagnostics(StepSchedule::power(1.0, 1.0), 1);
  EXPECT_EQ(d.lambda_n, 1.0);
  EXPECT_EQ(d.lambda_3_2, 1.0);
  EXPECT_EQ(d.ratio, 1.0);
}

TEST(Schedule, HarmonicSumAgainstExactRational) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  const std::uint64_t n = 10'000;
  cpp_int l = 1;
  for (std::uint64_t k = 2; k <= n; ++k) l = boost::multiprecision::lcm(l, cpp_int(k));
  cpp_int num = 0;
  for (std::uint64_t k = 1; k <= n; ++k) num += l / k;
  const double exact = cpp_rational(num, l).convert_to<double>();
  const double streamed = lambda_diagnostics(StepSchedule::power(1.0, 1.0), n).lambda_n;
  EXPECT_LE(std::abs(streamed - exact), 1e-12 * exact);
}

TEST(Schedule, RatioDecreasesInFastRegime) {
  const auto s = StepSchedule::power(1.0, 0.7);
  const double r3 = lambda_diagnostics(s, 1000).ratio, r4 = lambda_diagnostics(s, 10000).ratio,
               r5 = lambda_diagnostics(s, 100000).ratio;
  EXPECT_GT(r3, r4);
  EXPECT_GT(r4, r5);
}

TEST(Step, OneDimensionalProjection) {
  const auto spec = one_dim(-1.0, 0.0);
  const auto [next, atom] = step(initial_state(Vector{0.0}, 1, 0), spec, StepSchedule::explicit_list({0.25}),
                                 NoiseModel::standard_normal());
  EXPECT_EQ(next.x[0], 0.0);
  EXPECT_EQ(next.k, 1u);
  EXPECT_EQ(atom.x[0], 0.0);
  EXPECT_EQ(atom.lambda, 0.25);
}

TEST(Step, DeepInteriorIsFreeEuler) {
  const ProblemSpec spec("free", Matrix::identity(3), DriftField::constant(Vector(3, 0.0)),
                         DiffusionField::constant(Matrix::identity(3)));
  const auto start = initial_state(Vector(3, 1000.0), 5, 0);
  RngStream shadow = start.stream;
  const auto [next, atom] = step(start, spec, StepSchedule::explicit_list({0.04}), NoiseModel::standard_normal());
  const Vector u = draw_increment(NoiseModel::standard_normal(), shadow, 3);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(next.x[j], 1000.0 + 0.2 * u[j], 1e-12);
  EXPECT_EQ(next.stream, shadow);
}

TEST(Step, ZeroCoefficientsFixedPoint) {
  const ProblemSpec spec("still", Matrix{{1, 0}, {-1, 1}}, DriftField::constant(Vector(2, 0.0)),
                         DiffusionField::constant(Matrix(2, 2)));
  for (const Vector& x0 : {Vector{0.0, 0.0}, Vector{0.0, 2.5}, Vector{1.5, 0.3}}) {
    const auto end = run(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {},
                         initial_state(x0, 3, 0), 1000);
    EXPECT_EQ(end.x, x0);
  }
}

TEST(Step, AtomPairsPreStepStateWithStepLambda) {
  const auto spec = example_2d();
  WeightedMeasure nu(2);
  nu.register_function("x1", [](std::span<const double> x) { return x[0]; });
  Chain chain(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {},
              initial_state(Vector{0.7, 0.2}, 9, 0));
  chain.attach(&nu);
  double expect = 0.0, total = 0.0;
  std::vector<std::uint64_t> ks;
  chain.set_observer([&](const StepRecord& r) {
    expect += r.lambda * r.x_prev[0];
    total += r.lambda;
    ks.push_back(r.k);
    EXPECT_EQ(r.lambda, 1.0 / std::sqrt(static_cast<double>(r.k)));
  });
  chain.run(5);
  EXPECT_EQ(ks, (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  EXPECT_NEAR(nu.total_weight(), total, 1e-15);
  EXPECT_NEAR(nu.integrate("x1"), expect / total, 1e-14);
  // The first atom is X_0 itself.
  WeightedMeasure first(2);
  Chain one(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {},
            initial_state(Vector{0.7, 0.2}, 9, 0));
  one.attach(&first);
  one.step();
  EXPECT_EQ(first.mean(0), 0.7);
  EXPECT_EQ(first.mean(1), 0.2);
}

TEST(Run, ResumeIsBitwiseIdentical) {
  const auto spec = example_3d();
  const auto sched = StepSchedule::power(1.0, 0.5);
  const auto noise = NoiseModel::standard_normal();
  const double powers[] = {0.25};

  WeightedMeasure nu_full(3);
  BoundaryMeasure mu_full(3);
  Chain full(spec, sched, noise, {}, initial_state(Vector(3, 1.0), 42, 3, powers));
  full.attach(&nu_full);
  full.attach(&mu_full);
  full.run(30000);

  WeightedMeasure nu_a(3);
  BoundaryMeasure mu_a(3);
  Chain a(spec, sched, noise, {}, initial_state(Vector(3, 1.0), 42, 3, powers));
  a.attach(&nu_a);
  a.attach(&mu_a);
  a.run(12345);
  const std::string text = checkpoint_json(a, "cfg", &nu_a, &mu_a).dump();

  WeightedMeasure nu_b(3);
  BoundaryMeasure mu_b(3);
  Chain b(spec, sched, noise, {}, initial_state(Vector(3, 5.0), 0, 0, powers));
  restore_checkpoint(parse_checkpoint(nlohmann::json::parse(text)), b, &nu_b, &mu_b);
  b.attach(&nu_b);
  b.attach(&mu_b);
  b.run(30000 - 12345);

  EXPECT_EQ(b.state(), full.state());
  EXPECT_EQ(checkpoint_json(b, "cfg", &nu_b, &mu_b), checkpoint_json(full, "cfg", &nu_full, &mu_full));
}

TEST(Run, ZeroStepResumeEqualsFresh) {
  const auto spec = example_2d();
  Chain a(spec, StepSchedule::power(1.0, 0.5), NoiseModel::rademacher(), {}, initial_state(Vector{1.0, 1.0}, 7, 0));
  const auto j = checkpoint_json(a, "x");
  Chain b(spec, StepSchedule::power(1.0, 0.5), NoiseModel::rademacher(), {}, initial_state(Vector{3.0, 3.0}, 1, 1));
  restore_checkpoint(parse_checkpoint(j), b);
  EXPECT_EQ(a.state(), b.state());
}

TEST(Run, CheckpointForOtherSpecRejected) {
  const auto spec = example_2d();
  Chain a(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {},
          initial_state(Vector{1.0, 1.0}, 7, 0));
  a.run(10);
  const auto c = parse_checkpoint(checkpoint_json(a, "x"));
  const ProblemSpec other("other", Matrix::identity(2), DriftField::constant(Vector{-1.0, -1.0}),
                          DiffusionField::constant(Matrix::identity(2)));
  Chain b(other, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {}, initial_state(Vector{1.0, 1.0}, 7, 0));
  try {
    restore_checkpoint(c, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CheckpointCorrupt);
  }
}

TEST(Run, CorruptCheckpointRejected) {
  const auto spec = example_2d();
  Chain a(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {},
          initial_state(Vector{1.0, 1.0}, 7, 0));
  auto j = checkpoint_json(a, "x");
  j["format_version"] = 99;
  EXPECT_THROW(parse_checkpoint(j), Error);
  j = checkpoint_json(a, "x");
  j["state"]["x"][0] = "zz";
  EXPECT_THROW(parse_checkpoint(j), Error);
  j = checkpoint_json(a, "x");
  j.erase("state");
  EXPECT_THROW(parse_checkpoint(j), Error);
}

TEST(Run, StaysInOrthantAndAccumulatorsAgree) {
  const auto spec = example_2d();
  WeightedMeasure nu(2);
  Chain chain(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {},
              initial_state(Vector{1.0, 1.0}, 11, 0));
  chain.attach(&nu);
  bool inside = true;
  chain.set_observer([&](const StepRecord&) {
    for (double v : chain.state().x) inside = inside && v >= 0.0;
  });
  chain.run(200000);
  EXPECT_TRUE(inside);
  EXPECT_EQ(nu.mass(), 1.0);
  EXPECT_EQ(nu.total_weight(), chain.state().accumulators.lambda.value());
  EXPECT_LT(static_cast<double>(chain.state().truncations), 1e-4 * 200000);
  double hist = 0.0;
  for (const auto& h : nu.accumulators().histograms) hist = std::max(hist, std::abs(h.total() - nu.total_weight()));
  EXPECT_LT(hist, 1e-9 * nu.total_weight());
}

TEST(Run, CallableCoefficientBoundEnforced) {
  auto drift = DriftField::callable([](std::span<const double> x) { return Vector{-1.0 - 10.0 * x[0]}; }, 2.0, "steep");
  const ProblemSpec spec("steep", Matrix::identity(1), drift, DiffusionField::constant(Matrix{{1.0}}));
  Chain chain(spec, StepSchedule::power(1.0, 0.5), NoiseModel::standard_normal(), {}, initial_state(Vector{5.0}, 1, 0));
  try {
    chain.step();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CoefficientBoundViolated);
  }
}

TEST(Run, InitialStateOutsideDomain) { EXPECT_THROW(initial_state(Vector{-0.1, 1.0}, 1, 0), Error); }

TEST(Run, ExtraPowersAccumulated) {
  const double powers[] = {2.0};
  const auto end = run(example_2d(), StepSchedule::power(1.0, 1.0), NoiseModel::standard_normal(), {},
                       initial_state(Vector{1.0, 1.0}, 1, 0, powers), 1000);
  double exact = 0.0;
  for (int k = 1000; k >= 1; --k) exact += 1.0 / (static_cast<double>(k) * k);
  ASSERT_EQ(end.accumulators.powers.size(), 1u);
  EXPECT_NEAR(end.accumulators.powers[0].second.value(), exact, 1e-14);
}
