#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "refsim/noise.hpp"

using namespace refsim;

TEST(Philox, KnownAnswerVectors) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RngStream, Reproducible) {
  RngStream a(123, 4), b(123, 4);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_block(), b.next_block());
  EXPECT_EQ(a, b);
}

TEST(RngStream, ReplicationsDiffer) {
  RngStream a(123, 0), b(123, 1), c(124, 0), d(123, 0, 1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    seen.insert(a.next_block()[0]);
    seen.insert(b.next_block()[0]);
    seen.insert(c.next_block()[0]);
    seen.insert(d.next_block()[0]);
  }
  EXPECT_EQ(seen.size(), 4000u);
}

TEST(RngStream, CounterAdvanceIsDocumented) {
  for (std::size_t m : {1u, 2u, 3u, 8u}) {
    RngStream s(1, 0);
    draw_increment(NoiseModel::standard_normal(), s, m);
    EXPECT_EQ(s.counter(), (m + 1) / 2);
  }
}

TEST(RngStream, ResumeFromCounter) {
  RngStream a(9, 2);
  for (int i = 0; i < 17; ++i) a.next_block();
  RngStream b(9, 2, 0, a.counter());
  EXPECT_EQ(a.next_block(), b.next_block());
}

TEST(RngStream, UnitIntervalIsOpen) {
  EXPECT_GT(RngStream::to_unit(0), 0.0);
  EXPECT_LT(RngStream::to_unit(~std::uint64_t{0}), 1.0);
}

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-13);
  EXPECT_NEAR(normal_quantile(0.025), -1.959963984540054, 1e-13);
  EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-11);
  for (double p : {1e-300, 1e-20, 0.001, 0.3, 0.7, 0.999}) {
    const double z = normal_quantile(p);
    EXPECT_NEAR(0.5 * std::erfc(-z / std::sqrt(2.0)), p, 1e-14 * std::max(1.0, 1.0 / p) * p + 1e-16);
  }
}

TEST(NoiseModel, Supports) {
  RngStream s(5, 0);
  const auto rad = NoiseModel::rademacher();
  const auto uni = NoiseModel::uniform_scaled();
  const auto two = NoiseModel::two_point_asymmetric(0.2);
  for (int i = 0; i < 10000; ++i) {
    const Vector r = draw_increment(rad, s, 3);
    for (double v : r) ASSERT_TRUE(v == 1.0 || v == -1.0);
    const Vector u = draw_increment(uni, s, 3);
    for (double v : u) ASSERT_LE(std::abs(v), std::sqrt(3.0));
    const Vector t = draw_increment(two, s, 3);
    for (double v : t) ASSERT_TRUE(v == 2.0 || v == -0.5);
  }
}

TEST(NoiseModel, TwoPointConstants) {
  const auto two = NoiseModel::two_point_asymmetric(0.2);
  EXPECT_NEAR(two.support_bound(), 2.0, 1e-15);
  EXPECT_NEAR(two.sub_gaussian_alpha(), 2.0, 1e-15);
  EXPECT_NEAR(two.third_moment(), 1.5, 1e-14);
  EXPECT_EQ(NoiseModel::standard_normal().third_moment(), 0.0);
  EXPECT_EQ(NoiseModel::rademacher().sub_gaussian_alpha(), 0.5);
  EXPECT_NEAR(NoiseModel::uniform_scaled().sub_gaussian_alpha(), 1.5, 1e-15);
}

TEST(NoiseModel, FromKey) {
  for (const char* key : {"standard_normal", "rademacher", "uniform_scaled", "two_point_asymmetric"})
    EXPECT_EQ(NoiseModel::from_key(key).key(), key);
  try {
    NoiseModel::from_key("cauchy");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
  EXPECT_THROW(NoiseModel::two_point_asymmetric(1.0), Error);
}

TEST(NoiseModel, FirstMomentsWithinFourStandardErrors) {
  const std::size_t n = 1'000'000;
  for (const auto& model : {NoiseModel::standard_normal(), NoiseModel::rademacher(), NoiseModel::uniform_scaled(),
                            NoiseModel::two_point_asymmetric(0.2)}) {
    RngStream s(2024, 0);
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (std::size_t i = 0; i < n / 2; ++i) {
      const Vector u = draw_increment(model, s, 2);
      for (double v : u) {
        s1 += v;
        s2 += v * v;
        s3 += v * v * v;
        s4 += v * v * v * v;
      }
    }
    const double mean = s1 / n, second = s2 / n, third = s3 / n, fourth = s4 / n;
    EXPECT_LE(std::abs(mean), 4.0 / std::sqrt(static_cast<double>(n))) << model.key();
    const double se2 = std::sqrt((fourth - 1.0) / n);
    EXPECT_LE(std::abs(second - 1.0), 4.0 * se2) << model.key();
    if (model.law() == NoiseLaw::TwoPointAsymmetric) {
      EXPECT_NEAR(third, 1.5, 0.02);
    }
    if (model.law() == NoiseLaw::UniformScaled) {
      EXPECT_NEAR(second, 1.0, 0.01);
    }
  }
}

TEST(SubGaussian, RademacherAtOne) {
  const double lambdas[] = {1.0};
  const auto chk = empirical_subgaussian_check(NoiseModel::rademacher(), lambdas, 200000, RngStream(1, 0));
  EXPECT_NEAR(chk.ratios[0], std::log(std::cosh(1.0)), 0.01);
  EXPECT_TRUE(chk.pass);
}

TEST(SubGaussian, NormalRatioNearHalf) {
  const double lambdas[] = {-0.5, 0.25, 0.5};
  const auto chk = empirical_subgaussian_check(NoiseModel::standard_normal(), lambdas, 400000, RngStream(2, 0));
  for (double r : chk.ratios) EXPECT_NEAR(r, 0.5, 0.05);
  EXPECT_TRUE(chk.pass);
}

TEST(SubGaussian, TwoPointGrid) {
  std::vector<double> grid;
  for (int i = -6; i <= 6; ++i)
    if (i != 0) grid.push_back(0.5 * i);
  const auto chk = empirical_subgaussian_check(NoiseModel::two_point_asymmetric(0.2), grid, 200000, RngStream(3, 0));
  for (double r : chk.ratios) {
    EXPECT_TRUE(std::isfinite(r));
    EXPECT_LE(r, 2.0);
  }
  EXPECT_TRUE(chk.pass);
}
