#include <gtest/gtest.h>

#include <random>

#include "refsim/skorokhod.hpp"

using namespace refsim;

namespace {

Matrix random_admissible(std::mt19937_64& rng, std::size_t m) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0), diag(0.5, 2.0), shrink(0.05, 0.9);
  Matrix v(m, m);
  double row_max = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      v(i, j) = i == j ? 0.0 : unif(rng);
      s += std::abs(v(i, j));
    }
    row_max = std::max(row_max, s);
  }
  const double scale = row_max > 0.0 ? shrink(rng) / row_max : 0.0;
  Matrix r(m, m);
  for (std::size_t j = 0; j < m; ++j) {
    const double mj = diag(rng);
    for (std::size_t i = 0; i < m; ++i) r(i, j) = mj * ((i == j ? 1.0 : 0.0) - scale * v(i, j));
  }
  return r;
}

// Draws x with some coordinates exactly on the boundary.
Vector random_state(std::mt19937_64& rng, std::size_t m) {
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution zero(0.3);
  Vector x(m);
  for (auto& v : x) v = zero(rng) ? 0.0 : e(rng);
  return x;
}

Vector random_theta(std::mt19937_64& rng, std::size_t m, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Vector t(m);
  for (auto& v : t) v = g(rng) - 0.3 * scale;
  return t;
}

// Fixed-point oracle on a time grid: with R = M(I - V) column-scaled, x = psi + R L and
// L_i(t) = sup_{s<=t} max(0, -(psi_i(s) + sum_{j != i} R_ij L_j(s))) / R_ii.
Vector grid_oracle(const Vector& x, const Vector& theta, const Matrix& r, int n_grid) {
  const std::size_t m = x.size();
  std::vector<Vector> l(n_grid + 1, Vector(m, 0.0));
  for (int iter = 0; iter < 2000; ++iter) {
    double change = 0.0;
    std::vector<Vector> next(n_grid + 1, Vector(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      double running = 0.0;
      for (int k = 0; k <= n_grid; ++k) {
        const double t = static_cast<double>(k) / n_grid;
        double drive = x[i] + theta[i] * t;
        for (std::size_t j = 0; j < m; ++j)
          if (j != i) drive += r(i, j) * l[k][j];
        running = std::max(running, -drive / r(i, i));
        next[k][i] = running;
        change = std::max(change, std::abs(running - l[k][i]));
      }
    }
    l.swap(next);
    if (change < 1e-14) break;
  }
  Vector end(x);
  for (std::size_t i = 0; i < m; ++i) {
    end[i] += theta[i];
    for (std::size_t j = 0; j < m; ++j) end[i] += r(i, j) * l[n_grid][j];
  }
  return end;
}

}  // namespace

TEST(ActiveSet, Examples) {
  EXPECT_TRUE(active_set(Vector{1.0, 1.0}.span(), 1e-12).empty());
  EXPECT_EQ(active_set(Vector{0.0, 1.0, 0.0}.span(), 1e-12), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(active_set(Vector{1e-13, 1.0}.span(), 1e-12), (std::vector<std::size_t>{0}));
}

TEST(ActiveSet, OutsideDomain) {
  try {
    active_set(Vector{-1e-6, 1.0}.span(), 1e-12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutsideDomain);
  }
}

TEST(ActiveSet, MonotoneInTolerance) {
  const Vector x{1e-14, 1e-10, 1e-6, 1.0};
  std::size_t prev = 0;
  for (double tol : {0.0, 1e-12, 1e-8, 1e-4, 2.0}) {
    const auto a = active_set(x.span(), tol);
    EXPECT_GE(a.size(), prev);
    prev = a.size();
  }
}

TEST(Reflect, InteriorSegment1d) {
  const auto br = reflect(Vector{1.0}, Vector{-0.3}, Matrix::identity(1));
  EXPECT_DOUBLE_EQ(br.endpoint[0], 0.7);
  EXPECT_EQ(br.face_push[0], 0.0);
  EXPECT_FALSE(br.truncated);
}

TEST(Reflect, Push1d) {
  const auto br = reflect(Vector{0.5}, Vector{-2.0}, Matrix::identity(1));
  EXPECT_EQ(br.endpoint[0], 0.0);
  EXPECT_NEAR(br.face_push[0], 1.5, 1e-15);
  EXPECT_NEAR(br.z_end[0], -1.5, 1e-15);
}

TEST(Reflect, HandDerived2d) {
  const Matrix r{{1, 0}, {-1, 1}};
  const auto br = reflect(Vector{0.0, 1.0}, Vector{-1.0, -1.0}, r);
  EXPECT_NEAR(br.endpoint[0], 0.0, 1e-9);
  EXPECT_NEAR(br.endpoint[1], 0.0, 1e-9);
  EXPECT_NEAR(br.face_push[0], 1.0, 1e-9);
  EXPECT_NEAR(br.face_push[1], 1.0, 1e-9);
  ASSERT_GE(br.segments.size(), 2u);
  EXPECT_NEAR(br.segments[0].duration, 0.5, 1e-9);
  EXPECT_NEAR(br.segments[0].push_rate[0], 1.0, 1e-9);
  EXPECT_NEAR(br.segments[0].push_rate[1], 0.0, 1e-9);
  EXPECT_NEAR(br.segments[1].push_rate[0], 1.0, 1e-9);
  EXPECT_NEAR(br.segments[1].push_rate[1], 2.0, 1e-9);
  const double probes[] = {0.0, 0.25, 1.0};
  const auto pts = reflect_path_check(Vector{0.0, 1.0}, Vector{-1.0, -1.0}, r, {}, probes);
  EXPECT_NEAR(pts[0][1], 1.0, 1e-12);
  EXPECT_NEAR(pts[1][0], 0.0, 1e-9);
  EXPECT_NEAR(pts[1][1], 0.5, 1e-9);
  EXPECT_EQ(pts[2], br.endpoint);
}

TEST(Reflect, PathCheck1d) {
  const double probes[] = {0.25, 0.5, 1.0};
  const auto pts = reflect_path_check(Vector{1.0}, Vector{-2.0}, Matrix::identity(1), {}, probes);
  EXPECT_NEAR(pts[0][0], 0.5, 1e-15);
  EXPECT_EQ(pts[1][0], 0.0);
  EXPECT_EQ(pts[2][0], 0.0);
}

TEST(Reflect, OneDimensionalClosedForm) {
  std::mt19937_64 rng(1);
  std::exponential_distribution<double> e(1.0);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_real_distribution<double> dscale(0.2, 3.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = i % 5 == 0 ? 0.0 : e(rng), theta = g(rng), d = dscale(rng);
    const auto br = reflect(Vector{x}, Vector{theta}, Matrix{{d}});
    // psi(t) = x + theta t; Gamma(psi)(1) = psi(1) + max(0, -min_{s<=1} psi(s)).
    const double lift = std::max(0.0, -(x + theta));
    EXPECT_NEAR(br.endpoint[0], x + theta + lift, 1e-12);
    EXPECT_NEAR(br.face_push[0] * d, lift, 1e-12);
  }
}

TEST(Reflect, DecompositionIdentityAndDomain) {
  std::mt19937_64 rng(42);
  int truncated = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    const std::size_t m = 1 + trial % 6;
    const Matrix r = random_admissible(rng, m);
    const Vector x = random_state(rng, m);
    const Vector theta = random_theta(rng, m, 1.0);
    const auto br = reflect(x, theta, r);
    for (std::size_t j = 0; j < m; ++j) {
      ASSERT_GE(br.endpoint[j], 0.0);
      ASSERT_GE(br.face_push[j], 0.0);
    }
    if (br.truncated) {
      ++truncated;
      continue;
    }
    double total = 0.0;
    for (const auto& s : br.segments) total += s.duration;
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (std::size_t i = 0; i < m; ++i) {
      double expect = x[i] + theta[i];
      for (std::size_t j = 0; j < m; ++j) expect += br.face_push[j] * r(i, j);
      ASSERT_NEAR(br.endpoint[i], expect, 1e-9) << "trial " << trial;
    }
    // Pushing only from the boundary.
    for (const auto& s : br.segments)
      for (std::size_t j = 0; j < m; ++j)
        if (s.push_rate[j] > 0.0) {
          ASSERT_EQ(s.start[j], 0.0);
        }
  }
  EXPECT_LE(truncated, 10);
}

TEST(Reflect, AgreesWithFixedPointGridOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + trial % 3;
    const Matrix r = random_admissible(rng, m);
    const Vector x = random_state(rng, m);
    const Vector theta = random_theta(rng, m, 1.5);
    const auto br = reflect(x, theta, r);
    if (br.truncated) continue;
    const Vector oracle = grid_oracle(x, theta, r, 4000);
    for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(br.endpoint[i], oracle[i], 5e-3) << "trial " << trial;
  }
}

TEST(Reflect, InteriorIdentity) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(0.5, 3.0), th(-0.4, 0.4);
  const Matrix r{{1, 0.1, -0.2}, {-0.1, 1, 0}, {0.2, 0, 1}};
  for (int trial = 0; trial < 1000; ++trial) {
    Vector x(3), theta(3);
    for (std::size_t j = 0; j < 3; ++j) {
      x[j] = pos(rng);
      theta[j] = th(rng);
    }
    const auto br = reflect(x, theta, r);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(br.endpoint[j], x[j] + theta[j]);
      EXPECT_EQ(br.face_push[j], 0.0);
    }
  }
}

TEST(Reflect, PositiveHomogeneity) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t m = 1 + trial % 4;
    const Matrix r = random_admissible(rng, m);
    const Vector x = random_state(rng, m);
    const Vector theta = random_theta(rng, m, 1.0);
    const auto a = reflect(x, theta, r);
    if (a.truncated) continue;
    for (double c : {0.25, 4.0}) {
      const auto b = reflect(c * x, c * theta, r);
      for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(b.endpoint[j], c * a.endpoint[j], 1e-9 * (1.0 + c));
    }
  }
}

TEST(Reflect, TruncationReturnsOrigin) {
  SkorokhodConfig cfg;
  cfg.max_events = 1;
  const auto br = reflect(Vector{0.0, 1.0}, Vector{-1.0, -1.0}, Matrix{{1, 0}, {-1, 1}}, cfg);
  EXPECT_TRUE(br.truncated);
  EXPECT_EQ(br.endpoint, (Vector{0.0, 0.0}));
}

TEST(Reflect, InadmissibleDataReported) {
  try {
    reflect(Vector{0.0, 0.0}, Vector{-1.0, -1.0}, Matrix{{1, -2}, {-2, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AdmissibilityViolated);
  }
}

TEST(Reflect, OutsideDomain) {
  try {
    reflect(Vector{-1.0}, Vector{1.0}, Matrix::identity(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutsideDomain);
  }
}
