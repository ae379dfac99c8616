#pragma once

// Closed-form stationary references for the shipped example problems.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/model.hpp"
#include "refsim/numerics.hpp"

namespace refsim {

struct ReferenceLaw {
  enum class Kind { ProductExponential, ScalarMoment };
  Kind kind = Kind::ScalarMoment;
  Vector rates;       ///< product-exponential rates
  double value = 0;   ///< first moment of coordinate 1 (scalar kind)
  std::string note;
};

/// First moment of every coordinate of the d-dimensional symmetric SRBM with
/// unit-diagonal covariance (off-diagonal rho), drift -1 and reflection R = (1+r) I - r 11^T.
inline double symmetric_srbm_m1(int d, double r, double rho) {
  if (d < 2) throw Error(ErrorKind::ParameterOutOfRange, "dimension must be at least 2");
  const double dm1 = static_cast<double>(d - 1);
  if (!(rho > -1.0 / dm1 && rho < 1.0))
    throw Error(ErrorKind::ParameterOutOfRange, "rho must lie in (-1/(d-1), 1)");
  if (!(r >= 0.0 && r < 1.0 / dm1)) throw Error(ErrorKind::ParameterOutOfRange, "r must lie in [0, 1/(d-1))");
  return (1.0 - (d - 2) * r + dm1 * r * rho) / (2.0 * (1.0 + r));
}

inline double exponential_cdf(double rate, double x) {
  if (!(rate > 0.0)) throw Error(ErrorKind::ParameterOutOfRange, "rate must be positive");
  return x <= 0.0 ? 0.0 : -std::expm1(-rate * x);
}

/// 3-d product-form example: R = I + Q, b = -1/2, sigma = I.
inline ProblemSpec example_3d() {
  const Matrix r{{1.0, 0.1, -0.2}, {-0.1, 1.0, 0.0}, {0.2, 0.0, 1.0}};
  return ProblemSpec("product-3d", r, DriftField::constant(Vector{-0.5, -0.5, -0.5}),
                     DiffusionField::constant(Matrix::identity(3)));
}

inline ReferenceLaw example_3d_reference() {
  ReferenceLaw law;
  law.kind = ReferenceLaw::Kind::ProductExponential;
  law.rates = Vector{1.1667, 1.0938, 0.8537};
  law.note = "product-form rates as published";
  return law;
}

/// 2-d example with E[x_1] = 0.5 under the stationary law.
inline ProblemSpec example_2d() {
  const Matrix r{{1.0, 0.0}, {-1.0, 1.0}};
  return ProblemSpec("oblique-2d", r, DriftField::constant(Vector{-1.0, 0.0}),
                     DiffusionField::constant(Matrix::identity(2)));
}

inline ReferenceLaw example_2d_reference() {
  ReferenceLaw law;
  law.value = 0.5;
  law.note = "first moment of x_1";
  return law;
}

/// Symmetric family: covariance 1 / rho, drift -1, reflection 1 / -r; sigma = chol(Gamma).
inline ProblemSpec example_symmetric(int d, double r, double rho) {
  if (d < 2) throw Error(ErrorKind::ParameterOutOfRange, "dimension must be at least 2");
  const auto n = static_cast<std::size_t>(d);
  Matrix refl(n, n), gamma(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      refl(i, j) = i == j ? 1.0 : -r;
      gamma(i, j) = i == j ? 1.0 : rho;
    }
  char label[64];
  std::snprintf(label, sizeof label, "symmetric-%dd(r=%g,rho=%g)", d, r, rho);
  return ProblemSpec(label, refl, DriftField::constant(Vector(n, -1.0)), DiffusionField::constant(cholesky(gamma)));
}

inline ReferenceLaw example_symmetric_reference(int d, double r, double rho) {
  ReferenceLaw law;
  law.value = symmetric_srbm_m1(d, r, rho);
  law.note = "first moment of each coordinate";
  return law;
}

struct ExampleCase {
  ProblemSpec spec;
  ReferenceLaw reference;
};

/// The three reference problems; the symmetric one at d = 8, r = 0.1, rho = 0.
inline std::vector<ExampleCase> reference_examples() {
  std::vector<ExampleCase> out;
  out.push_back({example_3d(), example_3d_reference()});
  out.push_back({example_2d(), example_2d_reference()});
  out.push_back({example_symmetric(8, 0.1, 0.0), example_symmetric_reference(8, 0.1, 0.0)});
  return out;
}

/// rho values tabulated for the 8-d family at r = 0.1.
inline std::vector<double> symmetric_table_rhos() { return {-0.1, -0.05, 0.0, 0.2, 0.9}; }

}  // namespace refsim
