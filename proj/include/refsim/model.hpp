#pragma once

// Problem data for a reflected diffusion in the orthant and the checks that
// can be decided from it: the M(I - V) spectral-radius gate, an exact
// completely-S test for small m, the drift-cone certificate and ellipticity.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/numerics.hpp"

namespace refsim {

inline double coefficient_norm(const Vector& v) { return norm2(v.span()); }
inline double coefficient_norm(const Matrix& m) { return norm2(m.flat()); }  // Frobenius

/// Drift (Vector) or diffusion (Matrix) coefficient: constant or a stateless callable.
template <class Value>
class CoefficientField {
 public:
  using Evaluator = std::function<Value(std::span<const double>)>;

  CoefficientField() = default;

  static CoefficientField constant(Value v) {
    CoefficientField f;
    f.bound_ = coefficient_norm(v);
    f.constant_ = std::move(v);
    return f;
  }

  static CoefficientField callable(Evaluator eval, double declared_bound, std::string name) {
    CoefficientField f;
    f.eval_ = std::move(eval);
    f.bound_ = declared_bound;
    f.name_ = std::move(name);
    return f;
  }

  bool is_constant() const noexcept { return !eval_; }
  const Value& constant_value() const { return constant_; }
  double declared_bound() const noexcept { return bound_; }
  const std::string& name() const noexcept { return name_; }

  Value operator()(std::span<const double> x) const { return eval_ ? eval_(x) : constant_; }

 private:
  Value constant_{};
  Evaluator eval_;
  double bound_ = 0.0;
  std::string name_;
};

using DriftField = CoefficientField<Vector>;
using DiffusionField = CoefficientField<Matrix>;

/// Reflected diffusion in R^m_+: columns of `reflection` are the directions d_i.
class ProblemSpec {
 public:
  ProblemSpec(std::string label, Matrix reflection, DriftField drift, DiffusionField diffusion)
      : label_(std::move(label)),
        reflection_(std::move(reflection)),
        drift_(std::move(drift)),
        diffusion_(std::move(diffusion)) {
    const std::size_t m = reflection_.rows();
    if (m == 0 || !reflection_.square())
      throw Error(ErrorKind::DimensionMismatch, "reflection matrix must be square and nonempty");
    for (std::size_t i = 0; i < m; ++i)
      if (!(reflection_(i, i) > 0.0))
        throw Error(ErrorKind::NonpositiveDiagonal, "reflection diagonal entry " + std::to_string(i));
    if (drift_.is_constant() && drift_.constant_value().size() != m)
      throw Error(ErrorKind::DimensionMismatch, "drift length differs from dimension");
    if (diffusion_.is_constant() &&
        (diffusion_.constant_value().rows() != m || diffusion_.constant_value().cols() != m))
      throw Error(ErrorKind::DimensionMismatch, "diffusion must be m x m");
  }

  std::size_t dimension() const noexcept { return reflection_.rows(); }
  const std::string& label() const noexcept { return label_; }
  const Matrix& reflection() const noexcept { return reflection_; }
  const DriftField& drift() const noexcept { return drift_; }
  const DiffusionField& diffusion() const noexcept { return diffusion_; }
  Vector direction(std::size_t i) const { return reflection_.col(i); }

 private:
  std::string label_;
  Matrix reflection_;
  DriftField drift_;
  DiffusionField diffusion_;
};

enum class CompletelyS { Proven, Implied, Failed };

inline std::string_view to_string(CompletelyS s) {
  switch (s) {
    case CompletelyS::Proven: return "proven";
    case CompletelyS::Implied: return "implied";
    case CompletelyS::Failed: return "failed";
  }
  return "failed";
}

struct ReflectionReport {
  double spectral_radius = 0.0;
  bool spectral_radius_approximate = false;
  CompletelyS completely_s = CompletelyS::Failed;
  bool exact_test_run = false;
};

namespace detail {

// Dense simplex for max c.x s.t. A x <= b, x >= 0 with b >= 0 (slack basis is
// feasible). Bland's rule; returns the optimal value.
inline double simplex_max(const Matrix& a, const Vector& b, const Vector& c) {
  const std::size_t rows = a.rows(), vars = a.cols(), width = vars + rows + 1;
  std::vector<double> t((rows + 1) * width, 0.0);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return t[i * width + j]; };
  std::vector<std::size_t> basis(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < vars; ++j) at(i, j) = a(i, j);
    at(i, vars + i) = 1.0;
    at(i, width - 1) = b[i];
    basis[i] = vars + i;
  }
  for (std::size_t j = 0; j < vars; ++j) at(rows, j) = -c[j];

  for (int iter = 0; iter < 10'000; ++iter) {
    std::size_t enter = width;
    for (std::size_t j = 0; j + 1 < width; ++j)
      if (at(rows, j) < -1e-12) {
        enter = j;
        break;
      }
    if (enter == width) break;
    std::size_t leave = rows;
    double best = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      if (at(i, enter) <= 1e-12) continue;
      const double ratio = at(i, width - 1) / at(i, enter);
      if (leave == rows || ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[leave])) {
        leave = i;
        best = ratio;
      }
    }
    if (leave == rows) return std::numeric_limits<double>::infinity();
    const double p = at(leave, enter);
    for (std::size_t j = 0; j < width; ++j) at(leave, j) /= p;
    for (std::size_t i = 0; i <= rows; ++i) {
      if (i == leave) continue;
      const double f = at(i, enter);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < width; ++j) at(i, j) -= f * at(leave, j);
    }
    basis[leave] = enter;
  }
  return at(rows, width - 1);
}

}  // namespace detail

/// Whether some u >= 0 gives A u > 0, decided by max t s.t. A u >= t 1, 0 <= u <= 1, 0 <= t <= 1.
inline bool is_s_matrix(const Matrix& a) {
  const std::size_t p = a.rows();
  Matrix lp(2 * p + 1, p + 1);
  Vector rhs(2 * p + 1, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) lp(i, j) = -a(i, j);
    lp(i, p) = 1.0;
    lp(p + i, i) = 1.0;
    rhs[p + i] = 1.0;
  }
  lp(2 * p, p) = 1.0;
  rhs[2 * p] = 1.0;
  Vector c(p + 1, 0.0);
  c[p] = 1.0;
  return detail::simplex_max(lp, rhs, c) > 1e-12;
}

/// Every principal submatrix is an S-matrix (2^m - 1 small LPs).
inline bool is_completely_s(const Matrix& r) {
  const std::size_t m = r.rows();
  for (unsigned long mask = 1; mask < (1UL << m); ++mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1UL << i)) idx.push_back(i);
    Matrix sub(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b) sub(a, b) = r(idx[a], idx[b]);
    if (!is_s_matrix(sub)) return false;
  }
  return true;
}

/// rho(|V|) for R = M (I - V), M = diag(R). With `exact_test` and m <= 12 the
/// completely-S property is decided directly instead of being implied.
inline ReflectionReport validate_reflection(const Matrix& r, bool exact_test = false) {
  if (!r.square()) throw Error(ErrorKind::DimensionMismatch, "reflection matrix must be square");
  const std::size_t m = r.rows();
  Matrix v(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(r(i, i) > 0.0)) throw Error(ErrorKind::NonpositiveDiagonal, "diagonal entry " + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) v(i, j) = (i == j ? 1.0 : 0.0) - r(i, j) / r(i, i);
  }
  ReflectionReport rep;
  const SpectralRadius rho = spectral_radius_abs(v);
  rep.spectral_radius = rho.value;
  rep.spectral_radius_approximate = rho.approximate;
  if (exact_test && m <= 12) {
    rep.exact_test_run = true;
    rep.completely_s = is_completely_s(r) ? CompletelyS::Proven : CompletelyS::Failed;
  } else {
    rep.completely_s = rho.value < 1.0 ? CompletelyS::Implied : CompletelyS::Failed;
  }
  return rep;
}

struct DriftConeCertificate {
  Vector alpha;        ///< b = -R alpha
  double margin = 0;   ///< min_i alpha_i
  bool pass = false;   ///< alpha > 0 strictly
};

inline DriftConeCertificate validate_drift_cone(const Matrix& r, const Vector& b) {
  DriftConeCertificate cert;
  Vector neg_b = b;
  neg_b *= -1.0;
  cert.alpha = solve_linear(r, neg_b);
  cert.margin = *std::min_element(cert.alpha.begin(), cert.alpha.end());
  cert.pass = cert.margin > 0.0;
  return cert;
}

struct EllipticityReport {
  double sigma_min = 0.0;  ///< smallest eigenvalue of sigma sigma^T
  bool pass = false;
};

inline EllipticityReport validate_ellipticity(const Matrix& sigma) {
  if (!sigma.square()) throw Error(ErrorKind::DimensionMismatch, "sigma must be square");
  Matrix cov = sigma * sigma.transpose();
  // symmetrize round-off
  for (std::size_t i = 0; i < cov.rows(); ++i)
    for (std::size_t j = i + 1; j < cov.cols(); ++j) cov(i, j) = cov(j, i) = 0.5 * (cov(i, j) + cov(j, i));
  EllipticityReport rep;
  rep.sigma_min = std::max(0.0, min_eigenvalue_sym(cov));
  if (std::abs(rep.sigma_min) < 1e-14) rep.sigma_min = 0.0;
  rep.pass = rep.sigma_min > 1e-10;
  return rep;
}

struct StabilityReport {
  ReflectionReport reflection;
  std::optional<Vector> cone_certificate;
  double cone_margin = 0.0;
  double min_ellipticity = 0.0;
  bool pass = false;
  std::vector<std::string> reasons;
};

struct ValidationOptions {
  bool exact_completely_s = false;
  std::size_t samples = 10'000;  ///< states drawn from [0, box]^m for callable coefficients
  double box = 10.0;
  std::uint64_t sample_seed = 0x5eed;
};

namespace detail {

template <class Value>
void check_bound(const CoefficientField<Value>& f, std::span<const double> x, const char* what) {
  const Value v = f(x);
  if constexpr (std::is_same_v<Value, Vector>) {
    if (!all_finite(v.span())) throw Error(ErrorKind::CoefficientBoundViolated, std::string(what) + " not finite");
  } else {
    if (!all_finite(v.flat())) throw Error(ErrorKind::CoefficientBoundViolated, std::string(what) + " not finite");
  }
  if (coefficient_norm(v) > f.declared_bound() * (1.0 + 1e-12))
    throw Error(ErrorKind::CoefficientBoundViolated, std::string(what) + " exceeds declared bound " +
                                                         std::to_string(f.declared_bound()));
}

}  // namespace detail

/// Runs every data-level check. Callable coefficients are sampled on a box;
/// a declared-bound violation throws CoefficientBoundViolated.
inline StabilityReport validate(const ProblemSpec& spec, const ValidationOptions& opts = {}) {
  StabilityReport rep;
  const std::size_t m = spec.dimension();
  rep.reflection = validate_reflection(spec.reflection(), opts.exact_completely_s);
  if (!(rep.reflection.spectral_radius < 1.0))
    rep.reasons.push_back("spectral radius of |V| is " + std::to_string(rep.reflection.spectral_radius) + " >= 1");
  if (rep.reflection.completely_s == CompletelyS::Failed)
    rep.reasons.push_back("reflection matrix is not completely-S");

  std::vector<Vector> states;
  const bool sampled = !spec.drift().is_constant() || !spec.diffusion().is_constant();
  if (sampled) {
    std::mt19937_64 gen(opts.sample_seed);
    std::uniform_real_distribution<double> unif(0.0, opts.box);
    states.reserve(opts.samples);
    for (std::size_t s = 0; s < opts.samples; ++s) {
      Vector x(m);
      for (double& c : x) c = unif(gen);
      states.push_back(std::move(x));
    }
  } else {
    states.emplace_back(m, 0.0);
  }

  bool cone_ok = true, elliptic_ok = true;
  rep.cone_margin = std::numeric_limits<double>::infinity();
  rep.min_ellipticity = std::numeric_limits<double>::infinity();
  for (const Vector& x : states) {
    if (sampled) {
      detail::check_bound(spec.drift(), x.span(), "drift");
      detail::check_bound(spec.diffusion(), x.span(), "diffusion");
    }
    try {
      const DriftConeCertificate cert = validate_drift_cone(spec.reflection(), spec.drift()(x.span()));
      if (cert.margin < rep.cone_margin) {
        rep.cone_margin = cert.margin;
        rep.cone_certificate = cert.alpha;
      }
      cone_ok = cone_ok && cert.pass;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SingularMatrix) throw;
      cone_ok = false;
      rep.cone_certificate.reset();
      rep.cone_margin = -std::numeric_limits<double>::infinity();
    }
    const EllipticityReport ell = validate_ellipticity(spec.diffusion()(x.span()));
    rep.min_ellipticity = std::min(rep.min_ellipticity, ell.sigma_min);
    elliptic_ok = elliptic_ok && ell.pass;
  }
  if (!cone_ok) {
    rep.reasons.push_back("drift is not in the interior of the cone {-R alpha : alpha >= 0}");
    rep.cone_certificate.reset();
  }
  if (!elliptic_ok) rep.reasons.push_back("diffusion is degenerate (sigma sigma^T singular)");
  rep.pass = rep.reasons.empty();
  return rep;
}

}  // namespace refsim
