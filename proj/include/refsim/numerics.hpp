#pragma once

// Small dense linear algebra for reflection and covariance matrices (m <= 64).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refsim/error.hpp"

namespace refsim {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
  explicit Vector(std::span<const double> values) : data_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  void resize(std::size_t n, double fill = 0.0) { data_.assign(n, fill); }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool operator==(const Vector&) const = default;

  Vector& operator+=(const Vector& o) {
    for (std::size_t i = 0; i < size(); ++i) data_[i] += o[i];
    return *this;
  }
  Vector& operator-=(const Vector& o) {
    for (std::size_t i = 0; i < size(); ++i) data_[i] -= o[i];
    return *this;
  }
  Vector& operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
  }

 private:
  std::vector<double> data_;
};

inline Vector operator+(Vector a, const Vector& b) { return a += b; }
inline Vector operator-(Vector a, const Vector& b) { return a -= b; }
inline Vector operator*(double c, Vector a) { return a *= c; }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_inf(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::abs(v));
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged matrix rows");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  Vector col(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }
  std::span<const double> flat() const noexcept { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix abs() const {
    Matrix a = *this;
    for (double& v : a.data_) v = std::abs(v);
    return a;
  }

  double max_abs() const { return norm_inf(data_); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Vector operator*(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw Error(ErrorKind::DimensionMismatch, "matrix-vector product");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}
inline Vector operator*(const Matrix& a, const Vector& x) { return a * x.span(); }

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "matrix product");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

/// Gaussian elimination with partial pivoting.
/// Throws SingularMatrix when a pivot falls below 1e-12 * max|A|.
inline Vector solve_linear(const Matrix& a, std::span<const double> y) {
  if (!a.square() || a.rows() != y.size())
    throw Error(ErrorKind::DimensionMismatch, "solve_linear expects square A matching y");
  const std::size_t n = a.rows();
  const double threshold = 1e-12 * a.max_abs();
  Matrix lu = a;
  Vector z(y);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(p, k))) p = i;
    if (!(std::abs(lu(p, k)) > threshold) || threshold == 0.0)
      throw Error(ErrorKind::SingularMatrix, "pivot below threshold at column " + std::to_string(k));
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
      std::swap(z[k], z[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
      z[i] -= f * z[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = z[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= lu(k, j) * z[j];
    z[k] = s / lu(k, k);
  }
  return z;
}

inline Vector solve_linear(const Matrix& a, const Vector& y) { return solve_linear(a, y.span()); }

struct SpectralRadius {
  double value = 0.0;
  /// Set when the iteration budget ran out before the bounds met the tolerance.
  bool approximate = false;

  operator double() const noexcept { return value; }
};

/// rho(|V|) by power iteration from the all-ones vector.
///
/// Nilpotent |V| is detected exactly (|V|^m 1 = 0). Otherwise the iteration
/// runs on I + |V|, which is primitive whenever |V| is irreducible, and stops
/// once the Collatz-Wielandt bracket min_i (Bx)_i/x_i <= rho(B) <= max_i (Bx)_i/x_i
/// is tighter than 1e-8 relative.
inline SpectralRadius spectral_radius_abs(const Matrix& v, int max_iter = 10'000) {
  if (!v.square()) throw Error(ErrorKind::DimensionMismatch, "spectral_radius_abs expects square V");
  const std::size_t n = v.rows();
  const Matrix a = v.abs();

  Vector x(n, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    x = a * x;
    if (norm_inf(x.span()) == 0.0) return {0.0, false};
  }

  x.fill(1.0);
  double lower = 0.0, upper = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector bx = a * x;
    bx += x;
    lower = std::numeric_limits<double>::infinity();
    upper = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = bx[i] / x[i];
      lower = std::min(lower, r);
      upper = std::max(upper, r);
    }
    const double rho = 0.5 * (lower + upper) - 1.0;
    if (upper - lower <= 1e-8 * std::max(rho, 1e-300) || upper - lower <= 1e-15 * upper)
      return {std::max(rho, 0.0), false};
    const double scale = norm_inf(bx.span());
    bx *= 1.0 / scale;
    // Components of a reducible |V| can decay towards zero; keep them positive.
    for (double& c : bx) c = std::max(c, 1e-280);
    x = std::move(bx);
  }
  return {std::max(0.5 * (lower + upper) - 1.0, 0.0), true};
}

inline void require_symmetric(const Matrix& a) {
  if (!a.square()) throw Error(ErrorKind::NotSymmetric, "matrix is not square");
  const double tol = 1e-12 * std::max(1.0, a.max_abs());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol)
        throw Error(ErrorKind::NotSymmetric, "entries (" + std::to_string(i) + "," +
                                                 std::to_string(j) + ") differ");
}

/// All eigenvalues of a symmetric matrix (cyclic Jacobi rotations), ascending.
inline Vector eigenvalues_sym(const Matrix& sym) {
  require_symmetric(sym);
  const std::size_t n = sym.rows();
  Matrix a = sym;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off <= 1e-30 * std::max(1.0, a.max_abs() * a.max_abs())) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  Vector eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

inline double min_eigenvalue_sym(const Matrix& a) { return eigenvalues_sym(a)[0]; }

/// Lower-triangular L with L L^T = A for symmetric positive definite A.
inline Matrix cholesky(const Matrix& a) {
  require_symmetric(a);
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 1e-14 * std::max(1.0, a.max_abs())))
      throw Error(ErrorKind::SingularMatrix, "matrix is not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

/// Neumaier-compensated running sum; both words are part of the state so
/// that a restored accumulator continues bit-for-bit.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) noexcept {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const noexcept { return sum + comp; }

  bool operator==(const KahanSum&) const = default;
};

}  // namespace refsim
