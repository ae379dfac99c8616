#pragma once

// Linear complementarity problem: find u, v >= 0 with v = theta + R u and u.v = 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/numerics.hpp"

namespace refsim {

struct LcpSolution {
  Vector u;                             ///< push magnitudes
  Vector v;                             ///< slacks
  std::vector<std::size_t> active_set;  ///< {i : u_i > 0}, ascending
  int pivots_used = 0;
};

struct ComplementarityReport {
  double u_negativity = 0.0;  ///< max(0, -min u)
  double v_negativity = 0.0;  ///< max(0, -min v)
  double gap = 0.0;           ///< max_i |u_i v_i|
  double linear = 0.0;        ///< ||v - theta - R u||_inf

  double worst() const { return std::max({u_negativity, v_negativity, gap, linear}); }
};

inline ComplementarityReport verify_complementarity(const Matrix& r, std::span<const double> theta,
                                                    const LcpSolution& sol) {
  const std::size_t n = theta.size();
  if (!r.square() || r.rows() != n || sol.u.size() != n || sol.v.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "verify_complementarity dimensions disagree");
  ComplementarityReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    rep.u_negativity = std::max(rep.u_negativity, -sol.u[i]);
    rep.v_negativity = std::max(rep.v_negativity, -sol.v[i]);
    rep.gap = std::max(rep.gap, std::abs(sol.u[i] * sol.v[i]));
    double lin = sol.v[i] - theta[i];
    for (std::size_t j = 0; j < n; ++j) lin -= r(i, j) * sol.u[j];
    rep.linear = std::max(rep.linear, std::abs(lin));
  }
  return rep;
}

namespace detail {

// Tableau for w - R z - e z0 = q. Columns: w[0,n) z[n,2n) z0[2n] rhs[2n+1].
class LemkeTableau {
 public:
  LemkeTableau(const Matrix& r, std::span<const double> q)
      : n_(q.size()), width_(2 * n_ + 2), t_(n_ * width_, 0.0), basis_(n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      at(i, i) = 1.0;
      for (std::size_t j = 0; j < n_; ++j) at(i, n_ + j) = -r(i, j);
      at(i, 2 * n_) = -1.0;
      at(i, rhs()) = q[i];
      basis_[i] = i;
    }
  }

  std::size_t n() const { return n_; }
  std::size_t z0() const { return 2 * n_; }
  std::size_t rhs() const { return 2 * n_ + 1; }
  std::size_t complement(std::size_t var) const { return var < n_ ? var + n_ : var - n_; }
  double& at(std::size_t i, std::size_t j) { return t_[i * width_ + j]; }
  double at(std::size_t i, std::size_t j) const { return t_[i * width_ + j]; }
  std::size_t basic(std::size_t row) const { return basis_[row]; }

  void pivot(std::size_t row, std::size_t col) {
    const double p = at(row, col);
    for (std::size_t j = 0; j < width_; ++j) at(row, j) /= p;
    for (std::size_t i = 0; i < n_; ++i) {
      if (i == row) continue;
      const double f = at(i, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < width_; ++j) at(i, j) -= f * at(row, j);
      at(i, col) = 0.0;
    }
    at(row, col) = 1.0;
    basis_[row] = col;
  }

  // Lexicographic comparison of rows a and b scaled by their entries in `col`;
  // the w-columns hold the current basis inverse, so ties are always broken.
  bool lex_less(std::size_t a, std::size_t b, std::size_t col) const {
    const double ca = at(a, col), cb = at(b, col);
    const double da = at(a, rhs()) / ca, db = at(b, rhs()) / cb;
    const double tol = 1e-12 * std::max({1.0, std::abs(da), std::abs(db)});
    if (da < db - tol) return true;
    if (db < da - tol) return false;
    for (std::size_t j = 0; j < n_; ++j) {
      const double ea = at(a, j) / ca, eb = at(b, j) / cb;
      if (ea < eb - 1e-14) return true;
      if (eb < ea - 1e-14) return false;
    }
    return a < b;
  }

 private:
  std::size_t n_, width_;
  std::vector<double> t_;
  std::vector<std::size_t> basis_;
};

}  // namespace detail

/// Lemke's complementary pivoting with covering vector e and lexicographic
/// ratio test. The final active set is re-solved directly so the returned
/// pair satisfies the linear relation and complementarity to round-off.
inline LcpSolution solve_lcp(const Matrix& r, std::span<const double> theta) {
  const std::size_t n = theta.size();
  if (!r.square() || r.rows() != n) throw Error(ErrorKind::DimensionMismatch, "solve_lcp dimensions");

  LcpSolution sol;
  sol.u = Vector(n, 0.0);
  if (std::all_of(theta.begin(), theta.end(), [](double t) { return t >= 0.0; })) {
    sol.v = Vector(theta);
    return sol;
  }

  detail::LemkeTableau tab(r, theta);
  const long pivot_limit = 1L << std::min<std::size_t>(n, 20);

  std::size_t row = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const double qi = tab.at(i, tab.rhs()), qr = tab.at(row, tab.rhs());
    if (qi < qr || (qi == qr && tab.lex_less(i, row, tab.z0()))) row = i;
  }
  std::size_t leaving = tab.basic(row);
  tab.pivot(row, tab.z0());
  sol.pivots_used = 1;

  long complementary_pivots = 0;
  while (true) {
    const std::size_t entering = tab.complement(leaving);
    const double col_tol = 1e-12;
    std::size_t best = n;
    bool z0_candidate = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (tab.at(i, entering) <= col_tol) continue;
      if (best == n || tab.lex_less(i, best, entering)) best = i;
    }
    if (best == n) throw Error(ErrorKind::RayTermination, "no blocking row in Lemke pivot");
    // Let z0 leave whenever it ties for the minimum ratio.
    for (std::size_t i = 0; i < n; ++i) {
      if (tab.basic(i) != tab.z0() || tab.at(i, entering) <= col_tol) continue;
      const double ri = tab.at(i, tab.rhs()) / tab.at(i, entering);
      const double rb = tab.at(best, tab.rhs()) / tab.at(best, entering);
      if (ri <= rb + 1e-12 * std::max(1.0, std::abs(rb))) {
        best = i;
        z0_candidate = true;
      }
    }
    leaving = tab.basic(best);
    tab.pivot(best, entering);
    ++sol.pivots_used;
    if (z0_candidate || leaving == tab.z0()) break;
    if (++complementary_pivots > pivot_limit)
      throw Error(ErrorKind::PivotLimitExceeded, "Lemke exceeded " + std::to_string(pivot_limit) + " pivots");
  }

  Vector u(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t var = tab.basic(i);
    if (var >= n && var < 2 * n) u[var - n] = std::max(0.0, tab.at(i, tab.rhs()));
  }
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i)
    if (u[i] > 0.0) active.push_back(i);

  // Polish: solve R_AA u_A = -theta_A on the identified active set.
  if (!active.empty()) {
    Matrix ra(active.size(), active.size());
    Vector rhs(active.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      rhs[a] = -theta[active[a]];
      for (std::size_t b = 0; b < active.size(); ++b) ra(a, b) = r(active[a], active[b]);
    }
    try {
      const Vector ua = solve_linear(ra, rhs);
      if (std::all_of(ua.begin(), ua.end(), [](double x) { return x >= 0.0; })) {
        u.fill(0.0);
        for (std::size_t a = 0; a < active.size(); ++a) u[active[a]] = ua[a];
      }
    } catch (const Error&) {
      // keep the pivoting values
    }
  }

  Vector v(theta);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) v[i] += r(i, j) * u[j];
  sol.active_set.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (u[i] > 0.0) {
      sol.active_set.push_back(i);
      v[i] = 0.0;
    } else {
      u[i] = 0.0;
    }
  }
  sol.u = std::move(u);
  sol.v = std::move(v);
  return sol;
}

inline LcpSolution solve_lcp(const Matrix& r, const Vector& theta) { return solve_lcp(r, theta.span()); }

}  // namespace refsim
