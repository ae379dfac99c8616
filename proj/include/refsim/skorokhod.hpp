#pragma once

// Time-1 Skorokhod map in the nonnegative orthant, S(x, theta) = Gamma(x + theta t)(1),
// evaluated by localization: on each piece the constrained coordinates and the
// push rates come from an LCP on the active faces, and the path moves linearly
// until a free coordinate reaches zero.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/lcp.hpp"
#include "refsim/numerics.hpp"

namespace refsim {

struct SkorokhodConfig {
  double active_tol = 1e-12;
  /// Chattering threshold; 0 selects 16 * m.
  int max_events = 0;

  int events_for(std::size_t m) const { return max_events > 0 ? max_events : static_cast<int>(16 * m); }
};

struct Segment {
  double duration = 0.0;
  Vector start;
  Vector velocity;
  Vector push_rate;  ///< u_i for every face, zero off the active set
};

struct ReflectionBreakdown {
  Vector endpoint;
  Vector face_push;  ///< L^i: time-integrated push along d_i
  std::vector<Segment> segments;
  bool truncated = false;
  Vector z_end;  ///< unconstrained endpoint x + theta
  /// max over the path of |x(s) - x|; piecewise linear so attained at a vertex
  double excursion = 0.0;
};

inline constexpr double kEndpointSnap = 1e-14;

inline std::vector<std::size_t> active_set(std::span<const double> x, double tol) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < -tol) throw Error(ErrorKind::OutsideDomain, "coordinate " + std::to_string(j) + " is negative");
    if (x[j] <= tol) out.push_back(j);
  }
  return out;
}

/// Evaluates the map into `out`, reusing its storage. Segment recording is
/// optional because the simulation loop only needs the endpoint and pushes.
inline void reflect_into(std::span<const double> x, std::span<const double> theta, const Matrix& r,
                         const SkorokhodConfig& cfg, ReflectionBreakdown& out, bool record_segments = true) {
  const std::size_t m = x.size();
  if (theta.size() != m || r.rows() != m || !r.square())
    throw Error(ErrorKind::DimensionMismatch, "reflect dimensions disagree");

  out.endpoint.resize(m);
  out.face_push.resize(m);
  out.z_end.resize(m);
  out.segments.clear();
  out.truncated = false;
  out.excursion = 0.0;

  bool interior_path = true;
  for (std::size_t j = 0; j < m; ++j) {
    if (x[j] < -cfg.active_tol) throw Error(ErrorKind::OutsideDomain, "coordinate " + std::to_string(j) + " is negative");
    out.z_end[j] = x[j] + theta[j];
    if (!(out.z_end[j] > 0.0)) interior_path = false;
  }

  // The segment [x, x+theta] lies in G by convexity, so no constraint acts.
  if (interior_path) {
    for (std::size_t j = 0; j < m; ++j) {
      out.endpoint[j] = out.z_end[j];
      if (out.endpoint[j] < kEndpointSnap) out.endpoint[j] = 0.0;
    }
    out.excursion = norm2(theta);
    if (record_segments) {
      Segment s;
      s.duration = 1.0;
      s.start = Vector(x);
      s.velocity = Vector(theta);
      s.push_rate = Vector(m, 0.0);
      out.segments.push_back(std::move(s));
    }
    return;
  }

  Vector pos(x);
  Vector w(m);
  Vector push(m);
  std::vector<std::size_t> active;
  double remaining = 1.0;
  const int max_events = cfg.events_for(m);

  auto update_excursion = [&] {
    double d2 = 0.0;
    for (std::size_t j = 0; j < m; ++j) d2 += (pos[j] - x[j]) * (pos[j] - x[j]);
    out.excursion = std::max(out.excursion, std::sqrt(d2));
  };

  int events = 0;
  for (; events < max_events && remaining > 0.0; ++events) {
    active.clear();
    for (std::size_t j = 0; j < m; ++j)
      if (pos[j] <= cfg.active_tol) {
        active.push_back(j);
        pos[j] = 0.0;
      }

    push.fill(0.0);
    for (std::size_t j = 0; j < m; ++j) w[j] = theta[j];
    if (!active.empty()) {
      const std::size_t p = active.size();
      Matrix rj(p, p);
      Vector tj(p);
      for (std::size_t a = 0; a < p; ++a) {
        tj[a] = theta[active[a]];
        for (std::size_t b = 0; b < p; ++b) rj(a, b) = r(active[a], active[b]);
      }
      LcpSolution sol;
      try {
        sol = solve_lcp(rj, tj);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::RayTermination || e.kind() == ErrorKind::PivotLimitExceeded)
          throw Error(ErrorKind::AdmissibilityViolated, e.what());
        throw;
      }
      for (std::size_t a = 0; a < p; ++a) {
        const double ua = sol.u[a];
        push[active[a]] = ua;
        if (ua == 0.0) continue;
        for (std::size_t i = 0; i < m; ++i) w[i] += ua * r(i, active[a]);
      }
      for (std::size_t a = 0; a < p; ++a) w[active[a]] = sol.v[a];
    }

    // Next contact: a strictly positive coordinate moving towards its face.
    double tau = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (pos[j] > 0.0 && w[j] < 0.0) tau = std::min(tau, pos[j] / -w[j]);
    }
    const bool last = !(tau < remaining);
    const double dt = last ? remaining : tau;

    if (record_segments) {
      Segment s;
      s.duration = dt;
      s.start = pos;
      s.velocity = w;
      s.push_rate = push;
      out.segments.push_back(std::move(s));
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double hit = pos[j] > 0.0 && w[j] < 0.0 ? pos[j] / -w[j] : std::numeric_limits<double>::infinity();
      pos[j] += w[j] * dt;
      out.face_push[j] += push[j] * dt;
      if (!last && hit <= tau * (1.0 + 1e-12) + 1e-15) pos[j] = 0.0;
    }
    update_excursion();
    remaining = last ? 0.0 : remaining - dt;
  }

  if (remaining > 0.0) {
    out.truncated = true;
    out.endpoint.fill(0.0);
    return;
  }
  for (std::size_t j = 0; j < m; ++j) out.endpoint[j] = pos[j] < kEndpointSnap ? 0.0 : pos[j];
}

inline ReflectionBreakdown reflect(std::span<const double> x, std::span<const double> theta, const Matrix& r,
                                   const SkorokhodConfig& cfg = {}) {
  ReflectionBreakdown out;
  reflect_into(x, theta, r, cfg, out, true);
  return out;
}

inline ReflectionBreakdown reflect(const Vector& x, const Vector& theta, const Matrix& r,
                                   const SkorokhodConfig& cfg = {}) {
  return reflect(x.span(), theta.span(), r, cfg);
}

/// Gamma(x + theta t)(t) at the requested times in [0, 1].
inline std::vector<Vector> reflect_path_check(const Vector& x, const Vector& theta, const Matrix& r,
                                              const SkorokhodConfig& cfg, std::span<const double> probes) {
  const ReflectionBreakdown br = reflect(x, theta, r, cfg);
  std::vector<Vector> points;
  points.reserve(probes.size());
  for (double t : probes) {
    double t0 = 0.0;
    bool found = false;
    for (const Segment& s : br.segments) {
      if (t <= t0 + s.duration) {
        Vector p = s.start;
        const double dt = t - t0;
        for (std::size_t j = 0; j < p.size(); ++j) {
          p[j] += s.velocity[j] * dt;
          if (p[j] < kEndpointSnap) p[j] = 0.0;
        }
        points.push_back(std::move(p));
        found = true;
        break;
      }
      t0 += s.duration;
    }
    if (!found) points.push_back(br.truncated ? Vector(x.size(), 0.0) : br.endpoint);
  }
  return points;
}

}  // namespace refsim
