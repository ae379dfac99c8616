#pragma once

// Streaming weighted empirical measure nu_n = (1/Lambda_n) sum_k lambda_k delta_{X_{k-1}}
// and the boundary measures mu_n^i built from per-step reflection pushes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/noise.hpp"
#include "refsim/numerics.hpp"
#include "refsim/skorokhod.hpp"

namespace refsim {

using ScalarFunction = std::function<double(std::span<const double>)>;

struct HistogramConfig {
  std::size_t bins = 2000;
  double x_max = 20.0;

  double width() const { return x_max / static_cast<double>(bins); }
  bool operator==(const HistogramConfig&) const = default;
};

/// Per-coordinate histogram. Exact zeros (boundary atoms) get their own cell,
/// bins are (e_j, e_{j+1}] with e_j = j * width, and x > x_max overflows.
struct CoordinateHistogram {
  double zero = 0.0;
  std::vector<double> bins;
  double overflow = 0.0;

  void add(double x, double w, const HistogramConfig& cfg) {
    if (x <= 0.0) {
      zero += w;
    } else if (x > cfg.x_max) {
      overflow += w;
    } else {
      auto idx = static_cast<std::size_t>(std::ceil(x / cfg.width())) - 1;
      bins[std::min(idx, bins.size() - 1)] += w;
    }
  }
  double total() const {
    double s = zero + overflow;
    for (double b : bins) s += b;
    return s;
  }
};

struct WeightedAtom {
  Vector x;
  double weight = 0.0;
  double key = 0.0;  ///< priority weight / u
};

struct MarginalStats {
  std::vector<double> grid;  ///< e_0 = 0, ..., e_bins = x_max
  std::vector<double> cdf;   ///< nu_n(x_c <= e_j)
  std::vector<std::pair<double, double>> quantiles;  ///< (p, lower p-quantile on the grid)
  std::optional<double> ks;  ///< sup over the grid of |cdf - reference|
};

class WeightedMeasure {
 public:
  struct Accumulators {
    std::uint64_t count = 0;
    KahanSum total;
    std::vector<std::array<KahanSum, 4>> raw;  ///< sum lambda x_c^p, p = 1..4
    std::vector<KahanSum> cross;               ///< sum lambda x_i x_j, i <= j, packed upper triangle
    std::vector<CoordinateHistogram> histograms;
    std::map<std::string, KahanSum, std::less<>> sinks;
    std::vector<WeightedAtom> reservoir;  ///< min-heap on key
    double threshold = 0.0;               ///< largest key ever evicted or rejected
    RngStream reservoir_stream;
  };

  WeightedMeasure() = default;
  explicit WeightedMeasure(std::size_t m, HistogramConfig hist = {}, std::size_t reservoir_capacity = 0,
                           RngStream reservoir_stream = {})
      : m_(m), hist_(hist), capacity_(reservoir_capacity) {
    acc_.raw.resize(m);
    acc_.cross.resize(m * (m + 1) / 2);
    acc_.histograms.resize(m);
    for (auto& h : acc_.histograms) h.bins.assign(hist_.bins, 0.0);
    acc_.reservoir_stream = reservoir_stream;
  }

  std::size_t dimension() const noexcept { return m_; }
  const HistogramConfig& histogram_config() const noexcept { return hist_; }
  std::size_t reservoir_capacity() const noexcept { return capacity_; }

  /// Streaming sink: nu_n(f) accumulated exactly. Register before absorbing.
  void register_function(std::string name, ScalarFunction f) {
    acc_.sinks.try_emplace(name);
    functions_.insert_or_assign(std::move(name), std::move(f));
  }
  bool has_function(std::string_view name) const { return functions_.find(name) != functions_.end(); }

  void absorb(std::span<const double> x, double lambda) {
    ++acc_.count;
    acc_.total.add(lambda);
    std::size_t p = 0;
    for (std::size_t i = 0; i < m_; ++i) {
      const double xi = x[i];
      double pw = lambda * xi;
      for (int k = 0; k < 4; ++k) {
        acc_.raw[i][k].add(pw);
        pw *= xi;
      }
      for (std::size_t j = i; j < m_; ++j) acc_.cross[p++].add(lambda * xi * x[j]);
      acc_.histograms[i].add(xi, lambda, hist_);
    }
    for (auto& [name, f] : functions_) acc_.sinks.find(name)->second.add(lambda * f(x));
    if (capacity_ > 0) offer_reservoir(x, lambda);
  }

  std::uint64_t count() const noexcept { return acc_.count; }
  double total_weight() const noexcept { return acc_.total.value(); }
  double mass() const { return total_weight() > 0.0 ? acc_.total.value() / total_weight() : 0.0; }

  double raw_moment(std::size_t coord, int order) const {
    require_nonempty();
    return acc_.raw.at(coord).at(order - 1).value() / total_weight();
  }
  double mean(std::size_t coord) const { return raw_moment(coord, 1); }
  double variance(std::size_t coord) const {
    const double mu = mean(coord);
    return std::max(0.0, raw_moment(coord, 2) - mu * mu);
  }
  double cross_moment(std::size_t i, std::size_t j) const {
    require_nonempty();
    if (i > j) std::swap(i, j);
    const std::size_t idx = i * m_ - i * (i - 1) / 2 + (j - i);
    return acc_.cross.at(idx).value() / total_weight();
  }

  /// Exact nu_n(f) for a registered sink.
  double integrate(std::string_view name) const {
    const auto it = acc_.sinks.find(name);
    if (it == acc_.sinks.end())
      throw Error(ErrorKind::UnregisteredFunction, "no streaming sink named '" + std::string(name) + "'");
    require_nonempty();
    return it->second.value() / total_weight();
  }

  /// nu_n(f) for an arbitrary f, approximated from the priority-sampled reservoir:
  /// retained atoms carry max(lambda, threshold), which makes the sums unbiased.
  /// The ratio form keeps the mass at 1.
  double integrate(const ScalarFunction& f) const {
    if (capacity_ == 0 || acc_.reservoir.empty())
      throw Error(ErrorKind::UnregisteredFunction, "function not registered and no reservoir retained");
    double s = 0.0, w = 0.0;
    for (const auto& a : acc_.reservoir) {
      const double aw = std::max(a.weight, acc_.threshold);
      s += aw * f(a.x.span());
      w += aw;
    }
    return s / w;
  }

  MarginalStats marginal_stats(std::size_t coord, std::span<const double> probabilities = {},
                               const std::function<double(double)>& reference_cdf = {}) const {
    if (acc_.count == 0 || !(total_weight() > 0.0)) throw Error(ErrorKind::EmptyMeasure, "no atoms absorbed");
    const auto& h = acc_.histograms.at(coord);
    const double total = total_weight();
    MarginalStats out;
    out.grid.resize(hist_.bins + 1);
    out.cdf.resize(hist_.bins + 1);
    double running = h.zero;
    out.grid[0] = 0.0;
    out.cdf[0] = std::min(1.0, running / total);
    for (std::size_t j = 0; j < hist_.bins; ++j) {
      running += h.bins[j];
      out.grid[j + 1] = static_cast<double>(j + 1) * hist_.width();
      out.cdf[j + 1] = std::min(1.0, running / total);
    }
    for (double p : probabilities) {
      double q = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < out.grid.size(); ++j)
        if (out.cdf[j] >= p * (1.0 - 1e-14)) {
          q = out.grid[j];
          break;
        }
      out.quantiles.emplace_back(p, q);
    }
    if (reference_cdf) {
      double ks = 0.0;
      for (std::size_t j = 0; j < out.grid.size(); ++j)
        ks = std::max(ks, std::abs(out.cdf[j] - reference_cdf(out.grid[j])));
      out.ks = ks;
    }
    return out;
  }

  const std::vector<WeightedAtom>& reservoir() const noexcept { return acc_.reservoir; }

  /// Accumulator-wise sum. Merging replications estimates the same limit but is
  /// not the single-chain nu for the concatenated run (different weights).
  void merge(const WeightedMeasure& other) {
    if (other.m_ != m_ || !(other.hist_ == hist_) || other.capacity_ != capacity_)
      throw Error(ErrorKind::ConfigMismatch, "measures differ in dimension, histogram or reservoir configuration");
    acc_.count += other.acc_.count;
    merge_sum(acc_.total, other.acc_.total);
    for (std::size_t i = 0; i < m_; ++i)
      for (int k = 0; k < 4; ++k) merge_sum(acc_.raw[i][k], other.acc_.raw[i][k]);
    for (std::size_t p = 0; p < acc_.cross.size(); ++p) merge_sum(acc_.cross[p], other.acc_.cross[p]);
    for (std::size_t i = 0; i < m_; ++i) {
      auto& h = acc_.histograms[i];
      const auto& o = other.acc_.histograms[i];
      h.zero += o.zero;
      h.overflow += o.overflow;
      for (std::size_t j = 0; j < h.bins.size(); ++j) h.bins[j] += o.bins[j];
    }
    for (const auto& [name, sum] : other.acc_.sinks) merge_sum(acc_.sinks[name], sum);
    acc_.threshold = std::max(acc_.threshold, other.acc_.threshold);
    for (const auto& atom : other.acc_.reservoir) push_reservoir(atom);
  }

  const Accumulators& accumulators() const noexcept { return acc_; }
  /// Restores checkpointed accumulators; registered functions are kept.
  void restore(Accumulators acc) {
    if (acc.raw.size() != m_ || acc.histograms.size() != m_)
      throw Error(ErrorKind::CheckpointCorrupt, "measure dimension mismatch");
    for (const auto& h : acc.histograms)
      if (h.bins.size() != hist_.bins) throw Error(ErrorKind::CheckpointCorrupt, "histogram bin count mismatch");
    acc_ = std::move(acc);
    for (const auto& [name, f] : functions_) acc_.sinks.try_emplace(name);
  }

 private:
  static void merge_sum(KahanSum& into, const KahanSum& from) {
    into.add(from.sum);
    into.add(from.comp);
  }

  void require_nonempty() const {
    if (acc_.count == 0) throw Error(ErrorKind::EmptyMeasure, "no atoms absorbed");
  }

  static bool heap_cmp(const WeightedAtom& a, const WeightedAtom& b) { return a.key > b.key; }

  void push_reservoir(const WeightedAtom& atom) {
    auto& r = acc_.reservoir;
    if (r.size() < capacity_) {
      r.push_back(atom);
      std::push_heap(r.begin(), r.end(), heap_cmp);
    } else if (atom.key > r.front().key) {
      acc_.threshold = std::max(acc_.threshold, r.front().key);
      std::pop_heap(r.begin(), r.end(), heap_cmp);
      r.back() = atom;
      std::push_heap(r.begin(), r.end(), heap_cmp);
    } else {
      acc_.threshold = std::max(acc_.threshold, atom.key);
    }
  }

  void offer_reservoir(std::span<const double> x, double lambda) {
    const double key = lambda / acc_.reservoir_stream.next_uniform();
    if (acc_.reservoir.size() >= capacity_ && key <= acc_.reservoir.front().key) {
      acc_.threshold = std::max(acc_.threshold, key);
      return;
    }
    push_reservoir(WeightedAtom{Vector(x), lambda, key});
  }

  std::size_t m_ = 0;
  HistogramConfig hist_;
  std::size_t capacity_ = 0;
  Accumulators acc_;
  std::map<std::string, ScalarFunction, std::less<>> functions_;
};

/// Quadrature in t on [0, 1] for the segment Pi^t = z(1) + t (x(1) - z(1)).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  static QuadratureRule gauss_legendre3() {
    const double h = 0.5 * std::sqrt(0.6);
    return {{0.5 - h, 0.5, 0.5 + h}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
  }
};

struct BoundaryAtom {
  std::size_t face = 0;
  std::uint64_t step = 0;
  Vector point;
  double weight = 0.0;
  double distance_bound = std::numeric_limits<double>::quiet_NaN();  ///< audited bound on |point_face|
};

/// Unnormalized sums behind mu_n^i: for face i, the atoms (Pi_k^t, w_t L_k^i).
/// Division by Lambda_n happens at read time.
class BoundaryMeasure {
 public:
  struct Accumulators {
    std::vector<KahanSum> mass;                                    ///< sum_k L_k^i per face
    std::vector<std::map<std::string, KahanSum, std::less<>>> sinks;  ///< per face
    std::uint64_t steps = 0;
  };

  BoundaryMeasure() = default;
  explicit BoundaryMeasure(std::size_t m, std::size_t atom_log_capacity = 0,
                           QuadratureRule rule = QuadratureRule::gauss_legendre3())
      : m_(m), log_capacity_(atom_log_capacity), rule_(std::move(rule)) {
    acc_.mass.resize(m);
    acc_.sinks.resize(m);
    functions_.resize(m);
  }

  std::size_t dimension() const noexcept { return m_; }

  void register_function(std::size_t face, std::string name, ScalarFunction f) {
    acc_.sinks.at(face).try_emplace(name);
    functions_.at(face).insert_or_assign(std::move(name), std::move(f));
  }
  bool has_function(std::size_t face, std::string_view name) const {
    return functions_.at(face).find(name) != functions_.at(face).end();
  }

  void absorb(const ReflectionBreakdown& br, double distance_bound = std::numeric_limits<double>::quiet_NaN()) {
    const std::uint64_t step = acc_.steps++;
    bool any = false;
    for (std::size_t i = 0; i < m_; ++i) any = any || br.face_push[i] > 0.0;
    if (!any) return;
    Vector pi(m_);
    for (std::size_t q = 0; q < rule_.nodes.size(); ++q) {
      const double t = rule_.nodes[q];
      for (std::size_t j = 0; j < m_; ++j) pi[j] = br.z_end[j] + t * (br.endpoint[j] - br.z_end[j]);
      for (std::size_t i = 0; i < m_; ++i) {
        const double l = br.face_push[i];
        if (!(l > 0.0)) continue;
        const double w = rule_.weights[q] * l;
        for (auto& [name, f] : functions_[i]) acc_.sinks[i].find(name)->second.add(w * f(pi.span()));
        if (atoms_.size() < log_capacity_) atoms_.push_back({i, step, pi, w, distance_bound});
      }
    }
    for (std::size_t i = 0; i < m_; ++i)
      if (br.face_push[i] > 0.0) acc_.mass[i].add(br.face_push[i]);
  }

  /// Unnormalized face mass sum_k L_k^i.
  double raw_mass(std::size_t face) const { return acc_.mass.at(face).value(); }

  /// mu_n^i(psi) = (1/Lambda_n) sum_k int_0^1 psi(Pi_k^t) L_k^i dt.
  double integrate(std::size_t face, std::string_view name, double lambda_total) const {
    const auto& sinks = acc_.sinks.at(face);
    const auto it = sinks.find(name);
    if (it == sinks.end())
      throw Error(ErrorKind::UnregisteredFunction, "no boundary sink '" + std::string(name) + "' on face " +
                                                       std::to_string(face));
    return it->second.value() / lambda_total;
  }

  const std::vector<BoundaryAtom>& atom_log() const noexcept { return atoms_; }

  void merge(const BoundaryMeasure& other) {
    if (other.m_ != m_) throw Error(ErrorKind::ConfigMismatch, "boundary measures differ in dimension");
    for (std::size_t i = 0; i < m_; ++i) {
      acc_.mass[i].add(other.acc_.mass[i].sum);
      acc_.mass[i].add(other.acc_.mass[i].comp);
      for (const auto& [name, s] : other.acc_.sinks[i]) {
        acc_.sinks[i][name].add(s.sum);
        acc_.sinks[i][name].add(s.comp);
      }
    }
    acc_.steps += other.acc_.steps;
  }

  const Accumulators& accumulators() const noexcept { return acc_; }
  void restore(Accumulators acc) {
    if (acc.mass.size() != m_ || acc.sinks.size() != m_)
      throw Error(ErrorKind::CheckpointCorrupt, "boundary measure dimension mismatch");
    acc_ = std::move(acc);
    for (std::size_t i = 0; i < m_; ++i)
      for (const auto& [name, f] : functions_[i]) acc_.sinks[i].try_emplace(name);
  }

 private:
  std::size_t m_ = 0;
  std::size_t log_capacity_ = 0;
  QuadratureRule rule_;
  Accumulators acc_;
  std::vector<std::map<std::string, ScalarFunction, std::less<>>> functions_;
  std::vector<BoundaryAtom> atoms_;
};

}  // namespace refsim
