#pragma once

// Decreasing-step projected Euler recursion
//   Y_{k+1} = X_k + b(X_k) lambda_{k+1} + sigma(X_k) sqrt(lambda_{k+1}) U_{k+1}
//   X_{k+1} = S(X_k, Y_{k+1} - X_k)
// Each step emits the atom (X_k, lambda_{k+1}), so that nu_n weights X_{k-1} by lambda_k.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/measure.hpp"
#include "refsim/model.hpp"
#include "refsim/noise.hpp"
#include "refsim/numerics.hpp"
#include "refsim/skorokhod.hpp"

namespace refsim {

class StepSchedule {
 public:
  enum class Kind { Power, Explicit };

  StepSchedule() = default;

  /// lambda_k = c k^{-exponent}. exponent = 0 gives a constant step, which is
  /// only meaningful for fixed-step comparison runs.
  static StepSchedule power(double c, double exponent) {
    if (!(c > 0.0) || !std::isfinite(c))
      throw Error(ErrorKind::ParameterOutOfRange, "schedule constant c must be positive");
    if (!(exponent >= 0.0 && exponent <= 1.0))
      throw Error(ErrorKind::ParameterOutOfRange, "schedule exponent must lie in [0, 1]");
    StepSchedule s;
    s.kind_ = Kind::Power;
    s.c_ = c;
    s.exponent_ = exponent;
    return s;
  }

  static StepSchedule explicit_list(std::vector<double> steps) {
    if (steps.empty()) throw Error(ErrorKind::ParameterOutOfRange, "explicit schedule is empty");
    for (double l : steps)
      if (!(l > 0.0) || !std::isfinite(l))
        throw Error(ErrorKind::ParameterOutOfRange, "explicit schedule entries must be positive");
    StepSchedule s;
    s.kind_ = Kind::Explicit;
    s.steps_ = std::move(steps);
    return s;
  }

  Kind kind() const noexcept { return kind_; }
  double c() const noexcept { return c_; }
  double exponent() const noexcept { return exponent_; }
  const std::vector<double>& steps() const noexcept { return steps_; }
  /// Number of available steps (0 = unbounded).
  std::uint64_t length() const noexcept { return kind_ == Kind::Explicit ? steps_.size() : 0; }

  /// lambda_k for k >= 1.
  double lambda(std::uint64_t k) const {
    if (k == 0) throw Error(ErrorKind::ParameterOutOfRange, "step index starts at 1");
    if (kind_ == Kind::Explicit) {
      if (k > steps_.size()) throw Error(ErrorKind::ParameterOutOfRange, "explicit schedule exhausted");
      return steps_[k - 1];
    }
    if (exponent_ == 0.0) return c_;
    if (exponent_ == 1.0) return c_ / static_cast<double>(k);
    if (exponent_ == 0.5) return c_ / std::sqrt(static_cast<double>(k));
    return c_ * std::pow(static_cast<double>(k), -exponent_);
  }

  /// lambda_0 = sup_k lambda_k.
  double sup() const {
    if (kind_ == Kind::Power) return c_;
    double s = 0.0;
    for (double l : steps_) s = std::max(s, l);
    return s;
  }

 private:
  Kind kind_ = Kind::Power;
  double c_ = 1.0;
  double exponent_ = 0.5;
  std::vector<double> steps_;
};

/// Compensated running sums Lambda_n, Lambda_n^{(3/2)} and Lambda_n^{(a)} for requested a.
struct ScheduleAccumulators {
  KahanSum lambda;
  KahanSum lambda_3_2;
  std::vector<std::pair<double, KahanSum>> powers;

  void request_power(double a) { powers.emplace_back(a, KahanSum{}); }

  void add(double l) {
    lambda.add(l);
    lambda_3_2.add(l * std::sqrt(l));
    for (auto& [a, s] : powers) s.add(std::pow(l, a));
  }

  bool operator==(const ScheduleAccumulators&) const = default;
};

struct ChainState {
  std::uint64_t k = 0;
  Vector x;
  RngStream stream;
  ScheduleAccumulators accumulators;
  std::uint64_t truncations = 0;

  bool operator==(const ChainState&) const = default;
};

inline ChainState initial_state(Vector x0, std::uint64_t seed, std::uint32_t replication,
                                std::span<const double> extra_powers = {}) {
  for (double v : x0)
    if (!(v >= 0.0)) throw Error(ErrorKind::OutsideDomain, "initial state must lie in the orthant");
  ChainState s;
  s.x = std::move(x0);
  s.stream = RngStream(seed, replication, 0);
  for (double a : extra_powers) s.accumulators.request_power(a);
  return s;
}

struct Atom {
  Vector x;
  double lambda = 0.0;
};

/// Per-step view handed to observers; references are valid only during the callback.
struct StepRecord {
  std::uint64_t k;  ///< index of the new state X_k
  const Vector& x_prev;
  double lambda;
  const Vector& increment;  ///< U_k
  const Vector& theta;      ///< Y_k - X_{k-1}
  const ReflectionBreakdown& breakdown;
  double drift_bound;  ///< a_1 used for the boundary audit
};

class Chain {
 public:
  Chain(const ProblemSpec& spec, StepSchedule schedule, NoiseModel noise, SkorokhodConfig cfg, ChainState state)
      : spec_(&spec), schedule_(std::move(schedule)), noise_(noise), cfg_(cfg), state_(std::move(state)) {
    const std::size_t m = spec.dimension();
    if (state_.x.size() != m) throw Error(ErrorKind::DimensionMismatch, "state dimension differs from spec");
    u_.resize(m);
    theta_.resize(m);
    prev_.resize(m);
    bound_ = std::max(spec.drift().is_constant() ? coefficient_norm(spec.drift().constant_value())
                                                 : spec.drift().declared_bound(),
                      spec.diffusion().is_constant() ? coefficient_norm(spec.diffusion().constant_value())
                                                     : spec.diffusion().declared_bound());
  }

  // The chain keeps a pointer to the problem.
  Chain(const ProblemSpec&&, StepSchedule, NoiseModel, SkorokhodConfig, ChainState) = delete;

  const ChainState& state() const noexcept { return state_; }
  ChainState& mutable_state() noexcept { return state_; }
  const StepSchedule& schedule() const noexcept { return schedule_; }
  const NoiseModel& noise() const noexcept { return noise_; }
  const ProblemSpec& spec() const noexcept { return *spec_; }

  void attach(WeightedMeasure* nu) { nu_ = nu; }
  void attach(BoundaryMeasure* mu) { mu_ = mu; }
  /// Segment recording is off by default; observers that need segments can enable it.
  void record_segments(bool on) { record_segments_ = on; }
  void set_observer(std::function<void(const StepRecord&)> obs) { observer_ = std::move(obs); }

  const ReflectionBreakdown& last_breakdown() const noexcept { return br_; }

  /// Advances one step and returns the emitted atom's weight lambda_{k+1}.
  double step() {
    const std::size_t m = spec_->dimension();
    const std::uint64_t next = state_.k + 1;
    const double l = schedule_.lambda(next);
    const double sl = std::sqrt(l);
    draw_increment_into(noise_, state_.stream, u_.span());

    const auto& drift = spec_->drift();
    const auto& diff = spec_->diffusion();
    if (drift.is_constant() && diff.is_constant()) {
      const Vector& b = drift.constant_value();
      const Matrix& s = diff.constant_value();
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += s(i, j) * u_[j];
        theta_[i] = b[i] * l + sl * acc;
      }
    } else {
      const Vector b = drift(state_.x.span());
      const Matrix s = diff(state_.x.span());
      if (!drift.is_constant() && coefficient_norm(b) > drift.declared_bound() * (1.0 + 1e-12))
        throw Error(ErrorKind::CoefficientBoundViolated, "drift '" + drift.name() + "' exceeds declared bound");
      if (!diff.is_constant() && coefficient_norm(s) > diff.declared_bound() * (1.0 + 1e-12))
        throw Error(ErrorKind::CoefficientBoundViolated, "diffusion '" + diff.name() + "' exceeds declared bound");
      if (!all_finite(b.span()) || !all_finite(s.flat()))
        throw Error(ErrorKind::CoefficientBoundViolated, "coefficient evaluation is not finite");
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += s(i, j) * u_[j];
        theta_[i] = b[i] * l + sl * acc;
      }
    }

    reflect_into(state_.x.span(), theta_.span(), spec_->reflection(), cfg_, br_, record_segments_);
    if (br_.truncated) ++state_.truncations;

    if (nu_) nu_->absorb(state_.x.span(), l);
    if (mu_) {
      const double audit = audit_bound(l);
      mu_->absorb(br_, audit);
    }
    state_.accumulators.add(l);
    if (observer_) {
      prev_ = state_.x;
      state_.x = br_.endpoint;
      state_.k = next;
      observer_(StepRecord{next, prev_, l, u_, theta_, br_, bound_});
    } else {
      state_.x = br_.endpoint;
      state_.k = next;
    }
    return l;
  }

  /// Runs n steps; `checkpoint` (if set) is invoked after every `cadence` steps.
  void run(std::uint64_t n, std::uint64_t cadence = 0, const std::function<void(const Chain&)>& checkpoint = {}) {
    for (std::uint64_t i = 1; i <= n; ++i) {
      step();
      if (checkpoint && cadence > 0 && state_.k % cadence == 0) checkpoint(*this);
    }
  }

  /// a_1 (K + 1)(lambda + sqrt(lambda)|U|) with K the realized excursion
  /// ratio (|x(1) - X| + sup |x(s) - X|) / |theta| of the current step.
  double audit_bound(double l) const {
    const double th = norm2(theta_.span());
    if (th == 0.0) return 0.0;
    double end_dist = 0.0;
    for (std::size_t j = 0; j < theta_.size(); ++j) {
      const double d = br_.endpoint[j] - state_.x[j];
      end_dist += d * d;
    }
    const double k_hat = (std::sqrt(end_dist) + br_.excursion) / th;
    return bound_ * (k_hat + 1.0) * (l + std::sqrt(l) * norm2(u_.span()));
  }

 private:
  const ProblemSpec* spec_;
  StepSchedule schedule_;
  NoiseModel noise_;
  SkorokhodConfig cfg_;
  ChainState state_;
  WeightedMeasure* nu_ = nullptr;
  BoundaryMeasure* mu_ = nullptr;
  std::function<void(const StepRecord&)> observer_;
  bool record_segments_ = false;
  double bound_ = 0.0;
  Vector u_, theta_, prev_;
  ReflectionBreakdown br_;
};

/// Single functional step: returns the successor state and the emitted atom (X_k, lambda_{k+1}).
inline std::pair<ChainState, Atom> step(const ChainState& state, const ProblemSpec& spec, const StepSchedule& sched,
                                        const NoiseModel& model, const SkorokhodConfig& cfg = {}) {
  Chain chain(spec, sched, model, cfg, state);
  const double l = chain.step();
  return {chain.state(), Atom{state.x, l}};
}

struct RunSinks {
  WeightedMeasure* nu = nullptr;
  BoundaryMeasure* mu = nullptr;
};

inline ChainState run(const ProblemSpec& spec, const StepSchedule& sched, const NoiseModel& model,
                      const SkorokhodConfig& cfg, ChainState start, std::uint64_t n_steps, RunSinks sinks = {}) {
  Chain chain(spec, sched, model, cfg, std::move(start));
  if (sinks.nu) chain.attach(sinks.nu);
  if (sinks.mu) chain.attach(sinks.mu);
  chain.run(n_steps);
  return chain.state();
}

struct LambdaDiagnostics {
  double lambda_n = 0.0;
  double lambda_3_2 = 0.0;
  double ratio = 0.0;  ///< Lambda_n^{(3/2)} / sqrt(Lambda_n)
};

inline LambdaDiagnostics lambda_diagnostics(const StepSchedule& sched, std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::ParameterOutOfRange, "n must be at least 1");
  ScheduleAccumulators acc;
  for (std::uint64_t k = 1; k <= n; ++k) acc.add(sched.lambda(k));
  LambdaDiagnostics d;
  d.lambda_n = acc.lambda.value();
  d.lambda_3_2 = acc.lambda_3_2.value();
  d.ratio = d.lambda_3_2 / std::sqrt(d.lambda_n);
  return d;
}

}  // namespace refsim
