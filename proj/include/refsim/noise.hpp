#pragma once

// Reproducible increments U_k with mean 0, unit variance and sub-Gaussian tails.
//
// Streams are Philox4x32-10 (Salmon et al., SC'11) keyed by the 64-bit master
// seed. The 128-bit counter is laid out as
//   word 0-1: block index (the stream counter, little-endian 64-bit)
//   word 2  : replication index
//   word 3  : lane (0 = increments, 1 = auxiliary sampling such as reservoirs)
// so replication streams are disjoint by construction. One block yields two
// 64-bit outputs; every coordinate of an increment consumes one output, so a
// draw of dimension m advances the counter by ceil(m / 2) blocks.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/numerics.hpp"

namespace refsim {

inline constexpr std::string_view kRngAlgorithm = "philox4x32-10/v1";

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{M0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{M1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += W0;
    key[1] += W1;
  }
  return ctr;
}

class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t master_seed, std::uint32_t replication_index, std::uint32_t lane = 0,
            std::uint64_t counter = 0)
      : seed_(master_seed), replication_(replication_index), lane_(lane), counter_(counter) {}

  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint32_t replication_index() const noexcept { return replication_; }
  std::uint32_t lane() const noexcept { return lane_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Two 64-bit words from the current block; advances the counter by one.
  std::array<std::uint64_t, 2> next_block() {
    const auto out = philox4x32_10(
        {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32), replication_, lane_},
        {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
    ++counter_;
    return {(std::uint64_t{out[1]} << 32) | out[0], (std::uint64_t{out[3]} << 32) | out[2]};
  }

  /// Uniform on the open interval (0, 1) from the top 52 bits; both ends are excluded exactly.
  static double to_unit(std::uint64_t word) noexcept {
    return (static_cast<double>(word >> 12) + 0.5) * 0x1.0p-52;
  }

  double next_uniform() { return to_unit(next_block()[0]); }

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint32_t replication_ = 0;
  std::uint32_t lane_ = 0;
  std::uint64_t counter_ = 0;
};

/// Inverse standard normal CDF (Wichura, AS241 PPND16; ~1e-16 relative).
inline double normal_quantile(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r + 6.7265770927008700853e4) * r +
                4.5921953931549871457e4) * r + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r + 3.9307895800092710610e4) * r +
                2.1213794301586595867e4) * r + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
               1.27045825245236838258e0) * r + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
               1.48103976427480074590e-1) * r + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
               2.65321895265761230930e-2) * r + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
               7.86869131145613259100e-4) * r + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

enum class NoiseLaw { StandardNormal, Rademacher, UniformScaled, TwoPointAsymmetric };

/// Law of each coordinate of U_k; all laws are centred with unit variance.
class NoiseModel {
 public:
  NoiseModel() = default;
  explicit NoiseModel(NoiseLaw law, double p = 0.5) : law_(law), p_(p) {
    if (law == NoiseLaw::TwoPointAsymmetric) {
      if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::ParameterOutOfRange, "two-point p must lie in (0, 1)");
      high_ = std::sqrt((1.0 - p) / p);
      low_ = -std::sqrt(p / (1.0 - p));
    }
  }

  static NoiseModel standard_normal() { return NoiseModel(NoiseLaw::StandardNormal); }
  static NoiseModel rademacher() { return NoiseModel(NoiseLaw::Rademacher); }
  static NoiseModel uniform_scaled() { return NoiseModel(NoiseLaw::UniformScaled); }
  static NoiseModel two_point_asymmetric(double p) { return NoiseModel(NoiseLaw::TwoPointAsymmetric, p); }

  /// Config key: standard_normal | rademacher | uniform_scaled | two_point_asymmetric
  static NoiseModel from_key(std::string_view key, double p = 0.2) {
    if (key == "standard_normal") return standard_normal();
    if (key == "rademacher") return rademacher();
    if (key == "uniform_scaled") return uniform_scaled();
    if (key == "two_point_asymmetric") return two_point_asymmetric(p);
    throw Error(ErrorKind::ConfigError, "unknown noise law '" + std::string(key) + "'");
  }

  NoiseLaw law() const noexcept { return law_; }
  double p() const noexcept { return p_; }

  std::string key() const {
    switch (law_) {
      case NoiseLaw::StandardNormal: return "standard_normal";
      case NoiseLaw::Rademacher: return "rademacher";
      case NoiseLaw::UniformScaled: return "uniform_scaled";
      case NoiseLaw::TwoPointAsymmetric: return "two_point_asymmetric";
    }
    return "";
  }

  /// Support bound c for bounded laws (0 for the normal law).
  double support_bound() const {
    switch (law_) {
      case NoiseLaw::StandardNormal: return 0.0;
      case NoiseLaw::Rademacher: return 1.0;
      case NoiseLaw::UniformScaled: return std::sqrt(3.0);
      case NoiseLaw::TwoPointAsymmetric: return std::max(high_, -low_);
    }
    return 0.0;
  }

  /// alpha with E exp(l U) <= exp(alpha l^2): 1/2 for the normal law,
  /// c^2 / 2 for laws supported in [-c, c].
  double sub_gaussian_alpha() const {
    if (law_ == NoiseLaw::StandardNormal) return 0.5;
    const double c = support_bound();
    return 0.5 * c * c;
  }

  double third_moment() const {
    if (law_ != NoiseLaw::TwoPointAsymmetric) return 0.0;
    return high_ * high_ * high_ * p_ + low_ * low_ * low_ * (1.0 - p_);
  }

  double sample(std::uint64_t word) const {
    switch (law_) {
      case NoiseLaw::StandardNormal: return normal_quantile(RngStream::to_unit(word));
      case NoiseLaw::Rademacher: return (word >> 63) ? 1.0 : -1.0;
      case NoiseLaw::UniformScaled: return std::sqrt(3.0) * (2.0 * RngStream::to_unit(word) - 1.0);
      case NoiseLaw::TwoPointAsymmetric: return RngStream::to_unit(word) < p_ ? high_ : low_;
    }
    return 0.0;
  }

 private:
  NoiseLaw law_ = NoiseLaw::StandardNormal;
  double p_ = 0.5;
  double high_ = 0.0;
  double low_ = 0.0;
};

inline void draw_increment_into(const NoiseModel& model, RngStream& stream, std::span<double> out) {
  const std::size_t m = out.size();
  for (std::size_t j = 0; j < m; j += 2) {
    const auto words = stream.next_block();
    out[j] = model.sample(words[0]);
    if (j + 1 < m) out[j + 1] = model.sample(words[1]);
  }
}

inline Vector draw_increment(const NoiseModel& model, RngStream& stream, std::size_t m) {
  Vector u(m);
  draw_increment_into(model, stream, u.span());
  return u;
}

struct SubGaussianCheck {
  std::vector<double> lambdas;
  std::vector<double> ratios;           ///< log E e^{lU} / l^2 (sample estimate)
  std::vector<double> standard_errors;  ///< delta-method standard error of each ratio
  double max_ratio = 0.0;
  bool pass = true;  ///< every ratio <= alpha + 3 standard errors
};

inline SubGaussianCheck empirical_subgaussian_check(const NoiseModel& model, std::span<const double> lambdas,
                                                    std::size_t samples, RngStream stream) {
  std::vector<double> draws(samples);
  for (std::size_t i = 0; i < samples; i += 2) {
    const auto words = stream.next_block();
    draws[i] = model.sample(words[0]);
    if (i + 1 < samples) draws[i + 1] = model.sample(words[1]);
  }
  SubGaussianCheck out;
  out.max_ratio = -std::numeric_limits<double>::infinity();
  const double alpha = model.sub_gaussian_alpha();
  for (double l : lambdas) {
    if (l == 0.0) continue;
    double mean = 0.0, sq = 0.0;
    for (double u : draws) {
      const double e = std::exp(l * u);
      mean += e;
      sq += e * e;
    }
    mean /= static_cast<double>(samples);
    const double var = std::max(0.0, sq / static_cast<double>(samples) - mean * mean);
    const double ratio = std::log(mean) / (l * l);
    const double se = std::sqrt(var / static_cast<double>(samples)) / mean / (l * l);
    out.lambdas.push_back(l);
    out.ratios.push_back(ratio);
    out.standard_errors.push_back(se);
    out.max_ratio = std::max(out.max_ratio, ratio);
    if (ratio > alpha + 3.0 * se) out.pass = false;
  }
  return out;
}

}  // namespace refsim
