#pragma once

// Test functions, the generator A f = b.grad f + (1/2) tr(sigma^T D^2 f sigma),
// face derivatives D_i f = d_i . grad f, the Echeverria residual
//   r_n(f) = nu_n(A f) + sum_i mu_n^i(D_i f)
// and replicated studies of sqrt(Lambda_n) nu_n(A phi).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "refsim/error.hpp"
#include "refsim/measure.hpp"
#include "refsim/model.hpp"
#include "refsim/noise.hpp"
#include "refsim/numerics.hpp"
#include "refsim/parallel.hpp"
#include "refsim/scheme.hpp"
#include "refsim/skorokhod.hpp"

namespace refsim {

class TestFunction {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;
  using HessianFn = std::function<void(std::span<const double>, Matrix&)>;
  /// Writes D^3 f as an m*m*m row-major array (index (i*m + j)*m + k).
  using ThirdFn = std::function<void(std::span<const double>, std::span<double>)>;

  TestFunction() = default;
  TestFunction(std::string name, std::size_t m, ValueFn value, GradientFn gradient = {}, HessianFn hessian = {},
               ThirdFn third = {}, bool compact_interior = false, double fd_step = 1e-4)
      : name_(std::move(name)),
        m_(m),
        value_(std::move(value)),
        gradient_(std::move(gradient)),
        hessian_(std::move(hessian)),
        third_(std::move(third)),
        compact_interior_(compact_interior),
        h_(fd_step) {}

  const std::string& name() const noexcept { return name_; }
  std::size_t dimension() const noexcept { return m_; }
  bool compact_interior() const noexcept { return compact_interior_; }
  double fd_step() const noexcept { return h_; }
  bool has_gradient() const noexcept { return static_cast<bool>(gradient_); }
  bool has_hessian() const noexcept { return static_cast<bool>(hessian_); }
  bool has_third() const noexcept { return static_cast<bool>(third_); }

  double value(std::span<const double> x) const { return value_(x); }

  void gradient_into(std::span<const double> x, std::span<double> g) const {
    if (gradient_) return gradient_(x, g);
    require_fd("gradient");
    Vector p(x);
    for (std::size_t i = 0; i < m_; ++i) {
      p[i] = x[i] + h_;
      const double fp = value_(p.span());
      p[i] = x[i] - h_;
      const double fm = value_(p.span());
      p[i] = x[i];
      g[i] = (fp - fm) / (2.0 * h_);
    }
  }

  Vector gradient(std::span<const double> x) const {
    Vector g(m_);
    gradient_into(x, g.span());
    return g;
  }

  void hessian_into(std::span<const double> x, Matrix& out) const {
    if (hessian_) return hessian_(x, out);
    require_fd("hessian");
    Vector p(x), gp(m_), gm(m_);
    for (std::size_t j = 0; j < m_; ++j) {
      p[j] = x[j] + h_;
      gradient_into(p.span(), gp.span());
      p[j] = x[j] - h_;
      gradient_into(p.span(), gm.span());
      p[j] = x[j];
      for (std::size_t i = 0; i < m_; ++i) out(i, j) = (gp[i] - gm[i]) / (2.0 * h_);
    }
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = i + 1; j < m_; ++j) out(i, j) = out(j, i) = 0.5 * (out(i, j) + out(j, i));
  }

  Matrix hessian(std::span<const double> x) const {
    Matrix hm(m_, m_);
    hessian_into(x, hm);
    return hm;
  }

  std::vector<double> third(std::span<const double> x) const {
    std::vector<double> t(m_ * m_ * m_, 0.0);
    if (third_) {
      third_(x, t);
      return t;
    }
    require_fd("third derivative");
    Vector p(x);
    Matrix hp(m_, m_), hm(m_, m_);
    for (std::size_t k = 0; k < m_; ++k) {
      p[k] = x[k] + h_;
      hessian_into(p.span(), hp);
      p[k] = x[k] - h_;
      hessian_into(p.span(), hm);
      p[k] = x[k];
      for (std::size_t i = 0; i < m_; ++i)
        for (std::size_t j = 0; j < m_; ++j) t[(i * m_ + j) * m_ + k] = (hp(i, j) - hm(i, j)) / (2.0 * h_);
    }
    return t;
  }

  /// Smooth bump exp(1 - 1/(1 - s)), s = |x - c|^2 / r^2, supported on the open ball B(c, r).
  static TestFunction bump(Vector center, double radius, std::string name = "bump", double fd_step = 1e-4) {
    if (!(radius > 0.0)) throw Error(ErrorKind::ParameterOutOfRange, "bump radius must be positive");
    const std::size_t m = center.size();
    bool interior = true;
    for (double c : center) interior = interior && c - radius > fd_step;
    const double r2 = radius * radius;
    struct Core {
      double g1, g2, g3;
      bool inside;
    };
    // g(s) and its s-derivatives: g' = -q^2 g, g'' = g (q^4 - 2 q^3), g''' = g (-q^6 + 6 q^5 - 6 q^4).
    auto core = [center, r2, m](std::span<const double> x, Vector& y) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        y[i] = x[i] - center[i];
        s += y[i] * y[i];
      }
      s /= r2;
      if (s >= 1.0) return std::pair<double, Core>{0.0, Core{0, 0, 0, false}};
      const double q = 1.0 / (1.0 - s);
      const double g = std::exp(1.0 - q);
      const double q2 = q * q, q3 = q2 * q, q4 = q2 * q2;
      return std::pair<double, Core>{
          g, Core{-q2 * g, g * (q4 - 2.0 * q3), g * (-q4 * q2 + 6.0 * q4 * q - 6.0 * q4), true}};
    };
    auto value = [core, m](std::span<const double> x) {
      Vector y(m);
      return core(x, y).first;
    };
    auto gradient = [core, m, r2](std::span<const double> x, std::span<double> g) {
      Vector y(m);
      const auto [v, c] = core(x, y);
      for (std::size_t i = 0; i < m; ++i) g[i] = c.inside ? c.g1 * 2.0 * y[i] / r2 : 0.0;
    };
    auto hessian = [core, m, r2](std::span<const double> x, Matrix& h) {
      Vector y(m);
      const auto [v, c] = core(x, y);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          if (!c.inside) {
            h(i, j) = 0.0;
            continue;
          }
          const double si = 2.0 * y[i] / r2, sj = 2.0 * y[j] / r2;
          h(i, j) = c.g2 * si * sj + (i == j ? c.g1 * 2.0 / r2 : 0.0);
        }
    };
    auto third = [core, m, r2](std::span<const double> x, std::span<double> t) {
      Vector y(m);
      const auto [v, c] = core(x, y);
      const double d = 2.0 / r2;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t k = 0; k < m; ++k) {
            double& out = t[(i * m + j) * m + k];
            if (!c.inside) {
              out = 0.0;
              continue;
            }
            const double si = d * y[i], sj = d * y[j], sk = d * y[k];
            out = c.g3 * si * sj * sk +
                  c.g2 * ((i == j ? d : 0.0) * sk + (i == k ? d : 0.0) * sj + (j == k ? d : 0.0) * si);
          }
    };
    return TestFunction(std::move(name), m, value, gradient, hessian, third, interior, fd_step);
  }

  /// f(x) = a . x
  static TestFunction linear(Vector a, std::string name = "linear") {
    const std::size_t m = a.size();
    return TestFunction(
        std::move(name), m, [a](std::span<const double> x) { return dot(a.span(), x); },
        [a](std::span<const double>, std::span<double> g) { std::copy(a.begin(), a.end(), g.begin()); },
        [](std::span<const double>, Matrix& h) { h = Matrix(h.rows(), h.cols()); },
        [](std::span<const double>, std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  }

  /// f(x) = |x|^2 / 2
  static TestFunction half_square(std::size_t m, std::string name = "half_square") {
    return TestFunction(
        std::move(name), m, [](std::span<const double> x) { return 0.5 * dot(x, x); },
        [](std::span<const double> x, std::span<double> g) { std::copy(x.begin(), x.end(), g.begin()); },
        [m](std::span<const double>, Matrix& h) { h = Matrix::identity(m); },
        [](std::span<const double>, std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  }

  /// f(x) = sum_j x_j^3 / 6, so D^3_{jjj} f = 1 and all other third derivatives vanish.
  static TestFunction cubic_sum(std::size_t m, std::string name = "cubic_sum") {
    return TestFunction(
        std::move(name), m,
        [](std::span<const double> x) {
          double s = 0.0;
          for (double v : x) s += v * v * v;
          return s / 6.0;
        },
        [](std::span<const double> x, std::span<double> g) {
          for (std::size_t i = 0; i < x.size(); ++i) g[i] = 0.5 * x[i] * x[i];
        },
        [m](std::span<const double> x, Matrix& h) {
          h = Matrix(m, m);
          for (std::size_t i = 0; i < m; ++i) h(i, i) = x[i];
        },
        [m](std::span<const double>, std::span<double> t) {
          std::fill(t.begin(), t.end(), 0.0);
          for (std::size_t i = 0; i < m; ++i) t[(i * m + i) * m + i] = 1.0;
        });
  }

  static TestFunction zero(std::size_t m) {
    return TestFunction(
        "zero", m, [](std::span<const double>) { return 0.0; },
        [](std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); },
        [m](std::span<const double>, Matrix& h) { h = Matrix(m, m); },
        [](std::span<const double>, std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); }, true);
  }

 private:
  void require_fd(const char* what) const {
    if (!(h_ > 0.0))
      throw Error(ErrorKind::MissingDerivative, std::string(what) + " of '" + name_ + "' is not available");
  }

  std::string name_;
  std::size_t m_ = 0;
  ValueFn value_;
  GradientFn gradient_;
  HessianFn hessian_;
  ThirdFn third_;
  bool compact_interior_ = false;
  double h_ = 1e-4;
};

/// b(x).grad f(x) + (1/2) tr(sigma(x)^T D^2 f(x) sigma(x))
inline double generator_apply(const Vector& b, const Matrix& sigma, const TestFunction& f, std::span<const double> x) {
  const std::size_t m = x.size();
  const Vector g = f.gradient(x);
  const Matrix h = f.hessian(x);
  double out = dot(b.span(), g.span());
  double tr = 0.0;
  for (std::size_t l = 0; l < sigma.cols(); ++l)
    for (std::size_t i = 0; i < m; ++i) {
      if (sigma(i, l) == 0.0) continue;
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += h(i, j) * sigma(j, l);
      tr += sigma(i, l) * row;
    }
  return out + 0.5 * tr;
}

inline double generator_apply(const ProblemSpec& spec, const TestFunction& f, std::span<const double> x) {
  return generator_apply(spec.drift()(x), spec.diffusion()(x), f, x);
}

/// d_i . grad f(x)
inline double face_derivative(const Matrix& r, const TestFunction& f, std::size_t i, std::span<const double> x) {
  const Vector g = f.gradient(x);
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) s += r(j, i) * g[j];
  return s;
}

inline double face_derivative(const ProblemSpec& spec, const TestFunction& f, std::size_t i,
                              std::span<const double> x) {
  return face_derivative(spec.reflection(), f, i, x);
}

/// |sigma(x)^T grad f(x)|^2
inline double diffusion_energy(const Matrix& sigma, const TestFunction& f, std::span<const double> x) {
  const Vector g = f.gradient(x);
  double s = 0.0;
  for (std::size_t l = 0; l < sigma.cols(); ++l) {
    double c = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) c += sigma(i, l) * g[i];
    s += c * c;
  }
  return s;
}

/// -(1/6) E_U[D^3 f(x) (sigma U)^{(x)3}] for i.i.d. coordinates with third moment mu3.
inline double third_order_drift(const Matrix& sigma, const TestFunction& f, double mu3, std::span<const double> x) {
  if (mu3 == 0.0) return 0.0;
  const std::size_t m = x.size();
  const std::vector<double> t = f.third(x);
  double s = 0.0;
  for (std::size_t l = 0; l < sigma.cols(); ++l)
    for (std::size_t i = 0; i < m; ++i) {
      const double a = sigma(i, l);
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        const double b = sigma(j, l);
        if (b == 0.0) continue;
        for (std::size_t k = 0; k < m; ++k) s += t[(i * m + j) * m + k] * a * b * sigma(k, l);
      }
    }
  return -mu3 * s / 6.0;
}

inline std::string generator_sink_name(const TestFunction& f) { return "generator:" + f.name(); }
inline std::string face_sink_name(const TestFunction& f) { return "face:" + f.name(); }

/// Registers nu-sink A f and, on every face i, the mu^i-sink D_i f.
inline void register_echeverria(const ProblemSpec& spec, const TestFunction& f, WeightedMeasure& nu,
                                BoundaryMeasure& mu) {
  nu.register_function(generator_sink_name(f),
                       [&spec, f](std::span<const double> x) { return generator_apply(spec, f, x); });
  for (std::size_t i = 0; i < spec.dimension(); ++i)
    mu.register_function(i, face_sink_name(f), [r = spec.reflection(), f, i](std::span<const double> x) {
      return face_derivative(r, f, i, x);
    });
}

struct EcheverriaResidual {
  double residual = 0.0;
  double interior = 0.0;         ///< nu_n(A f)
  std::vector<double> boundary;  ///< mu_n^i(D_i f)
};

inline EcheverriaResidual echeverria_residual(const TestFunction& f, const WeightedMeasure& nu,
                                              const BoundaryMeasure& mu) {
  if (!nu.has_function(generator_sink_name(f)))
    throw Error(ErrorKind::SinksNotRegistered, "generator sink for '" + f.name() + "' is not registered");
  for (std::size_t i = 0; i < mu.dimension(); ++i)
    if (!mu.has_function(i, face_sink_name(f)))
      throw Error(ErrorKind::SinksNotRegistered, "face sink for '" + f.name() + "' is not registered");
  EcheverriaResidual out;
  out.interior = nu.integrate(generator_sink_name(f));
  out.residual = out.interior;
  for (std::size_t i = 0; i < mu.dimension(); ++i) {
    out.boundary.push_back(mu.integrate(i, face_sink_name(f), nu.total_weight()));
    out.residual += out.boundary.back();
  }
  return out;
}

enum class Regime { Fast, Critical, Slow };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::Fast: return "fast";
    case Regime::Critical: return "critical";
    case Regime::Slow: return "slow";
  }
  return "";
}

/// For lambda_k = c k^{-a}: Lambda^{(3/2)} / sqrt(Lambda) -> 0 iff a > 1/2, -> finite limit at a = 1/2.
inline Regime regime_for_exponent(double a) {
  if (a > 0.5) return Regime::Fast;
  if (a < 0.5) return Regime::Slow;
  return Regime::Critical;
}

struct SampleSummary {
  double mean = 0.0;
  double variance = 0.0;  ///< unbiased
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double ks_normal = 0.0;  ///< Kolmogorov distance to N(mean, variance)
};

inline SampleSummary summarize(std::vector<double> xs) {
  SampleSummary s;
  const auto n = static_cast<double>(xs.size());
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = xs.size() > 1 ? m2 * n / (n - 1.0) : 0.0;
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    const double sd = std::sqrt(s.variance);
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double phi = 0.5 * std::erfc(-(xs[i] - s.mean) / (sd * std::sqrt(2.0)));
      s.ks_normal = std::max({s.ks_normal, std::abs(static_cast<double>(i + 1) / n - phi),
                              std::abs(phi - static_cast<double>(i) / n)});
    }
  }
  return s;
}

struct CltOptions {
  double exponent = 0.7;
  double c = 1.0;
  std::size_t replications = 200;
  std::uint64_t n = 100'000;
  NoiseModel noise;
  std::uint64_t seed = 1;
  Vector x0;  ///< empty selects the all-ones start
  SkorokhodConfig skorokhod;
  unsigned threads = 1;
};

struct CltReplication {
  double statistic = 0.0;       ///< sqrt(Lambda_n) nu_n(A phi)
  double slow_statistic = 0.0;  ///< (Lambda_n / Lambda_n^{(3/2)}) nu_n(A phi)
  double plugin_variance = 0.0; ///< nu_n(|sigma^T grad phi|^2)
  double mtilde = 0.0;
  double lambda_n = 0.0;
  double lambda_3_2 = 0.0;
  std::uint64_t truncations = 0;
};

struct CltReport {
  std::uint64_t n = 0;
  double lambda_n = 0.0;
  double lambda_3_2 = 0.0;
  double ratio = 0.0;
  Regime regime = Regime::Fast;
  std::vector<CltReplication> replications;
  SampleSummary statistic;
  double plugin_variance = 0.0;  ///< replication mean of nu_n(|sigma^T grad phi|^2)
  double mtilde = 0.0;           ///< replication mean
  double slow_statistic_mean = 0.0;
};

inline CltReport clt_study(const ProblemSpec& spec, const TestFunction& f, const CltOptions& opt) {
  if (opt.replications == 0) throw Error(ErrorKind::ParameterOutOfRange, "at least one replication is required");
  if (opt.n == 0) throw Error(ErrorKind::ParameterOutOfRange, "n must be at least 1");
  const std::size_t m = spec.dimension();
  const StepSchedule sched = StepSchedule::power(opt.c, opt.exponent);
  const Vector x0 = opt.x0.empty() ? Vector(m, 1.0) : opt.x0;
  const double mu3 = opt.noise.third_moment();

  CltReport rep;
  rep.n = opt.n;
  rep.regime = regime_for_exponent(opt.exponent);
  rep.replications.resize(opt.replications);

  parallel_for(opt.replications, opt.threads, [&](std::size_t r) {
    WeightedMeasure nu(m);
    nu.register_function("generator", [&spec, &f](std::span<const double> x) { return generator_apply(spec, f, x); });
    nu.register_function("energy", [&spec, &f](std::span<const double> x) {
      return diffusion_energy(spec.diffusion()(x), f, x);
    });
    nu.register_function("mtilde", [&spec, &f, mu3](std::span<const double> x) {
      return third_order_drift(spec.diffusion()(x), f, mu3, x);
    });
    Chain chain(spec, sched, opt.noise, opt.skorokhod,
                initial_state(x0, opt.seed, static_cast<std::uint32_t>(r)));
    chain.attach(&nu);
    chain.run(opt.n);
    const auto& acc = chain.state().accumulators;
    CltReplication out;
    out.lambda_n = acc.lambda.value();
    out.lambda_3_2 = acc.lambda_3_2.value();
    const double a_phi = nu.integrate("generator");
    out.statistic = std::sqrt(out.lambda_n) * a_phi;
    out.slow_statistic = out.lambda_n / out.lambda_3_2 * a_phi;
    out.plugin_variance = nu.integrate("energy");
    out.mtilde = nu.integrate("mtilde");
    out.truncations = chain.state().truncations;
    rep.replications[r] = out;
  });

  rep.lambda_n = rep.replications.front().lambda_n;
  rep.lambda_3_2 = rep.replications.front().lambda_3_2;
  rep.ratio = rep.lambda_3_2 / std::sqrt(rep.lambda_n);
  std::vector<double> stats;
  for (const auto& r : rep.replications) {
    stats.push_back(r.statistic);
    rep.plugin_variance += r.plugin_variance;
    rep.mtilde += r.mtilde;
    rep.slow_statistic_mean += r.slow_statistic;
  }
  const auto count = static_cast<double>(rep.replications.size());
  rep.plugin_variance /= count;
  rep.mtilde /= count;
  rep.slow_statistic_mean /= count;
  rep.statistic = summarize(std::move(stats));
  return rep;
}

}  // namespace refsim
