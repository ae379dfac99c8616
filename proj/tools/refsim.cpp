// refsim: command-line front end (validate | estimate | alpha-sweep | clt | resume).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "refsim/checkpoint.hpp"
#include "refsim/cltlab.hpp"
#include "refsim/parallel.hpp"
#include "refsim/scheme.hpp"

namespace fs = std::filesystem;
using namespace refsim;
using namespace refsim::cli;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitConfig = 4;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Context {
  RunConfig cfg;
  std::string hash;
  ProblemSpec spec;
  std::optional<ReferenceLaw> reference;
  NoiseModel noise;

  explicit Context(RunConfig c)
      : cfg(std::move(c)), hash(config_hash(cfg)), spec(build_spec(cfg.spec)), reference(build_reference(cfg.spec)),
        noise(build_noise(cfg)) {}

  std::size_t dim() const { return spec.dimension(); }
  StepSchedule schedule(double exponent) const { return StepSchedule::power(cfg.c, exponent); }
};

// ---- references -----------------------------------------------------------

std::optional<double> reference_mean(const Context& ctx, std::size_t coord) {
  if (!ctx.reference) return std::nullopt;
  const auto& law = *ctx.reference;
  if (law.kind == ReferenceLaw::Kind::ProductExponential) return 1.0 / law.rates[coord];
  if (ctx.cfg.spec.name == "symmetric" || coord == 0) return law.value;
  return std::nullopt;
}

std::function<double(double)> reference_cdf(const Context& ctx, std::size_t coord) {
  if (!ctx.reference || ctx.reference->kind != ReferenceLaw::Kind::ProductExponential) return {};
  const double rate = ctx.reference->rates[coord];
  return [rate](double x) { return exponential_cdf(rate, x); };
}

std::string opt_num(std::optional<double> v) { return v ? num(*v) : std::string("nan"); }
json opt_json(std::optional<double> v) { return v ? json(*v) : json(); }

// ---- output files ---------------------------------------------------------

std::vector<std::string> metadata_lines(const Context& ctx) {
  return {"format_version=" + std::to_string(kOutputFormatVersion),
          "refsim_version=" + std::string(kToolVersion),
          "config_hash=" + ctx.hash,
          "seed=" + std::to_string(ctx.cfg.seed),
          "rng_algorithm=" + std::string(kRngAlgorithm),
          "spec=" + ctx.spec.label(),
          "schedule=power c=" + num(ctx.cfg.c) + " exponent=" + num(ctx.cfg.exponent),
          "noise=" + ctx.noise.key()};
}

json metadata_json(const Context& ctx) {
  return {{"format_version", kOutputFormatVersion},
          {"refsim_version", kToolVersion},
          {"config_hash", ctx.hash},
          {"seed", ctx.cfg.seed},
          {"rng_algorithm", kRngAlgorithm},
          {"spec", ctx.spec.label()},
          {"schedule", {{"kind", "power"}, {"c", ctx.cfg.c}, {"exponent", ctx.cfg.exponent}}},
          {"noise", ctx.noise.key()}};
}

// Config echo without the fields that must not change the output bytes.
json config_echo(const RunConfig& cfg) {
  json j = to_json(cfg);
  for (const char* k : {"output_dir", "threads", "checkpoint_every"}) j.erase(k);
  return j;
}

fs::path output_path(const Context& ctx, const std::string& name) {
  fs::create_directories(ctx.cfg.output_dir);
  return fs::path(ctx.cfg.output_dir) / name;
}

std::ofstream open_csv(const Context& ctx, const std::string& name, const std::string& columns) {
  std::ofstream out(output_path(ctx, name), std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write " + output_path(ctx, name).string());
  out << "# refsim " << name << '\n';
  for (const auto& line : metadata_lines(ctx)) out << "# " << line << '\n';
  out << columns << '\n';
  return out;
}

void write_json(const Context& ctx, const std::string& name, json body) {
  body["metadata"] = metadata_json(ctx);
  std::ofstream out(output_path(ctx, name), std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::ConfigError, "cannot write " + output_path(ctx, name).string());
  out << body.dump(2) << '\n';
}

// ---- validation -----------------------------------------------------------

json validation_json(const StabilityReport& rep) {
  json j = {{"pass", rep.pass},
            {"spectral_radius", rep.reflection.spectral_radius},
            {"spectral_radius_approximate", rep.reflection.spectral_radius_approximate},
            {"completely_s", std::string(to_string(rep.reflection.completely_s))},
            {"exact_completely_s_test", rep.reflection.exact_test_run},
            {"cone_margin", rep.cone_margin},
            {"min_ellipticity", rep.min_ellipticity},
            {"reasons", rep.reasons}};
  j["cone_certificate"] = rep.cone_certificate ? json(rep.cone_certificate->values()) : json();
  return j;
}

void print_validation(const ProblemSpec& spec, const StabilityReport& rep) {
  std::cout << "spec: " << spec.label() << '\n'
            << "dimension: " << spec.dimension() << '\n'
            << "spectral_radius: " << num(rep.reflection.spectral_radius)
            << (rep.reflection.spectral_radius_approximate ? " (approximate)" : "") << '\n'
            << "completely_s: " << to_string(rep.reflection.completely_s) << '\n';
  if (rep.cone_certificate) {
    std::cout << "cone_certificate:";
    for (double v : *rep.cone_certificate) std::cout << ' ' << num(v);
    std::cout << '\n' << "cone_margin: " << num(rep.cone_margin) << '\n';
  }
  std::cout << "min_ellipticity: " << num(rep.min_ellipticity) << '\n';
  for (const auto& r : rep.reasons) std::cout << "reason: " << r << '\n';
  std::cout << "result: " << (rep.pass ? "PASS" : "FAIL") << '\n';
}

// ---- chains ---------------------------------------------------------------

std::vector<std::uint64_t> trace_grid(std::uint64_t n, std::size_t per_decade) {
  std::vector<std::uint64_t> g;
  if (per_decade == 0) return g;
  for (std::size_t j = 0;; ++j) {
    const double v = std::round(std::pow(10.0, static_cast<double>(j) / static_cast<double>(per_decade)));
    if (v > static_cast<double>(n)) break;
    const auto k = static_cast<std::uint64_t>(v);
    if (g.empty() || k != g.back()) g.push_back(k);
  }
  return g;
}

struct TracePoint {
  std::uint64_t n;
  std::vector<double> mean;
};

json trace_to_json(const std::vector<TracePoint>& trace) {
  json a = json::array();
  for (const auto& t : trace) {
    json row = json::array({hex_u64(t.n)});
    for (double v : t.mean) row.push_back(hex_double(v));
    a.push_back(row);
  }
  return a;
}

std::vector<TracePoint> trace_from_json(const json& a) {
  std::vector<TracePoint> out;
  for (const auto& row : a) {
    TracePoint t{parse_hex_u64(row.at(0).get<std::string>()), {}};
    for (std::size_t i = 1; i < row.size(); ++i) t.mean.push_back(parse_hex_double(row.at(i).get<std::string>()));
    out.push_back(std::move(t));
  }
  return out;
}

struct Replication {
  WeightedMeasure nu;
  BoundaryMeasure mu;
  bool boundary = false;
  ChainState state;
  std::vector<TracePoint> trace;
  std::optional<EcheverriaResidual> echeverria;
};

std::vector<double> means_of(const WeightedMeasure& nu) {
  std::vector<double> v(nu.dimension());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = nu.mean(c);
  return v;
}

std::string checkpoint_path(const Context& ctx, std::size_t r) {
  return (fs::path(ctx.cfg.output_dir) / ("checkpoint_rep" + std::to_string(r) + ".json")).string();
}

Replication run_replication(const Context& ctx, std::size_t r, bool resume) {
  const RunConfig& cfg = ctx.cfg;
  const std::size_t m = ctx.dim();
  const auto rep_index = static_cast<std::uint32_t>(r);
  Replication rep;
  rep.nu = WeightedMeasure(m, cfg.histogram, cfg.reservoir, RngStream(cfg.seed, rep_index, 1));
  rep.boundary = cfg.boundary || cfg.test_function.has_value();
  if (rep.boundary) rep.mu = BoundaryMeasure(m);
  std::optional<TestFunction> tf;
  if (cfg.test_function) {
    tf = build_test_function(*cfg.test_function, m);
    register_echeverria(ctx.spec, *tf, rep.nu, rep.mu);
  }

  Chain chain(ctx.spec, ctx.schedule(cfg.exponent), ctx.noise, cfg.skorokhod,
              initial_state(start_point(cfg, m), cfg.seed, rep_index));
  chain.attach(&rep.nu);
  if (rep.boundary) chain.attach(&rep.mu);

  const std::string path = checkpoint_path(ctx, r);
  if (resume) {
    const json j = read_checkpoint(path);
    const Checkpoint c = parse_checkpoint(j);
    if (c.config_hash != ctx.hash)
      throw Error(ErrorKind::ConfigError, path + " was written under a different configuration");
    restore_checkpoint(c, chain, &rep.nu, rep.boundary ? &rep.mu : nullptr);
    try {
      rep.trace = trace_from_json(j.at("trace"));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::CheckpointCorrupt, e.what());
    }
    if (chain.state().k > cfg.n_steps)
      throw Error(ErrorKind::ConfigError, path + " is already past n_steps=" + std::to_string(cfg.n_steps));
  }

  const auto grid = trace_grid(cfg.n_steps, cfg.trace_per_decade);
  auto next = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), chain.state().k) - grid.begin());
  auto save = [&] {
    json j = checkpoint_json(chain, ctx.hash, &rep.nu, rep.boundary ? &rep.mu : nullptr);
    j["trace"] = trace_to_json(rep.trace);
    write_checkpoint(path, j);
  };
  while (chain.state().k < cfg.n_steps) {
    chain.step();
    const std::uint64_t k = chain.state().k;
    if (next < grid.size() && k == grid[next]) {
      rep.trace.push_back({k, means_of(rep.nu)});
      ++next;
    }
    if (cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0) save();
  }
  save();
  rep.state = chain.state();
  if (tf) rep.echeverria = echeverria_residual(*tf, rep.nu, rep.mu);
  return rep;
}

// ---- commands -------------------------------------------------------------

int cmd_validate(const Context& ctx, bool exact) {
  ValidationOptions opts;
  opts.exact_completely_s = exact;
  const auto rep = validate(ctx.spec, opts);
  print_validation(ctx.spec, rep);
  return rep.pass ? 0 : kExitValidation;
}

bool require_valid(const Context& ctx) {
  const auto rep = validate(ctx.spec);
  if (rep.pass) return true;
  print_validation(ctx.spec, rep);
  std::cerr << "refsim: problem failed validation\n";
  return false;
}

int cmd_estimate(const Context& ctx, bool resume) {
  if (!require_valid(ctx)) return kExitValidation;
  const RunConfig& cfg = ctx.cfg;
  const std::size_t m = ctx.dim();
  const std::size_t reps = cfg.replications;
  fs::create_directories(cfg.output_dir);

  std::vector<Replication> runs(reps);
  parallel_for(reps, cfg.threads, [&](std::size_t r) { runs[r] = run_replication(ctx, r, resume); });

  // Ordered merge keeps the output independent of the thread count.
  WeightedMeasure merged = runs[0].nu;
  for (std::size_t r = 1; r < reps; ++r) merged.merge(runs[r].nu);

  std::vector<double> mean(m), stderr_(m, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < m; ++c) {
    mean[c] = merged.mean(c);
    if (reps > 1) {
      double s = 0.0, s2 = 0.0;
      for (const auto& run : runs) {
        const double v = run.nu.mean(c);
        s += v;
        s2 += v * v;
      }
      const double n = static_cast<double>(reps);
      const double var = std::max(0.0, (s2 - s * s / n) / (n - 1.0));
      stderr_[c] = std::sqrt(var / n);
    }
  }

  {
    auto out = open_csv(ctx, "moments.csv", "coord,mean,stderr,variance,raw2,raw3,raw4,reference_mean,abs_error");
    for (std::size_t c = 0; c < m; ++c) {
      const auto ref = reference_mean(ctx, c);
      out << c + 1 << ',' << num(mean[c]) << ',' << num(stderr_[c]) << ',' << num(merged.variance(c)) << ','
          << num(merged.raw_moment(c, 2)) << ',' << num(merged.raw_moment(c, 3)) << ','
          << num(merged.raw_moment(c, 4)) << ',' << opt_num(ref) << ','
          << opt_num(ref ? std::optional<double>(std::abs(mean[c] - *ref)) : std::nullopt) << '\n';
    }
  }

  json ks = json::array(), quantiles = json::array();
  {
    auto out = open_csv(ctx, "marginal_cdf.csv", "coord,x,cdf,reference_cdf");
    for (std::size_t c = 0; c < m; ++c) {
      const auto ref = reference_cdf(ctx, c);
      const auto st = merged.marginal_stats(c, cfg.quantiles, ref);
      for (std::size_t i = 0; i < st.grid.size(); ++i)
        out << c + 1 << ',' << num(st.grid[i]) << ',' << num(st.cdf[i]) << ','
            << (ref ? num(ref(st.grid[i])) : std::string("nan")) << '\n';
      ks.push_back(st.ks ? json(*st.ks) : json());
      json q = json::array();
      for (const auto& [p, v] : st.quantiles) q.push_back({{"p", p}, {"q", std::isfinite(v) ? json(v) : json()}});
      quantiles.push_back(q);
    }
  }

  {
    auto out = open_csv(ctx, "traces.csv", "replication,n,coord,mean");
    for (std::size_t r = 0; r < reps; ++r) {
      auto trace = runs[r].trace;
      if (trace.empty() || trace.back().n != cfg.n_steps) trace.push_back({cfg.n_steps, means_of(runs[r].nu)});
      for (const auto& t : trace)
        for (std::size_t c = 0; c < m; ++c) out << r << ',' << t.n << ',' << c + 1 << ',' << num(t.mean[c]) << '\n';
    }
  }

  const auto diag = lambda_diagnostics(ctx.schedule(cfg.exponent), cfg.n_steps);
  json per_rep = json::array();
  std::uint64_t truncations = 0;
  for (const auto& run : runs) {
    truncations += run.state.truncations;
    json j = {{"mean", means_of(run.nu)}, {"mass", run.nu.mass()}, {"truncations", run.state.truncations}};
    if (run.boundary) {
      json faces = json::array();
      for (std::size_t i = 0; i < m; ++i) faces.push_back(run.mu.raw_mass(i) / run.nu.total_weight());
      j["boundary_mass"] = faces;
    }
    if (run.echeverria)
      j["echeverria"] = {{"residual", run.echeverria->residual},
                         {"interior", run.echeverria->interior},
                         {"boundary", run.echeverria->boundary}};
    per_rep.push_back(j);
  }

  json reference;
  if (ctx.reference) {
    json means = json::array(), err = json::array();
    for (std::size_t c = 0; c < m; ++c) {
      const auto ref = reference_mean(ctx, c);
      means.push_back(opt_json(ref));
      err.push_back(ref ? json(std::abs(mean[c] - *ref)) : json());
    }
    reference = {{"kind", ctx.reference->kind == ReferenceLaw::Kind::ProductExponential ? "product_exponential"
                                                                                         : "scalar_moment"},
                 {"note", ctx.reference->note},
                 {"mean", means},
                 {"abs_error", err},
                 {"ks", ks}};
    if (ctx.reference->kind == ReferenceLaw::Kind::ProductExponential)
      reference["rates"] = ctx.reference->rates.values();
  }

  json summary = {{"config", config_echo(cfg)},
                  {"validation", validation_json(validate(ctx.spec))},
                  {"n_steps", cfg.n_steps},
                  {"replications", reps},
                  {"lambda_n", diag.lambda_n},
                  {"lambda_3_2", diag.lambda_3_2},
                  {"lambda_ratio", diag.ratio},
                  {"mass", merged.mass()},
                  {"mean", mean},
                  {"stderr", stderr_},
                  {"quantiles", quantiles},
                  {"truncations", truncations},
                  {"reference", reference},
                  {"replication", per_rep}};
  write_json(ctx, "summary.json", summary);

  std::cout << "spec " << ctx.spec.label() << " n=" << cfg.n_steps << " replications=" << reps << '\n';
  for (std::size_t c = 0; c < m; ++c) {
    std::cout << "  mean x" << c + 1 << " = " << num(mean[c]);
    if (const auto ref = reference_mean(ctx, c)) std::cout << "  (reference " << num(*ref) << ")";
    std::cout << '\n';
  }
  std::cout << "outputs in " << cfg.output_dir << '\n';
  return 0;
}

int cmd_alpha_sweep(const Context& ctx) {
  if (!require_valid(ctx)) return kExitValidation;
  const RunConfig& cfg = ctx.cfg;
  if (cfg.alphas.empty()) throw Error(ErrorKind::ConfigError, "alphas: list is empty");
  const std::size_t m = ctx.dim();
  const std::size_t reps = cfg.replications;
  const std::size_t tasks = cfg.alphas.size() * reps;
  const auto grid = trace_grid(cfg.n_steps, std::max<std::size_t>(cfg.trace_per_decade, 1));

  // Replication r uses the same stream for every alpha.
  std::vector<std::vector<TracePoint>> traces(tasks);
  parallel_for(tasks, cfg.threads, [&](std::size_t t) {
    const std::size_t a = t / reps, r = t % reps;
    const auto rep_index = static_cast<std::uint32_t>(r);
    WeightedMeasure nu(m, cfg.histogram);
    Chain chain(ctx.spec, ctx.schedule(cfg.alphas[a]), ctx.noise, cfg.skorokhod,
                initial_state(start_point(cfg, m), cfg.seed, rep_index));
    chain.attach(&nu);
    std::size_t next = 0;
    while (chain.state().k < cfg.n_steps) {
      chain.step();
      if (next < grid.size() && chain.state().k == grid[next]) {
        traces[t].push_back({chain.state().k, {nu.mean(0)}});
        ++next;
      }
    }
    if (traces[t].empty() || traces[t].back().n != cfg.n_steps) traces[t].push_back({cfg.n_steps, {nu.mean(0)}});
  });

  const auto ref = reference_mean(ctx, 0);
  json per_alpha = json::array();
  {
    auto out = open_csv(ctx, "sweep_traces.csv", "alpha,replication,n,mean_x1,abs_error");
    for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
      double terminal = 0.0;
      json terminals = json::array();
      for (std::size_t r = 0; r < reps; ++r) {
        const auto& tr = traces[a * reps + r];
        for (const auto& p : tr)
          out << num(cfg.alphas[a]) << ',' << r << ',' << p.n << ',' << num(p.mean[0]) << ','
              << opt_num(ref ? std::optional<double>(std::abs(p.mean[0] - *ref)) : std::nullopt) << '\n';
        terminal += tr.back().mean[0];
        terminals.push_back(tr.back().mean[0]);
      }
      terminal /= static_cast<double>(reps);
      per_alpha.push_back({{"alpha", cfg.alphas[a]},
                           {"terminal_mean", terminal},
                           {"terminal_abs_error", ref ? json(std::abs(terminal - *ref)) : json()},
                           {"replication_terminal", terminals}});
      std::cout << "alpha " << num(cfg.alphas[a]) << "  terminal mean x1 = " << num(terminal);
      if (ref) std::cout << "  abs error " << num(std::abs(terminal - *ref));
      std::cout << '\n';
    }
  }
  write_json(ctx, "sweep_summary.json",
             {{"config", config_echo(cfg)},
              {"n_steps", cfg.n_steps},
              {"replications", reps},
              {"reference_mean_x1", opt_json(ref)},
              {"alphas", per_alpha}});
  return 0;
}

int cmd_clt(const Context& ctx) {
  if (!require_valid(ctx)) return kExitValidation;
  const RunConfig& cfg = ctx.cfg;
  const std::size_t m = ctx.dim();
  CltOptions opt;
  opt.exponent = cfg.clt.exponent;
  opt.c = cfg.c;
  opt.replications = cfg.clt.replications;
  opt.n = cfg.clt.n_steps;
  opt.noise = ctx.noise;
  opt.seed = cfg.seed;
  opt.x0 = start_point(cfg, m);
  opt.skorokhod = cfg.skorokhod;
  opt.threads = cfg.threads;
  const TestFunction f = build_test_function(cfg.clt.test_function, m);
  const CltReport rep = clt_study(ctx.spec, f, opt);

  {
    auto out = open_csv(ctx, "clt_replications.csv",
                        "replication,statistic,slow_statistic,plugin_variance,mtilde,lambda_n,lambda_3_2,truncations");
    for (std::size_t r = 0; r < rep.replications.size(); ++r) {
      const auto& x = rep.replications[r];
      out << r << ',' << num(x.statistic) << ',' << num(x.slow_statistic) << ',' << num(x.plugin_variance) << ','
          << num(x.mtilde) << ',' << num(x.lambda_n) << ',' << num(x.lambda_3_2) << ',' << x.truncations << '\n';
    }
  }
  const double variance_ratio = rep.plugin_variance > 0.0 ? rep.statistic.variance / rep.plugin_variance
                                                          : std::numeric_limits<double>::quiet_NaN();
  write_json(ctx, "clt_summary.json",
             {{"config", config_echo(cfg)},
              {"regime", std::string(to_string(rep.regime))},
              {"n_steps", rep.n},
              {"replications", rep.replications.size()},
              {"test_function", f.name()},
              {"lambda_n", rep.lambda_n},
              {"lambda_3_2", rep.lambda_3_2},
              {"lambda_ratio", rep.ratio},
              {"statistic",
               {{"mean", rep.statistic.mean},
                {"variance", rep.statistic.variance},
                {"skewness", rep.statistic.skewness},
                {"excess_kurtosis", rep.statistic.excess_kurtosis},
                {"ks_normal", rep.statistic.ks_normal}}},
              {"plugin_variance", rep.plugin_variance},
              {"variance_ratio", std::isfinite(variance_ratio) ? json(variance_ratio) : json()},
              {"mtilde", rep.mtilde},
              {"slow_statistic_mean", rep.slow_statistic_mean}});
  std::cout << "regime " << to_string(rep.regime) << "  skewness " << num(rep.statistic.skewness)
            << "  variance ratio " << num(variance_ratio) << "  mtilde " << num(rep.mtilde) << '\n';
  return 0;
}

// ---- argument handling ----------------------------------------------------

struct Flags {
  std::string config;
  std::string spec;
  int d = 8;
  double r = 0.1, rho = 0.0;
  std::uint64_t n = 0, seed = 0, checkpoint_every = 0;
  std::size_t replications = 0;
  double alpha = 0.0, c = 0.0;
  std::string noise, out, test_function;
  unsigned threads = 1;
  std::vector<double> alphas;
  bool boundary = false;
  bool exact = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("config", f.config, "JSON run configuration (defaults apply when omitted)");
  sub->add_option("--spec", f.spec, "product-3d | oblique-2d | symmetric | symmetric-8d");
  sub->add_option("--d", f.d, "dimension of the symmetric spec");
  sub->add_option("--r", f.r, "off-diagonal reflection weight of the symmetric spec");
  sub->add_option("--rho", f.rho, "correlation of the symmetric spec");
  sub->add_option("--n", f.n, "number of steps");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--replications", f.replications, "independent replications");
  sub->add_option("--alpha", f.alpha, "step exponent");
  sub->add_option("--c", f.c, "step scale");
  sub->add_option("--noise", f.noise, "standard_normal | rademacher | uniform_scaled | two_point_asymmetric");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--threads", f.threads, "worker threads (outputs do not depend on it)");
  sub->add_option("--checkpoint-every", f.checkpoint_every, "checkpoint cadence in steps");
  sub->add_option("--alphas", f.alphas, "exponents for alpha-sweep")->delimiter(',');
  sub->add_option("--test-function", f.test_function, "bump | linear | half_square | cubic_sum");
  sub->add_flag("--boundary", f.boundary, "accumulate boundary measures");
}

// Precedence: built-in defaults, then the config file, then flags.
RunConfig resolve(const Flags& f, const CLI::App* sub) {
  const bool clt = sub->get_name() == "clt";
  auto given = [sub](const char* flag) { return sub->count(flag) > 0; };
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (given("--spec")) {
    cfg.spec = SpecConfig{};
    cfg.spec.name = f.spec;
    if (f.spec == "symmetric-8d") {
      cfg.spec.name = "symmetric";
      cfg.spec.d = 8;
    }
    if (cfg.spec.name != "product-3d" && cfg.spec.name != "oblique-2d" && cfg.spec.name != "symmetric")
      throw Error(ErrorKind::ConfigError, "--spec: unknown spec '" + f.spec + "'");
  }
  if (given("--d")) cfg.spec.d = f.d;
  if (given("--r")) cfg.spec.r = f.r;
  if (given("--rho")) cfg.spec.rho = f.rho;
  if (given("--n")) (clt ? cfg.clt.n_steps : cfg.n_steps) = f.n;
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--replications")) (clt ? cfg.clt.replications : cfg.replications) = f.replications;
  if (given("--alpha")) (clt ? cfg.clt.exponent : cfg.exponent) = f.alpha;
  if (given("--c")) cfg.c = f.c;
  if (given("--noise")) cfg.noise = f.noise;
  if (given("--out")) cfg.output_dir = f.out;
  if (given("--threads")) cfg.threads = f.threads;
  if (given("--checkpoint-every")) cfg.checkpoint_every = f.checkpoint_every;
  if (given("--alphas")) cfg.alphas = f.alphas;
  if (given("--boundary")) cfg.boundary = true;
  if (given("--test-function")) {
    TestFunctionConfig t;
    t.kind = f.test_function;
    if (t.kind != "bump" && t.kind != "linear" && t.kind != "half_square" && t.kind != "cubic_sum")
      throw Error(ErrorKind::ConfigError, "--test-function: unknown kind '" + t.kind + "'");
    (clt ? cfg.clt.test_function : cfg.test_function.emplace()) = t;
  }
  check_config(cfg);
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"refsim: stationary distributions of reflected diffusions in the orthant"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Flags f;
  auto* validate_cmd = app.add_subcommand("validate", "check stability conditions of the configured problem");
  auto* estimate_cmd = app.add_subcommand("estimate", "run the chain(s) and write moments, marginals and traces");
  auto* sweep_cmd = app.add_subcommand("alpha-sweep", "convergence traces of the coordinate-1 mean per step exponent");
  auto* clt_cmd = app.add_subcommand("clt", "replicated central-limit study");
  auto* resume_cmd = app.add_subcommand("resume", "continue an estimate run from its checkpoints");
  for (auto* sub : {validate_cmd, estimate_cmd, sweep_cmd, clt_cmd, resume_cmd}) add_common(sub, f);
  validate_cmd->add_flag("--exact-completely-s", f.exact, "run the exact completely-S test (exponential in m)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const RunConfig cfg = resolve(f, sub);
  std::optional<Context> built;
  try {
    built.emplace(cfg);
  } catch (const Error& e) {
    // malformed problem data is a configuration error, not a runtime failure
    throw Error(ErrorKind::ConfigError, e.what());
  }
  const Context& ctx = *built;
  if (validate_cmd->parsed()) return cmd_validate(ctx, f.exact);
  if (estimate_cmd->parsed()) return cmd_estimate(ctx, false);
  if (resume_cmd->parsed()) return cmd_estimate(ctx, true);
  if (sweep_cmd->parsed()) return cmd_alpha_sweep(ctx);
  return cmd_clt(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "refsim: " << e.what() << '\n';
    return e.kind() == ErrorKind::ConfigError ? kExitConfig : kExitRuntime;
  } catch (const json::exception& e) {
    std::cerr << "refsim: ConfigError: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "refsim: " << e.what() << '\n';
    return kExitRuntime;
  }
}
