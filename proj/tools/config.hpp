#pragma once

// Run configuration for the refsim command line: strict JSON reader, canonical
// form, config hash and builders for specs and test functions.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refsim/checkpoint.hpp"
#include "refsim/cltlab.hpp"
#include "refsim/error.hpp"
#include "refsim/measure.hpp"
#include "refsim/model.hpp"
#include "refsim/noise.hpp"
#include "refsim/reference.hpp"
#include "refsim/skorokhod.hpp"

namespace refsim::cli {

using nlohmann::json;

inline constexpr int kOutputFormatVersion = 1;

struct SpecConfig {
  std::string name = "oblique-2d";  ///< product-3d | oblique-2d | symmetric | inline
  int d = 8;
  double r = 0.1;
  double rho = 0.0;
  std::string label = "inline";
  Matrix reflection;
  Vector drift;
  Matrix diffusion;
};

struct TestFunctionConfig {
  std::string kind = "bump";  ///< bump | linear | half_square | cubic_sum
  Vector center;              ///< bump; empty selects the all-ones point
  double radius = 0.8;
  Vector coefficients;        ///< linear
};

struct CltConfig {
  std::size_t replications = 200;
  std::uint64_t n_steps = 100'000;
  double exponent = 0.7;
  TestFunctionConfig test_function;
};

struct RunConfig {
  SpecConfig spec;
  double c = 1.0;
  double exponent = 0.5;
  std::string noise = "standard_normal";
  double noise_p = 0.2;
  std::uint64_t n_steps = 1'000'000;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  Vector x0;  ///< empty selects the all-ones start
  SkorokhodConfig skorokhod;
  HistogramConfig histogram;
  std::size_t reservoir = 0;
  bool boundary = false;
  std::optional<TestFunctionConfig> test_function;
  std::vector<double> quantiles{0.1, 0.25, 0.5, 0.75, 0.9, 0.99};
  std::size_t trace_per_decade = 10;  ///< log-spaced trace grid; 0 disables traces
  std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
  CltConfig clt;
  std::string output_dir = "refsim_out";
  std::uint64_t checkpoint_every = 1'000'000;  ///< 0 writes only the final checkpoint
  unsigned threads = 1;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::ConfigError, (path.empty() ? std::string("config") : path) + ": " + what);
}

/// Object reader that remembers which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(at(key), "wrong type");
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(at(key), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Vector read_vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(path, "expected an array of numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline Matrix read_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a nonempty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const Vector row = read_vector(j[i], path);
    if (row.size() != cols) fail(path, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = row[c];
  }
  return m;
}

inline json write_matrix(const Matrix& m) {
  json a = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    a.push_back(row);
  }
  return a;
}

inline json write_vector(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

inline TestFunctionConfig read_test_function(const json& j, const std::string& path) {
  Reader r(j, path);
  TestFunctionConfig t;
  t.kind = r.get<std::string>("kind", t.kind);
  if (t.kind != "bump" && t.kind != "linear" && t.kind != "half_square" && t.kind != "cubic_sum")
    fail(r.at("kind"), "unknown test function '" + t.kind + "'");
  if (r.has("center")) t.center = read_vector(r.raw("center"), r.at("center"));
  t.radius = r.get<double>("radius", t.radius);
  if (r.has("coefficients")) t.coefficients = read_vector(r.raw("coefficients"), r.at("coefficients"));
  r.finish();
  if (!(t.radius > 0.0)) fail(r.at("radius"), "must be positive");
  return t;
}

inline json write_test_function(const TestFunctionConfig& t) {
  return {{"kind", t.kind},
          {"center", write_vector(t.center)},
          {"radius", t.radius},
          {"coefficients", write_vector(t.coefficients)}};
}

inline SpecConfig read_spec(const json& j, const std::string& path) {
  SpecConfig s;
  if (j.is_string()) {
    s.name = j.get<std::string>();
  } else {
    Reader r(j, path);
    s.name = r.get<std::string>("name", s.name);
    s.d = r.get<int>("d", s.d);
    s.r = r.get<double>("r", s.r);
    s.rho = r.get<double>("rho", s.rho);
    s.label = r.get<std::string>("label", s.label);
    if (r.has("reflection")) s.reflection = read_matrix(r.raw("reflection"), r.at("reflection"));
    if (r.has("drift")) s.drift = read_vector(r.raw("drift"), r.at("drift"));
    if (r.has("diffusion")) s.diffusion = read_matrix(r.raw("diffusion"), r.at("diffusion"));
    r.finish();
  }
  if (s.name == "symmetric-8d") {
    s.name = "symmetric";
    s.d = 8;
  }
  if (s.name != "product-3d" && s.name != "oblique-2d" && s.name != "symmetric" && s.name != "inline")
    fail(path + ".name", "unknown spec '" + s.name + "'");
  if (s.name == "inline" && (s.reflection.rows() == 0 || s.drift.empty() || s.diffusion.rows() == 0))
    fail(path, "inline spec needs reflection, drift and diffusion");
  return s;
}

inline json write_spec(const SpecConfig& s) {
  json j = {{"name", s.name}};
  if (s.name == "symmetric") {
    j["d"] = s.d;
    j["r"] = s.r;
    j["rho"] = s.rho;
  }
  if (s.name == "inline") {
    j["label"] = s.label;
    j["reflection"] = write_matrix(s.reflection);
    j["drift"] = write_vector(s.drift);
    j["diffusion"] = write_matrix(s.diffusion);
  }
  return j;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  using namespace detail;
  RunConfig c;
  Reader r(j, "");
  if (r.has("spec")) c.spec = read_spec(r.raw("spec"), "spec");
  if (r.has("schedule")) {
    Reader s(r.raw("schedule"), "schedule");
    c.c = s.get<double>("c", c.c);
    c.exponent = s.get<double>("exponent", c.exponent);
    s.finish();
  }
  if (r.has("noise")) {
    Reader s(r.raw("noise"), "noise");
    c.noise = s.get<std::string>("law", c.noise);
    c.noise_p = s.get<double>("p", c.noise_p);
    s.finish();
  }
  c.n_steps = r.get<std::uint64_t>("n_steps", c.n_steps);
  c.replications = r.get<std::size_t>("replications", c.replications);
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  if (r.has("x0")) c.x0 = read_vector(r.raw("x0"), "x0");
  if (r.has("skorokhod")) {
    Reader s(r.raw("skorokhod"), "skorokhod");
    c.skorokhod.active_tol = s.get<double>("active_tol", c.skorokhod.active_tol);
    c.skorokhod.max_events = s.get<int>("max_events", c.skorokhod.max_events);
    s.finish();
  }
  if (r.has("sinks")) {
    Reader s(r.raw("sinks"), "sinks");
    if (s.has("histogram")) {
      Reader h(s.raw("histogram"), "sinks.histogram");
      c.histogram.bins = h.get<std::size_t>("bins", c.histogram.bins);
      c.histogram.x_max = h.get<double>("x_max", c.histogram.x_max);
      h.finish();
    }
    c.reservoir = s.get<std::size_t>("reservoir", c.reservoir);
    c.boundary = s.get<bool>("boundary", c.boundary);
    if (s.has("test_function")) c.test_function = read_test_function(s.raw("test_function"), "sinks.test_function");
    if (s.has("quantiles")) c.quantiles = read_vector(s.raw("quantiles"), "sinks.quantiles").values();
    s.finish();
  }
  c.trace_per_decade = r.get<std::size_t>("trace_per_decade", c.trace_per_decade);
  if (r.has("alphas")) c.alphas = read_vector(r.raw("alphas"), "alphas").values();
  if (r.has("clt")) {
    Reader s(r.raw("clt"), "clt");
    c.clt.replications = s.get<std::size_t>("replications", c.clt.replications);
    c.clt.n_steps = s.get<std::uint64_t>("n_steps", c.clt.n_steps);
    c.clt.exponent = s.get<double>("exponent", c.clt.exponent);
    if (s.has("test_function")) c.clt.test_function = read_test_function(s.raw("test_function"), "clt.test_function");
    s.finish();
  }
  c.output_dir = r.get<std::string>("output_dir", c.output_dir);
  c.checkpoint_every = r.get<std::uint64_t>("checkpoint_every", c.checkpoint_every);
  c.threads = r.get<unsigned>("threads", c.threads);
  r.finish();
  return c;
}

/// Range checks that do not need the problem data.
inline void check_config(const RunConfig& c) {
  using detail::fail;
  if (!(c.c > 0.0)) fail("schedule.c", "must be positive");
  if (!(c.exponent > 0.0 && c.exponent <= 1.0)) fail("schedule.exponent", "must lie in (0, 1]");
  if (c.n_steps == 0) fail("n_steps", "must be at least 1");
  if (c.replications == 0) fail("replications", "must be at least 1");
  if (c.histogram.bins == 0 || !(c.histogram.x_max > 0.0)) fail("sinks.histogram", "bins and x_max must be positive");
  if (c.threads == 0) fail("threads", "must be at least 1");
  if (!(c.noise_p > 0.0 && c.noise_p < 1.0)) fail("noise.p", "must lie in (0, 1)");
  for (double p : c.quantiles)
    if (!(p > 0.0 && p <= 1.0)) fail("sinks.quantiles", "probabilities must lie in (0, 1]");
  for (double a : c.alphas)
    if (!(a > 0.0 && a <= 1.0)) fail("alphas", "exponents must lie in (0, 1]");
  if (!(c.clt.exponent > 0.0 && c.clt.exponent <= 1.0)) fail("clt.exponent", "must lie in (0, 1]");
  if (c.clt.n_steps == 0) fail("clt.n_steps", "must be at least 1");
  if (c.clt.replications == 0) fail("clt.replications", "must be at least 1");
  if (c.spec.name == "symmetric" && c.spec.d < 2) fail("spec.d", "must be at least 2");
  try {
    NoiseModel::from_key(c.noise, c.noise_p);
  } catch (const Error& e) {
    fail("noise.law", e.what());
  }
}

/// Canonical form: every field, defaults filled in.
inline json to_json(const RunConfig& c) {
  using namespace detail;
  json sinks = {{"histogram", {{"bins", c.histogram.bins}, {"x_max", c.histogram.x_max}}},
                {"reservoir", c.reservoir},
                {"boundary", c.boundary},
                {"quantiles", c.quantiles}};
  if (c.test_function) sinks["test_function"] = write_test_function(*c.test_function);
  return {{"spec", write_spec(c.spec)},
          {"schedule", {{"c", c.c}, {"exponent", c.exponent}}},
          {"noise", {{"law", c.noise}, {"p", c.noise_p}}},
          {"n_steps", c.n_steps},
          {"replications", c.replications},
          {"seed", c.seed},
          {"x0", write_vector(c.x0)},
          {"skorokhod", {{"active_tol", c.skorokhod.active_tol}, {"max_events", c.skorokhod.max_events}}},
          {"sinks", sinks},
          {"trace_per_decade", c.trace_per_decade},
          {"alphas", c.alphas},
          {"clt",
           {{"replications", c.clt.replications},
            {"n_steps", c.clt.n_steps},
            {"exponent", c.clt.exponent},
            {"test_function", write_test_function(c.clt.test_function)}}},
          {"output_dir", c.output_dir},
          {"checkpoint_every", c.checkpoint_every},
          {"threads", c.threads}};
}

/// Hash of the canonical config without the fields that may change between a
/// run and its resumption (run length, cadence, output location, threads).
inline std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  for (const char* k : {"output_dir", "threads", "n_steps", "checkpoint_every"}) j.erase(k);
  return hash_hex(j.dump());
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
  return parse_config(j);
}

inline ProblemSpec build_spec(const SpecConfig& s) {
  if (s.name == "product-3d") return example_3d();
  if (s.name == "oblique-2d") return example_2d();
  if (s.name == "symmetric") return example_symmetric(s.d, s.r, s.rho);
  return ProblemSpec(s.label, s.reflection, DriftField::constant(s.drift), DiffusionField::constant(s.diffusion));
}

inline std::optional<ReferenceLaw> build_reference(const SpecConfig& s) {
  if (s.name == "product-3d") return example_3d_reference();
  if (s.name == "oblique-2d") return example_2d_reference();
  if (s.name == "symmetric") {
    try {
      return example_symmetric_reference(s.d, s.r, s.rho);
    } catch (const Error&) {
      return std::nullopt;  // outside the closed form's range
    }
  }
  return std::nullopt;
}

inline TestFunction build_test_function(const TestFunctionConfig& t, std::size_t m) {
  if (t.kind == "bump") {
    const Vector center = t.center.empty() ? Vector(m, 1.0) : t.center;
    if (center.size() != m) throw Error(ErrorKind::ConfigError, "test function center has the wrong dimension");
    return TestFunction::bump(center, t.radius);
  }
  if (t.kind == "linear") {
    if (t.coefficients.size() != m) throw Error(ErrorKind::ConfigError, "linear coefficients have the wrong dimension");
    return TestFunction::linear(t.coefficients);
  }
  if (t.kind == "half_square") return TestFunction::half_square(m);
  return TestFunction::cubic_sum(m);
}

inline NoiseModel build_noise(const RunConfig& c) { return NoiseModel::from_key(c.noise, c.noise_p); }

inline Vector start_point(const RunConfig& c, std::size_t m) {
  if (c.x0.empty()) return Vector(m, 1.0);
  if (c.x0.size() != m) throw Error(ErrorKind::ConfigError, "x0 has the wrong dimension");
  return c.x0;
}

}  // namespace refsim::cli
