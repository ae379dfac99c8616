#include <gtest/gtest.h>

#include "config.hpp"

using namespace refsim;
using namespace refsim::cli;
using nlohmann::json;

namespace {

ErrorKind kind_of(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::SingularMatrix;  // sentinel: nothing thrown
}

}  // namespace

TEST(Config, DefaultsFromEmptyObject) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.spec.name, "oblique-2d");
  EXPECT_EQ(c.c, 1.0);
  EXPECT_EQ(c.exponent, 0.5);
  EXPECT_EQ(c.noise, "standard_normal");
  EXPECT_EQ(c.n_steps, 1'000'000u);
  EXPECT_EQ(c.replications, 1u);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_TRUE(c.x0.empty());
  EXPECT_EQ(c.histogram.bins, 2000u);
  EXPECT_FALSE(c.boundary);
  EXPECT_FALSE(c.test_function.has_value());
  EXPECT_EQ(c.clt.replications, 200u);
  EXPECT_EQ(c.clt.exponent, 0.7);
  EXPECT_EQ(c.threads, 1u);
  EXPECT_NO_THROW(check_config(c));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_EQ(kind_of({{"n_step", 10}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"schedule", {{"c", 1.0}, {"theta", 0.5}}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"sinks", {{"histogram", {{"bins", 10}, {"xmax", 3}}}}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"spec", {{"name", "symmetric"}, {"sigma", 1}}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"clt", {{"test_function", {{"kind", "bump"}, {"width", 1}}}}}}), ErrorKind::ConfigError);
  try {
    parse_config({{"schedule", {{"theta", 0.5}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("schedule.theta"), std::string::npos);
  }
}

TEST(Config, WrongTypesAndNamesRejected) {
  EXPECT_EQ(kind_of({{"n_steps", "many"}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"schedule", 0.5}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"spec", "nonexistent"}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"spec", {{"name", "inline"}}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"x0", {1, "a"}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of({{"sinks", {{"test_function", {{"kind", "sine"}}}}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of(json::array()), ErrorKind::ConfigError);
}

TEST(Config, RangeChecks) {
  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    EXPECT_THROW(check_config(c), Error);
  };
  bad([](RunConfig& c) { c.exponent = 0.0; });
  bad([](RunConfig& c) { c.exponent = 1.5; });
  bad([](RunConfig& c) { c.c = -1.0; });
  bad([](RunConfig& c) { c.n_steps = 0; });
  bad([](RunConfig& c) { c.replications = 0; });
  bad([](RunConfig& c) { c.threads = 0; });
  bad([](RunConfig& c) { c.noise = "cauchy"; });
  bad([](RunConfig& c) { c.alphas = {0.5, 0.0}; });
  bad([](RunConfig& c) { c.quantiles = {1.5}; });
}

TEST(Config, NamedSpecsAndAlias) {
  const RunConfig c = parse_config({{"spec", {{"name", "symmetric-8d"}, {"r", 0.1}, {"rho", 0.9}}}});
  EXPECT_EQ(c.spec.name, "symmetric");
  EXPECT_EQ(c.spec.d, 8);
  const ProblemSpec spec = build_spec(c.spec);
  EXPECT_EQ(spec.dimension(), 8u);
  const auto ref = build_reference(c.spec);
  ASSERT_TRUE(ref.has_value());
  EXPECT_NEAR(ref->value, 0.46818, 1e-5);

  EXPECT_EQ(build_spec(parse_config({{"spec", "product-3d"}}).spec).dimension(), 3u);
  EXPECT_EQ(build_spec(parse_config({{"spec", "oblique-2d"}}).spec).label(), "oblique-2d");
  // outside the closed form's range there is no reference, but the problem still builds
  SpecConfig s;
  s.name = "symmetric";
  s.r = 0.2;
  EXPECT_FALSE(build_reference(s).has_value());
  EXPECT_FALSE(validate(build_spec(s)).pass);
}

TEST(Config, InlineSpecRoundTrip) {
  const json j = {{"spec",
                   {{"name", "inline"},
                    {"label", "line"},
                    {"reflection", {{1.0, 0.0}, {-0.5, 1.0}}},
                    {"drift", {-1.0, -1.0}},
                    {"diffusion", {{1.0, 0.0}, {0.0, 1.0}}}}},
                  {"schedule", {{"c", 0.5}, {"exponent", 0.6}}},
                  {"sinks", {{"boundary", true}, {"test_function", {{"kind", "half_square"}}}}},
                  {"x0", {0.5, 0.5}}};
  const RunConfig c = parse_config(j);
  const ProblemSpec spec = build_spec(c.spec);
  EXPECT_EQ(spec.label(), "line");
  EXPECT_EQ(spec.reflection()(1, 0), -0.5);
  EXPECT_TRUE(validate(spec).pass);
  // canonical form parses back to the same canonical form
  const RunConfig again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
  EXPECT_EQ(config_hash(again), config_hash(c));
  EXPECT_EQ(start_point(c, 2), (Vector{0.5, 0.5}));
  EXPECT_THROW(start_point(c, 3), Error);
}

TEST(Config, HashIgnoresRunLengthAndPlumbing) {
  RunConfig a;
  RunConfig b = a;
  b.n_steps = 17;
  b.output_dir = "elsewhere";
  b.threads = 4;
  b.checkpoint_every = 3;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  RunConfig d = a;
  d.exponent = 0.51;
  EXPECT_NE(config_hash(a), config_hash(d));
  RunConfig e = a;
  e.spec.name = "product-3d";
  EXPECT_NE(config_hash(a), config_hash(e));
}

TEST(Config, TestFunctionBuilder) {
  TestFunctionConfig t;
  const TestFunction bump = build_test_function(t, 2);
  EXPECT_EQ(bump.name(), "bump");
  EXPECT_GT(bump.value(Vector{1.0, 1.0}.span()), 0.0);
  t.kind = "linear";
  EXPECT_THROW(build_test_function(t, 2), Error);
  t.coefficients = Vector{1.0, 0.0};
  EXPECT_DOUBLE_EQ(build_test_function(t, 2).value(Vector{3.0, 4.0}.span()), 3.0);
  t.kind = "bump";
  t.center = Vector{1.0, 1.0, 1.0};
  EXPECT_THROW(build_test_function(t, 2), Error);
}
