#pragma once

// Checkpoint records (structured text, JSON). Every double is stored as the
// 16-digit lowercase hex of its IEEE-754 bit pattern so that resuming is bitwise exact.
// Layout is documented in docs/FORMATS.md.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "refsim/error.hpp"
#include "refsim/measure.hpp"
#include "refsim/model.hpp"
#include "refsim/noise.hpp"
#include "refsim/scheme.hpp"

namespace refsim {

inline constexpr int kCheckpointFormatVersion = 1;

inline std::string hex_u64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw Error(ErrorKind::CheckpointCorrupt, "bad hex field '" + s + "'");
  return v;
}

inline std::string hex_double(double d) { return hex_u64(std::bit_cast<std::uint64_t>(d)); }
inline double parse_hex_double(const std::string& s) { return std::bit_cast<double>(parse_hex_u64(s)); }

/// FNV-1a 64-bit.
class Fnv1a {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void str(std::string_view s) {
    bytes(s.data(), s.size());
    const unsigned char sep = 0xff;
    bytes(&sep, 1);
  }
  void num(double d) {
    const auto u = std::bit_cast<std::uint64_t>(d);
    bytes(&u, sizeof u);
  }
  void num(std::uint64_t u) { bytes(&u, sizeof u); }
  std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_hex(std::string_view s) {
  Fnv1a h;
  h.str(s);
  return hex_u64(h.value());
}

/// Hash over the reflection matrix and coefficient data (callables by name).
inline std::string spec_hash(const ProblemSpec& spec) {
  Fnv1a h;
  h.str(spec.label());
  h.num(static_cast<std::uint64_t>(spec.dimension()));
  for (double v : spec.reflection().flat()) h.num(v);
  if (spec.drift().is_constant()) {
    h.str("drift:constant");
    for (double v : spec.drift().constant_value()) h.num(v);
  } else {
    h.str("drift:" + spec.drift().name());
    h.num(spec.drift().declared_bound());
  }
  if (spec.diffusion().is_constant()) {
    h.str("diffusion:constant");
    for (double v : spec.diffusion().constant_value().flat()) h.num(v);
  } else {
    h.str("diffusion:" + spec.diffusion().name());
    h.num(spec.diffusion().declared_bound());
  }
  return hex_u64(h.value());
}

namespace ckpt {

using nlohmann::json;

inline json kahan(const KahanSum& s) { return json::array({hex_double(s.sum), hex_double(s.comp)}); }

inline KahanSum kahan(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::CheckpointCorrupt, "compensated sum must be a pair");
  return KahanSum{parse_hex_double(j[0].get<std::string>()), parse_hex_double(j[1].get<std::string>())};
}

inline json doubles(std::span<const double> v) {
  json a = json::array();
  for (double d : v) a.push_back(hex_double(d));
  return a;
}

inline std::vector<double> parse_doubles(const json& j) {
  std::vector<double> out;
  for (const auto& e : j) out.push_back(parse_hex_double(e.get<std::string>()));
  return out;
}

inline json stream(const RngStream& s) {
  return {{"seed", hex_u64(s.master_seed())},
          {"replication", s.replication_index()},
          {"lane", s.lane()},
          {"counter", hex_u64(s.counter())}};
}

inline RngStream stream(const json& j) {
  return RngStream(parse_hex_u64(j.at("seed").get<std::string>()), j.at("replication").get<std::uint32_t>(),
                   j.at("lane").get<std::uint32_t>(), parse_hex_u64(j.at("counter").get<std::string>()));
}

inline json state(const ChainState& s) {
  json powers = json::array();
  for (const auto& [a, sum] : s.accumulators.powers) powers.push_back({{"exponent", hex_double(a)}, {"sum", kahan(sum)}});
  return {{"k", s.k},
          {"x", doubles(s.x.span())},
          {"rng", stream(s.stream)},
          {"truncations", s.truncations},
          {"lambda", kahan(s.accumulators.lambda)},
          {"lambda_3_2", kahan(s.accumulators.lambda_3_2)},
          {"lambda_powers", powers}};
}

inline ChainState state(const json& j) {
  ChainState s;
  s.k = j.at("k").get<std::uint64_t>();
  s.x = Vector(parse_doubles(j.at("x")));
  s.stream = stream(j.at("rng"));
  s.truncations = j.at("truncations").get<std::uint64_t>();
  s.accumulators.lambda = kahan(j.at("lambda"));
  s.accumulators.lambda_3_2 = kahan(j.at("lambda_3_2"));
  for (const auto& p : j.at("lambda_powers"))
    s.accumulators.powers.emplace_back(parse_hex_double(p.at("exponent").get<std::string>()), kahan(p.at("sum")));
  return s;
}

inline json measure(const WeightedMeasure& nu) {
  const auto& a = nu.accumulators();
  json raw = json::array();
  for (const auto& coord : a.raw) {
    json row = json::array();
    for (const auto& s : coord) row.push_back(kahan(s));
    raw.push_back(row);
  }
  json cross = json::array();
  for (const auto& s : a.cross) cross.push_back(kahan(s));
  json hist = json::array();
  for (const auto& h : a.histograms)
    hist.push_back({{"zero", hex_double(h.zero)},
                    {"overflow", hex_double(h.overflow)},
                    {"bins", doubles(std::span<const double>(h.bins))}});
  json sinks = json::object();
  for (const auto& [name, s] : a.sinks) sinks[name] = kahan(s);
  json res = json::array();
  for (const auto& atom : a.reservoir)
    res.push_back({{"x", doubles(atom.x.span())}, {"weight", hex_double(atom.weight)}, {"key", hex_double(atom.key)}});
  return {{"count", a.count},
          {"total", kahan(a.total)},
          {"raw", raw},
          {"cross", cross},
          {"histograms", hist},
          {"sinks", sinks},
          {"reservoir", res},
          {"reservoir_threshold", hex_double(a.threshold)},
          {"reservoir_rng", stream(a.reservoir_stream)}};
}

inline void restore_measure(WeightedMeasure& nu, const json& j) {
  WeightedMeasure::Accumulators a;
  a.count = j.at("count").get<std::uint64_t>();
  a.total = kahan(j.at("total"));
  for (const auto& row : j.at("raw")) {
    if (row.size() != 4) throw Error(ErrorKind::CheckpointCorrupt, "raw moments need four orders");
    std::array<KahanSum, 4> r;
    for (int k = 0; k < 4; ++k) r[k] = kahan(row[k]);
    a.raw.push_back(r);
  }
  for (const auto& s : j.at("cross")) a.cross.push_back(kahan(s));
  if (a.cross.size() != nu.dimension() * (nu.dimension() + 1) / 2)
    throw Error(ErrorKind::CheckpointCorrupt, "cross moment count mismatch");
  for (const auto& h : j.at("histograms")) {
    CoordinateHistogram ch;
    ch.zero = parse_hex_double(h.at("zero").get<std::string>());
    ch.overflow = parse_hex_double(h.at("overflow").get<std::string>());
    ch.bins = parse_doubles(h.at("bins"));
    a.histograms.push_back(std::move(ch));
  }
  for (const auto& [name, s] : j.at("sinks").items()) a.sinks[name] = kahan(s);
  for (const auto& atom : j.at("reservoir"))
    a.reservoir.push_back(WeightedAtom{Vector(parse_doubles(atom.at("x"))),
                                       parse_hex_double(atom.at("weight").get<std::string>()),
                                       parse_hex_double(atom.at("key").get<std::string>())});
  a.threshold = parse_hex_double(j.at("reservoir_threshold").get<std::string>());
  a.reservoir_stream = stream(j.at("reservoir_rng"));
  nu.restore(std::move(a));
}

inline json boundary(const BoundaryMeasure& mu) {
  const auto& a = mu.accumulators();
  json mass = json::array();
  for (const auto& s : a.mass) mass.push_back(kahan(s));
  json sinks = json::array();
  for (const auto& face : a.sinks) {
    json f = json::object();
    for (const auto& [name, s] : face) f[name] = kahan(s);
    sinks.push_back(f);
  }
  return {{"steps", a.steps}, {"mass", mass}, {"sinks", sinks}};
}

inline void restore_boundary(BoundaryMeasure& mu, const json& j) {
  BoundaryMeasure::Accumulators a;
  a.steps = j.at("steps").get<std::uint64_t>();
  for (const auto& s : j.at("mass")) a.mass.push_back(kahan(s));
  for (const auto& face : j.at("sinks")) {
    std::map<std::string, KahanSum, std::less<>> f;
    for (const auto& [name, s] : face.items()) f[name] = kahan(s);
    a.sinks.push_back(std::move(f));
  }
  mu.restore(std::move(a));
}

}  // namespace ckpt

struct Checkpoint {
  std::string spec_hash;
  std::string config_hash;
  ChainState state;
  nlohmann::json measure;   ///< null when absent
  nlohmann::json boundary;  ///< null when absent
};

inline nlohmann::json checkpoint_json(const Chain& chain, const std::string& config_hash,
                                      const WeightedMeasure* nu = nullptr, const BoundaryMeasure* mu = nullptr) {
  nlohmann::json j = {{"format_version", kCheckpointFormatVersion},
                      {"rng_algorithm", std::string(kRngAlgorithm)},
                      {"spec_hash", spec_hash(chain.spec())},
                      {"config_hash", config_hash},
                      {"state", ckpt::state(chain.state())}};
  j["measure"] = nu ? ckpt::measure(*nu) : nlohmann::json();
  j["boundary"] = mu ? ckpt::boundary(*mu) : nlohmann::json();
  return j;
}

inline Checkpoint parse_checkpoint(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw Error(ErrorKind::CheckpointCorrupt, "unsupported checkpoint format_version");
    if (j.at("rng_algorithm").get<std::string>() != kRngAlgorithm)
      throw Error(ErrorKind::CheckpointCorrupt, "checkpoint written with a different generator");
    Checkpoint c;
    c.spec_hash = j.at("spec_hash").get<std::string>();
    c.config_hash = j.at("config_hash").get<std::string>();
    c.state = ckpt::state(j.at("state"));
    c.measure = j.value("measure", nlohmann::json());
    c.boundary = j.value("boundary", nlohmann::json());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CheckpointCorrupt, e.what());
  }
}

inline void write_checkpoint(const std::string& path, const nlohmann::json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::CheckpointCorrupt, "cannot write " + tmp);
    out << j.dump(1) << '\n';
    if (!out) throw Error(ErrorKind::CheckpointCorrupt, "short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorKind::CheckpointCorrupt, "cannot rename " + tmp);
}

inline nlohmann::json read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::CheckpointCorrupt, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CheckpointCorrupt, e.what());
  }
}

/// Restores a chain (plus optional measures) from a parsed checkpoint after
/// checking that it belongs to the same problem.
inline void restore_checkpoint(const Checkpoint& c, Chain& chain, WeightedMeasure* nu = nullptr,
                               BoundaryMeasure* mu = nullptr) {
  if (c.spec_hash != spec_hash(chain.spec()))
    throw Error(ErrorKind::CheckpointCorrupt, "checkpoint spec hash does not match the problem");
  if (c.state.x.size() != chain.spec().dimension())
    throw Error(ErrorKind::CheckpointCorrupt, "checkpoint state dimension mismatch");
  chain.mutable_state() = c.state;
  try {
    if (nu) {
      if (c.measure.is_null()) throw Error(ErrorKind::CheckpointCorrupt, "checkpoint carries no measure");
      ckpt::restore_measure(*nu, c.measure);
    }
    if (mu) {
      if (c.boundary.is_null()) throw Error(ErrorKind::CheckpointCorrupt, "checkpoint carries no boundary measure");
      ckpt::restore_boundary(*mu, c.boundary);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CheckpointCorrupt, e.what());
  }
}

}  // namespace refsim
