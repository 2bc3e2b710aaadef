#pragma once

// Text and binary artifact formats. Every file starts with a versioned
// header line; readers refuse anything else.

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstdlib>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmnav/error.hpp"
#include "swarmnav/eval.hpp"
#include "swarmnav/navmesh.hpp"
#include "swarmnav/nn.hpp"
#include "swarmnav/ppo.hpp"
#include "swarmnav/sim.hpp"

namespace swarmnav {

inline constexpr std::string_view kMapHeader = "swarmnav-map v1";
inline constexpr std::string_view kScenarioHeader = "swarmnav-scenario v1";
inline constexpr std::string_view kRunHeader = "swarmnav-run v1";
inline constexpr std::string_view kCheckpointHeader = "swarmnav-ckpt v1";
inline constexpr std::string_view kTrajectoryHeader = "swarmnav-traj v1";
inline constexpr std::string_view kNavmeshHeader = "swarmnav-navmesh v1";
inline constexpr std::string_view kTelemetryHeader = "# swarmnav-telemetry v1";
inline constexpr std::string_view kTrialsHeader = "# swarmnav-trials v1";
inline constexpr std::string_view kCrowdHeader = "# swarmnav-crowdedness v1";
inline constexpr std::string_view kReportFormat = "swarmnav-report v1";

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Shortest decimal text that reads back to the same double.
inline std::string fmt_real(double v) {
  char buf[32];
  for (int digits = 15; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// ---------------------------------------------------------------- key/value

struct KvEntry {
  std::string key;
  std::string value;
  int line = 0;
};

// "key = value" lines after the header; '#' starts a comment.
inline std::vector<KvEntry> parse_kv(std::string_view text, std::string_view header, std::string_view what) {
  std::vector<KvEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++n;
    std::string body = trim(line.substr(0, line.find('#')));
    if (!seen_header) {
      if (body.empty() && trim(line).empty()) continue;
      if (trim(line) != header) {
        throw IncompatibleError(std::string(what) + ": line " + std::to_string(n) + ": expected header '" +
                                std::string(header) + "', found '" + trim(line) + "'");
      }
      seen_header = true;
      continue;
    }
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(std::string(what) + ": line " + std::to_string(n) + ": expected 'key = value'");
    }
    KvEntry e{trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)), n};
    if (e.key.empty()) throw ConfigError(std::string(what) + ": line " + std::to_string(n) + ": empty key");
    for (const auto& prev : out) {
      if (prev.key == e.key) {
        throw ConfigError(std::string(what) + ": line " + std::to_string(n) + ": field '" + e.key +
                          "' repeats line " + std::to_string(prev.line));
      }
    }
    out.push_back(std::move(e));
  }
  if (!seen_header) throw IncompatibleError(std::string(what) + ": missing header '" + std::string(header) + "'");
  return out;
}

namespace detail {

inline ConfigError field_error(std::string_view what, const KvEntry& e, std::string_view msg) {
  return ConfigError(std::string(what) + ": line " + std::to_string(e.line) + ", field '" + e.key + "': " + std::string(msg));
}

inline double to_real(std::string_view what, const KvEntry& e) {
  char* end = nullptr;
  const double v = std::strtod(e.value.c_str(), &end);
  if (e.value.empty() || *end != '\0' || !std::isfinite(v)) throw field_error(what, e, "expected a real number, got '" + e.value + "'");
  return v;
}

inline long long to_int(std::string_view what, const KvEntry& e) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(e.value.c_str(), &end, 10);
  if (e.value.empty() || *end != '\0' || errno != 0) throw field_error(what, e, "expected an integer, got '" + e.value + "'");
  return v;
}

inline std::uint64_t to_u64(std::string_view what, const KvEntry& e) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(e.value.c_str(), &end, 10);
  if (e.value.empty() || e.value[0] == '-' || *end != '\0' || errno != 0) {
    throw field_error(what, e, "expected a non-negative integer, got '" + e.value + "'");
  }
  return v;
}

inline bool to_bool(std::string_view what, const KvEntry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  throw field_error(what, e, "expected true or false, got '" + e.value + "'");
}

inline std::vector<double> to_reals(std::string_view what, const KvEntry& e) {
  std::vector<double> v;
  std::istringstream in(e.value);
  std::string tok;
  while (in >> tok) {
    KvEntry t = e;
    t.value = tok;
    v.push_back(to_real(what, t));
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------- map

inline std::string write_map(const MapSpec& map) {
  std::ostringstream os;
  os << kMapHeader << "\n";
  os << "domain_side = " << fmt_real(map.domain_side) << "\n";
  for (const Polygon& poly : map.obstacles) {
    os << "obstacle =";
    for (const Vec2& v : poly) os << " " << fmt_real(v.x) << " " << fmt_real(v.y);
    os << "\n";
  }
  return os.str();
}

// Map files list one "obstacle = x0 y0 x1 y1 ..." line per polygon.
inline MapSpec parse_map(std::string_view text) {
  constexpr std::string_view what = "map";
  MapSpec map;
  map.domain_side = 0.0;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (!header) {
      if (trim(line).empty()) continue;
      if (trim(line) != kMapHeader) throw IncompatibleError("map: line " + std::to_string(n) + ": expected header '" + std::string(kMapHeader) + "'");
      header = true;
      continue;
    }
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("map: line " + std::to_string(n) + ": expected 'key = value'");
    const KvEntry e{trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)), n};
    if (e.key == "domain_side") {
      map.domain_side = detail::to_real(what, e);
    } else if (e.key == "obstacle") {
      const auto xs = detail::to_reals(what, e);
      if (xs.size() % 2 != 0 || xs.size() < 6) throw detail::field_error(what, e, "need at least 3 x y pairs");
      Polygon poly;
      for (std::size_t i = 0; i < xs.size(); i += 2) poly.push_back({xs[i], xs[i + 1]});
      map.obstacles.push_back(std::move(poly));
    } else {
      throw detail::field_error(what, e, "unknown field");
    }
  }
  if (!header) throw IncompatibleError("map: missing header '" + std::string(kMapHeader) + "'");
  if (!(map.domain_side > 0.0)) throw ConfigError("map: domain_side must be set and positive");
  return map;
}

inline MapSpec load_map(const std::filesystem::path& path) { return parse_map(read_file(path)); }

// ---------------------------------------------------------------- run config

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  std::string map_file;  // optional; relative to the config file
  ScenarioSpec scenario = ScenarioSpec::preset(ScenarioKind::basic);
  WorldConfig world;
  TrainConfig train;

  // Pushes the run seed into the component configs.
  void apply_seed(std::uint64_t s) {
    seed = s;
    world.seed = s;
    train.seed = s;
  }
};

namespace detail {

inline void apply_scenario_field(ScenarioSpec& s, std::string_view what, const KvEntry& e, std::string_view key) {
  if (key == "domain_side") s.domain_side = to_real(what, e);
  else if (key == "agents") s.agents = static_cast<int>(to_int(what, e));
  else if (key == "circle_radius") s.circle_radius = to_real(what, e);
  else if (key == "obstacle_count") s.obstacle_count = static_cast<int>(to_int(what, e));
  else if (key == "obstacle_min") s.obstacle_min = to_real(what, e);
  else if (key == "obstacle_max") s.obstacle_max = to_real(what, e);
  else if (key == "min_trip") s.min_trip = to_real(what, e);
  else throw field_error(what, e, "unknown field");
}

// Presets depend on kind and side, so those are read first.
inline ScenarioSpec scenario_from_entries(std::string_view what, const std::vector<KvEntry>& entries, std::string_view prefix) {
  ScenarioKind kind = ScenarioKind::basic;
  double side = 200.0;
  for (const auto& e : entries) {
    if (e.key == std::string(prefix) + "kind") {
      try {
        kind = scenario_kind_from_name(e.value);
      } catch (const ConfigError& err) {
        throw field_error(what, e, err.what());
      }
    }
    if (e.key == std::string(prefix) + "domain_side") side = to_real(what, e);
  }
  ScenarioSpec s = ScenarioSpec::preset(kind, side);
  for (const auto& e : entries) {
    if (e.key.rfind(prefix, 0) != 0) continue;
    const std::string_view key = std::string_view(e.key).substr(prefix.size());
    if (key == "kind") continue;
    apply_scenario_field(s, what, e, key);
  }
  if (!(s.domain_side > 0.0)) throw ConfigError(std::string(what) + ": domain_side must be positive");
  if (s.agents < 0 || s.obstacle_count < 0) throw ConfigError(std::string(what) + ": counts must be non-negative");
  return s;
}

inline void scenario_lines(std::ostringstream& os, const ScenarioSpec& s, std::string_view prefix) {
  os << prefix << "kind = " << scenario_name(s.kind) << "\n";
  os << prefix << "domain_side = " << fmt_real(s.domain_side) << "\n";
  os << prefix << "agents = " << s.agents << "\n";
  os << prefix << "circle_radius = " << fmt_real(s.circle_radius) << "\n";
  os << prefix << "obstacle_count = " << s.obstacle_count << "\n";
  os << prefix << "obstacle_min = " << fmt_real(s.obstacle_min) << "\n";
  os << prefix << "obstacle_max = " << fmt_real(s.obstacle_max) << "\n";
  os << prefix << "min_trip = " << fmt_real(s.min_trip) << "\n";
}

}  // namespace detail

inline std::string write_scenario(const ScenarioSpec& s) {
  std::ostringstream os;
  os << kScenarioHeader << "\n";
  detail::scenario_lines(os, s, "");
  return os.str();
}

inline ScenarioSpec parse_scenario(std::string_view text) {
  return detail::scenario_from_entries("scenario", parse_kv(text, kScenarioHeader, "scenario"), "");
}

// Parses a run config. `base_dir` resolves a relative map_file.
inline RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  constexpr std::string_view what = "run config";
  const auto entries = parse_kv(text, kRunHeader, what);
  RunConfig rc;
  rc.scenario = detail::scenario_from_entries(what, entries, "scenario.");
  using namespace detail;
  const KvEntry* count_entry = nullptr;
  for (const auto& e : entries) {
    const std::string& k = e.key;
    WorldConfig& w = rc.world;
    TrainConfig& t = rc.train;
    if (k.rfind("scenario.", 0) == 0) continue;
    if (k == "seed") rc.seed = to_u64(what, e);
    else if (k == "output_dir") rc.output_dir = e.value;
    else if (k == "world.map_file") rc.map_file = e.value;
    else if (k == "world.agent_count") {
      w.agent_count = static_cast<int>(to_int(what, e));
      count_entry = &e;
    }
    else if (k == "world.agent_radius") w.agent_radius = to_real(what, e);
    else if (k == "world.speed") w.speed = to_real(what, e);
    else if (k == "world.turn_rate") w.turn_rate = to_real(what, e);
    else if (k == "world.safe_distance") w.safe_distance = to_real(what, e);
    else if (k == "world.max_steps") w.max_steps = static_cast<int>(to_int(what, e));
    else if (k == "world.sensor_count") w.sensor_count = static_cast<int>(to_int(what, e));
    else if (k == "world.sensor_range") w.sensor_range = to_real(what, e);
    else if (k == "world.baseline_mode") w.baseline_mode = to_bool(what, e);
    else if (k == "world.inflate_obstacles") w.inflate_obstacles = to_bool(what, e);
    else if (k == "world.rate_limited_navigation") w.rate_limited_navigation = to_bool(what, e);
    else if (k == "world.reward_navigation") w.rewards.navigation = to_real(what, e);
    else if (k == "world.reward_negative") w.rewards.negative = to_real(what, e);
    else if (k == "world.reward_positive") w.rewards.positive = to_real(what, e);
    else if (k == "world.reward_penalty") w.rewards.penalty = to_real(what, e);
    else if (k == "train.discount") t.discount = to_real(what, e);
    else if (k == "train.gae_lambda") t.gae_lambda = to_real(what, e);
    else if (k == "train.clip") t.clip = to_real(what, e);
    else if (k == "train.learning_rate") t.learning_rate = to_real(what, e);
    else if (k == "train.max_training_steps") t.max_training_steps = static_cast<long>(to_int(what, e));
    else if (k == "train.horizon") t.horizon = static_cast<int>(to_int(what, e));
    else if (k == "train.epochs") t.epochs = static_cast<int>(to_int(what, e));
    else if (k == "train.minibatch") t.minibatch = static_cast<int>(to_int(what, e));
    else if (k == "train.value_loss_weight") t.value_loss_weight = to_real(what, e);
    else if (k == "train.entropy_weight") t.entropy_weight = to_real(what, e);
    else if (k == "train.normalize_advantages") t.normalize_advantages = to_bool(what, e);
    else if (k == "train.hidden_layers") t.hidden_layers = static_cast<int>(to_int(what, e));
    else if (k == "train.hidden_units") t.hidden_units = static_cast<int>(to_int(what, e));
    else if (k == "train.workers") t.workers = static_cast<int>(to_int(what, e));
    else if (k == "train.checkpoint_every") t.checkpoint_every = static_cast<long>(to_int(what, e));
    else if (k == "train.reward_window") t.reward_window = static_cast<int>(to_int(what, e));
    else throw field_error(what, e, "unknown field");
  }
  if (rc.scenario.agents > 0) {
    if (!count_entry) rc.world.agent_count = rc.scenario.agents;
    else if (rc.world.agent_count != rc.scenario.agents) throw field_error(what, *count_entry, "scenario fixes " + std::to_string(rc.scenario.agents) + " agents");
  }
  if (!rc.map_file.empty()) {
    std::filesystem::path p(rc.map_file);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    rc.world.map = load_map(p);
    rc.map_file = p.string();
  }
  rc.apply_seed(rc.seed);
  try {
    rc.train.validate();
    rc.world.validate(rc.world.map ? rc.world.map->domain_side : rc.scenario.domain_side);
  } catch (const ConfigError& err) {
    throw ConfigError(std::string(what) + ": " + err.what());
  }
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_file(path), path.parent_path());
}

// Canonical text: every field, fixed order. Its hash identifies the run.
inline std::string write_run_config(const RunConfig& rc) {
  std::ostringstream os;
  const WorldConfig& w = rc.world;
  const TrainConfig& t = rc.train;
  os << kRunHeader << "\n";
  os << "seed = " << rc.seed << "\n";
  os << "output_dir = " << rc.output_dir << "\n";
  detail::scenario_lines(os, rc.scenario, "scenario.");
  if (!rc.map_file.empty()) os << "world.map_file = " << rc.map_file << "\n";
  os << "world.agent_count = " << w.agent_count << "\n";
  os << "world.agent_radius = " << fmt_real(w.agent_radius) << "\n";
  os << "world.speed = " << fmt_real(w.speed) << "\n";
  os << "world.turn_rate = " << fmt_real(w.turn_rate) << "\n";
  os << "world.safe_distance = " << fmt_real(w.safe_distance) << "\n";
  os << "world.max_steps = " << w.max_steps << "\n";
  os << "world.sensor_count = " << w.sensor_count << "\n";
  os << "world.sensor_range = " << fmt_real(w.sensor_range) << "\n";
  os << "world.baseline_mode = " << (w.baseline_mode ? "true" : "false") << "\n";
  os << "world.inflate_obstacles = " << (w.inflate_obstacles ? "true" : "false") << "\n";
  os << "world.rate_limited_navigation = " << (w.rate_limited_navigation ? "true" : "false") << "\n";
  os << "world.reward_navigation = " << fmt_real(w.rewards.navigation) << "\n";
  os << "world.reward_negative = " << fmt_real(w.rewards.negative) << "\n";
  os << "world.reward_positive = " << fmt_real(w.rewards.positive) << "\n";
  os << "world.reward_penalty = " << fmt_real(w.rewards.penalty) << "\n";
  os << "train.discount = " << fmt_real(t.discount) << "\n";
  os << "train.gae_lambda = " << fmt_real(t.gae_lambda) << "\n";
  os << "train.clip = " << fmt_real(t.clip) << "\n";
  os << "train.learning_rate = " << fmt_real(t.learning_rate) << "\n";
  os << "train.max_training_steps = " << t.max_training_steps << "\n";
  os << "train.horizon = " << t.horizon << "\n";
  os << "train.epochs = " << t.epochs << "\n";
  os << "train.minibatch = " << t.minibatch << "\n";
  os << "train.value_loss_weight = " << fmt_real(t.value_loss_weight) << "\n";
  os << "train.entropy_weight = " << fmt_real(t.entropy_weight) << "\n";
  os << "train.normalize_advantages = " << (t.normalize_advantages ? "true" : "false") << "\n";
  os << "train.hidden_layers = " << t.hidden_layers << "\n";
  os << "train.hidden_units = " << t.hidden_units << "\n";
  os << "train.workers = " << t.workers << "\n";
  os << "train.checkpoint_every = " << t.checkpoint_every << "\n";
  os << "train.reward_window = " << t.reward_window << "\n";
  return os.str();
}

// The output directory is not part of a run's identity.
inline std::uint64_t config_hash(const RunConfig& rc) {
  RunConfig id = rc;
  id.output_dir.clear();
  std::string text = write_run_config(id);
  if (rc.world.map) text += write_map(*rc.world.map);
  return fnv1a(text);
}

// ---------------------------------------------------------------- checkpoint

struct Checkpoint {
  std::uint64_t config_hash = 0;
  long env_steps = 0;
  long updates = 0;
  PolicyParams params;
  std::optional<AdamState> adam;
};

namespace detail {

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(std::string_view in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ConfigError("checkpoint: truncated parameter data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return std::bit_cast<double>(bits);
}

template <class F>
void for_each_value(std::vector<Layer>& layers, F&& f) {
  for (Layer& l : layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) f(l.weights(r, c));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias(i));
  }
}

}  // namespace detail

// Text header, then little-endian doubles: parameters (per layer, row-major
// weights then bias), followed by Adam moments when present.
inline std::string write_checkpoint(const Checkpoint& ck) {
  std::ostringstream head;
  const NetShape& s = ck.params.shape;
  head << kCheckpointHeader << "\n";
  head << "config " << hex64(ck.config_hash) << "\n";
  head << "shape " << s.input << " " << s.hidden_layers << " " << s.hidden_units << " " << s.actions << "\n";
  head << "steps " << ck.env_steps << " " << ck.updates << "\n";
  head << "adam " << (ck.adam ? 1 : 0) << " " << (ck.adam ? ck.adam->step : 0) << "\n";
  head << "data\n";
  std::string out = head.str();
  auto params = ck.params.layers;
  detail::for_each_value(params, [&](double& v) { detail::put_f64(out, v); });
  if (ck.adam) {
    auto m = ck.adam->first;
    auto v2 = ck.adam->second;
    detail::for_each_value(m, [&](double& v) { detail::put_f64(out, v); });
    detail::for_each_value(v2, [&](double& v) { detail::put_f64(out, v); });
  }
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view data) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = data.find('\n', pos);
    if (nl == std::string_view::npos) throw ConfigError("checkpoint: truncated header");
    std::string line(data.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  const std::string header = next_line();
  if (header != kCheckpointHeader) {
    throw IncompatibleError("checkpoint: unsupported header '" + header + "', expected '" + std::string(kCheckpointHeader) + "'");
  }
  Checkpoint ck;
  NetShape shape;
  int has_adam = 0;
  long adam_step = 0;
  {
    std::istringstream l(next_line());
    std::string tag, hex;
    if (!(l >> tag >> hex) || tag != "config") throw ConfigError("checkpoint: bad config line");
    ck.config_hash = std::stoull(hex, nullptr, 16);
  }
  {
    std::istringstream l(next_line());
    std::string tag;
    if (!(l >> tag >> shape.input >> shape.hidden_layers >> shape.hidden_units >> shape.actions) || tag != "shape") {
      throw ConfigError("checkpoint: bad shape line");
    }
  }
  {
    std::istringstream l(next_line());
    std::string tag;
    if (!(l >> tag >> ck.env_steps >> ck.updates) || tag != "steps") throw ConfigError("checkpoint: bad steps line");
  }
  {
    std::istringstream l(next_line());
    std::string tag;
    if (!(l >> tag >> has_adam >> adam_step) || tag != "adam") throw ConfigError("checkpoint: bad adam line");
  }
  if (next_line() != "data") throw ConfigError("checkpoint: missing data marker");
  ck.params = zero_params(shape);
  detail::for_each_value(ck.params.layers, [&](double& v) { v = detail::get_f64(data, pos); });
  if (has_adam) {
    AdamState a = AdamState::for_params(ck.params);
    a.step = adam_step;
    detail::for_each_value(a.first, [&](double& v) { v = detail::get_f64(data, pos); });
    detail::for_each_value(a.second, [&](double& v) { v = detail::get_f64(data, pos); });
    ck.adam = std::move(a);
  }
  if (pos != data.size()) throw ConfigError("checkpoint: trailing bytes after parameter data");
  if (!ck.params.all_finite()) throw NumericError("checkpoint: non-finite parameters");
  ck.params.touch();
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("checkpoint not found: " + path.string());
  return parse_checkpoint(read_file(path));
}

inline std::string checkpoint_name(long env_steps) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ckpt_%012ld.bin", env_steps);
  return buf;
}

// ---------------------------------------------------------------- telemetry

inline std::string telemetry_header(std::uint64_t hash) {
  return std::string(kTelemetryHeader) + " config=" + hex64(hash) +
         "\nupdate,env_steps,learning_rate,surrogate,value_loss,clip_fraction,first_clip_fraction,mean_advantage,"
         "mean_reward,window_reward,arrivals,collisions,timeouts\n";
}

inline std::string telemetry_row(const UpdateReport& r) {
  std::ostringstream os;
  os << r.update << "," << r.env_steps << "," << fmt_real(r.learning_rate) << "," << fmt_real(r.surrogate) << ","
     << fmt_real(r.value_loss) << "," << fmt_real(r.clip_fraction) << "," << fmt_real(r.first_clip_fraction) << ","
     << fmt_real(r.mean_advantage) << "," << fmt_real(r.mean_reward) << "," << fmt_real(r.window_reward) << ","
     << r.arrivals << "," << r.collisions << "," << r.timeouts << "\n";
  return os.str();
}

// ---------------------------------------------------------------- reports

inline nlohmann::json report_json(const EvalReport& r, std::uint64_t hash, const std::string& label) {
  nlohmann::json j;
  j["format"] = kReportFormat;
  j["config_hash"] = hex64(hash);
  j["label"] = label;
  j["trials"] = r.trials;
  j["successes"] = r.successes;
  j["collisions"] = r.collisions;
  j["timeouts"] = r.timeouts;
  j["success_rate"] = r.success_rate;
  j["collision_rate"] = r.collision_rate;
  j["timeout_rate"] = r.timeout_rate;
  j["edp_mean"] = r.edp_mean ? nlohmann::json(*r.edp_mean) : nlohmann::json(nullptr);
  j["edp_std"] = r.edp_std ? nlohmann::json(*r.edp_std) : nlohmann::json(nullptr);
  j["crowdedness"] = {{"samples", r.crowdedness.samples}, {"cap", r.crowdedness.cap}, {"counts", r.crowdedness.counts}};
  j["steps"] = r.steps;
  j["wall_seconds"] = r.wall_seconds;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline std::string trials_csv(const EvalReport& r, std::uint64_t hash) {
  std::ostringstream os;
  os << kTrialsHeader << " config=" << hex64(hash) << "\n";
  os << "agent,outcome,distance,baseline,edp,steps\n";
  for (const TrialRecord& t : r.records) {
    os << t.agent << "," << outcome_name(t.outcome) << "," << fmt_real(t.distance) << "," << fmt_real(t.baseline) << ","
       << (t.edp ? fmt_real(*t.edp) : "") << "," << t.steps << "\n";
  }
  return os.str();
}

inline std::string crowdedness_csv(const EvalReport& r, std::uint64_t hash) {
  std::ostringstream os;
  os << kCrowdHeader << " config=" << hex64(hash) << "\n";
  os << "bin,count\n";
  for (std::size_t k = 0; k < r.crowdedness.counts.size(); ++k) os << k << "," << r.crowdedness.counts[k] << "\n";
  return os.str();
}

// ---------------------------------------------------------------- trajectory

struct TrajectoryRecord {
  long step = 0;
  int agent = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  Action action = Action::stay;
  double reward = 0.0;
  AgentStatus status = AgentStatus::running;

  bool operator==(const TrajectoryRecord&) const = default;
};

inline TrajectoryRecord trajectory_record(long step, const AgentStep& a) {
  return {step, a.agent, a.pose.position.x, a.pose.position.y, a.pose.heading(), a.action, a.reward.total, a.status};
}

inline std::string format_record(const TrajectoryRecord& r) {
  std::ostringstream os;
  os << r.step << " " << r.agent << " " << fmt_real(r.x) << " " << fmt_real(r.y) << " " << fmt_real(r.heading) << " "
     << kActionNames[static_cast<int>(r.action)] << " " << fmt_real(r.reward) << " " << status_name(r.status);
  return os.str();
}

inline TrajectoryRecord parse_record(const std::string& line, int line_no) {
  std::istringstream in(line);
  TrajectoryRecord r;
  std::string x, y, h, act, rew, st;
  if (!(in >> r.step >> r.agent >> x >> y >> h >> act >> rew >> st)) {
    throw ConfigError("trajectory: line " + std::to_string(line_no) + ": malformed record");
  }
  auto real = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (*end != '\0') throw ConfigError("trajectory: line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
  };
  r.x = real(x);
  r.y = real(y);
  r.heading = real(h);
  r.reward = real(rew);
  const auto a = std::find(kActionNames.begin(), kActionNames.end(), act);
  if (a == kActionNames.end()) throw ConfigError("trajectory: line " + std::to_string(line_no) + ": unknown action '" + act + "'");
  r.action = static_cast<Action>(a - kActionNames.begin());
  bool found = false;
  for (AgentStatus s : {AgentStatus::running, AgentStatus::arrived, AgentStatus::collided, AgentStatus::timed_out}) {
    if (status_name(s) == st) {
      r.status = s;
      found = true;
    }
  }
  if (!found) throw ConfigError("trajectory: line " + std::to_string(line_no) + ": unknown status '" + st + "'");
  return r;
}

// A trajectory log embeds the run config and map it was produced with, so
// replay needs nothing else.
struct TrajectoryLog {
  std::string run_config;  // canonical run config text
  std::string map;         // map text, empty when the scenario generates it
  std::vector<TrajectoryRecord> records;
};

inline std::string trajectory_prologue(const RunConfig& rc) {
  RunConfig inline_map = rc;
  inline_map.map_file.clear();
  const std::string cfg = write_run_config(inline_map);
  const std::string map = rc.world.map ? write_map(*rc.world.map) : std::string();
  auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  std::ostringstream os;
  os << kTrajectoryHeader << "\n";
  os << "config_hash " << hex64(config_hash(rc)) << "\n";
  os << "config_lines " << count(cfg) << "\n" << cfg;
  os << "map_lines " << count(map) << "\n" << map;
  os << "records\n";
  return os.str();
}

inline TrajectoryLog parse_trajectory(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  auto next = [&](std::string_view what) {
    if (!std::getline(in, line)) throw ConfigError("trajectory: missing " + std::string(what));
    ++n;
    return line;
  };
  if (next("header") != kTrajectoryHeader) {
    throw IncompatibleError("trajectory: unsupported header '" + line + "', expected '" + std::string(kTrajectoryHeader) + "'");
  }
  next("config hash");
  auto block = [&](std::string_view tag) {
    std::istringstream l(next(tag));
    std::string t;
    long lines = -1;
    if (!(l >> t >> lines) || t != tag || lines < 0) throw ConfigError("trajectory: line " + std::to_string(n) + ": expected " + std::string(tag));
    std::string out;
    for (long i = 0; i < lines; ++i) out += next(tag) + "\n";
    return out;
  };
  TrajectoryLog log;
  log.run_config = block("config_lines");
  log.map = block("map_lines");
  if (next("records marker") != "records") throw ConfigError("trajectory: line " + std::to_string(n) + ": expected 'records'");
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    log.records.push_back(parse_record(line, n));
  }
  return log;
}

struct ReplayResult {
  long steps_checked = 0;
  long records_checked = 0;
  std::optional<long> divergence_step;
  std::string detail;
};

// Re-simulates the logged action stream and compares every record.
inline ReplayResult replay_trajectory(const TrajectoryLog& log) {
  RunConfig rc = parse_run_config(log.run_config);
  if (!log.map.empty()) rc.world.map = parse_map(log.map);
  ReplayResult res;
  if (log.records.empty()) return res;
  World world(rc.world, rc.scenario);
  std::size_t i = 0;
  std::vector<std::optional<Action>> actions(world.agents().size());
  const long last = log.records.back().step;
  for (long step = 1; step <= last; ++step) {
    const std::size_t begin = i;
    std::fill(actions.begin(), actions.end(), std::nullopt);
    std::string problem;
    for (; i < log.records.size() && log.records[i].step == step; ++i) {
      const auto& r = log.records[i];
      if (r.agent < 0 || r.agent >= static_cast<int>(actions.size())) {
        problem = "agent id " + std::to_string(r.agent) + " out of range";
      } else {
        actions[r.agent] = r.action;
      }
    }
    if (i < log.records.size() && log.records[i].step < step) problem = "records out of order";
    StepOutcome out;
    if (problem.empty()) {
      try {
        out = world.step(actions);
      } catch (const ProtocolError& e) {
        problem = e.what();
      }
    }
    if (problem.empty()) {
      if (out.agents.size() != i - begin) {
        problem = "expected " + std::to_string(out.agents.size()) + " agent records, log has " + std::to_string(i - begin);
      } else {
        for (std::size_t k = 0; k < out.agents.size(); ++k) {
          const TrajectoryRecord expect = trajectory_record(step, out.agents[k]);
          if (!(expect == log.records[begin + k])) {
            problem = "agent " + std::to_string(expect.agent) + ": simulated '" + format_record(expect) + "', logged '" +
                      format_record(log.records[begin + k]) + "'";
            break;
          }
        }
      }
    }
    res.records_checked = static_cast<long>(i);
    if (!problem.empty()) {
      res.divergence_step = step;
      res.detail = problem;
      return res;
    }
    res.steps_checked = step;
  }
  return res;
}

// ---------------------------------------------------------------- navmesh dump

inline std::string dump_navmesh(const NavMesh& mesh) {
  std::ostringstream os;
  os << kNavmeshHeader << "\n";
  os << "vertices " << mesh.vertices.size() << "\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    os << "v " << i << " " << fmt_real(mesh.vertices[i].x) << " " << fmt_real(mesh.vertices[i].y) << "\n";
  }
  os << "triangles " << mesh.triangles.size() << "\n";
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& adj = mesh.adjacency[t];
    os << "t " << t << " " << tri[0] << " " << tri[1] << " " << tri[2] << " adj " << adj[0] << " " << adj[1] << " " << adj[2]
       << "\n";
  }
  return os.str();
}

inline std::string dump_channel(const Channel& c, const Waypoints& w) {
  std::ostringstream os;
  os << "channel " << c.triangle_indices.size() << " cost " << fmt_real(c.total_cost) << "\n";
  os << "triangles";
  for (int t : c.triangle_indices) os << " " << t;
  os << "\n";
  for (const Portal& p : c.portals) {
    os << "portal " << p.from << " " << p.to << " " << fmt_real(p.a.x) << " " << fmt_real(p.a.y) << " " << fmt_real(p.b.x)
       << " " << fmt_real(p.b.y) << "\n";
  }
  os << "waypoints " << w.points.size() << "\n";
  for (const Vec2& p : w.points) os << "w " << fmt_real(p.x) << " " << fmt_real(p.y) << "\n";
  return os.str();
}

}  // namespace swarmnav
