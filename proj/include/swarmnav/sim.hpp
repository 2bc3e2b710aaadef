#pragma once

// Discrete-time multi-agent world. Each step every running agent picks one
// of six actions: follow the navmesh planner, or one of five local moves.
// Updates are synchronous from the pre-step snapshot; collisions, arrivals
// and timeouts are resolved afterwards and terminated agents respawn with a
// fresh start/goal pair drawn from the scenario.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swarmnav/error.hpp"
#include "swarmnav/geom.hpp"
#include "swarmnav/navmesh.hpp"
#include "swarmnav/rng.hpp"

namespace swarmnav {

enum class Action : std::uint8_t { navigate = 0, stay = 1, forward = 2, turn_left = 3, turn_right = 4, backward = 5 };
inline constexpr int kActionCount = 6;

inline constexpr std::array<std::string_view, kActionCount> kActionNames{"navigate", "stay",       "forward",
                                                                          "turn_left", "turn_right", "backward"};

enum class AgentStatus : std::uint8_t { running, arrived, collided, timed_out };

inline std::string_view status_name(AgentStatus s) {
  switch (s) {
    case AgentStatus::running: return "running";
    case AgentStatus::arrived: return "arrived";
    case AgentStatus::collided: return "collided";
    case AgentStatus::timed_out: return "timed_out";
  }
  return "?";
}

struct RewardConstants {
  double navigation = 0.00005;
  double negative = -0.5;
  double positive = 1.0;
  double penalty = -0.0001;
};

struct StepReward {
  double navigation = 0.0;
  double scenario = 0.0;
  double penalty = 0.0;
  double total = 0.0;

  static StepReward make(double nav, double scen, double pen) { return {nav, scen, pen, nav + scen + pen}; }
};

// An arriving agent must never end its trial with a negative sum of arrival
// reward and time penalties.
inline bool arrival_reward_positive(const RewardConstants& r, int max_steps) {
  return r.positive + static_cast<double>(max_steps) * r.penalty >= 0.0;
}

struct WorldConfig {
  std::optional<MapSpec> map;  // overrides the scenario's map when set
  int agent_count = 8;
  double agent_radius = 1.0;
  double speed = 1.0;
  double turn_rate = 1.0;
  double safe_distance = 2.0;
  int max_steps = 10000;
  int sensor_count = 45;
  double sensor_range = 20.0;
  std::uint64_t seed = 0;
  bool baseline_mode = false;
  bool inflate_obstacles = true;
  bool rate_limited_navigation = false;
  RewardConstants rewards;

  void validate(double domain_side) const {
    if (agent_count < 1) throw ConfigError("agent_count must be at least 1");
    if (!(agent_radius > 0.0) || !(speed > 0.0) || !(turn_rate > 0.0) || !(safe_distance > 0.0) || !(sensor_range > 0.0)) {
      throw ConfigError("radius, speed, turn rate, safe distance and sensor range must be positive");
    }
    if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
    if (sensor_count < 1) throw ConfigError("sensor_count must be at least 1");
    if (domain_side < 10.0 * safe_distance) throw ConfigError("domain side must be at least 10x the safe distance");
  }

  int observation_width() const { return 2 * sensor_count + (baseline_mode ? 2 : 0); }
  int action_count() const { return baseline_mode ? kActionCount - 1 : kActionCount; }
};

// Baseline networks have no output for `navigate`; their index i maps to action i+1.
inline Action action_from_index(int index, bool baseline_mode) {
  const int a = baseline_mode ? index + 1 : index;
  if (a < 0 || a >= kActionCount) throw ProtocolError("action index out of range");
  return static_cast<Action>(a);
}

inline int index_from_action(Action a, bool baseline_mode) {
  const int i = static_cast<int>(a) - (baseline_mode ? 1 : 0);
  if (i < 0) throw ProtocolError("navigate is not available in baseline mode");
  return i;
}

enum class ScenarioKind : std::uint8_t { basic, cross_road, four_wall, random_obstacle, circle_transport };

inline constexpr std::array<std::string_view, 5> kScenarioNames{"basic", "cross_road", "four_wall", "random_obstacle",
                                                                "circle_transport"};

inline ScenarioKind scenario_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kScenarioNames.size(); ++i) {
    if (kScenarioNames[i] == name) return static_cast<ScenarioKind>(i);
  }
  throw ConfigError("unknown scenario kind '" + std::string(name) + "'");
}

inline std::string_view scenario_name(ScenarioKind k) { return kScenarioNames[static_cast<std::size_t>(k)]; }

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::basic;
  double domain_side = 200.0;
  int agents = 0;  // 0: take agent_count from the world config
  double circle_radius = 80.0;
  int obstacle_count = 8;
  double obstacle_min = 10.0;
  double obstacle_max = 30.0;
  double min_trip = 10.0;  // minimum start-goal distance for random draws

  // The geometry of each named test scenario, for a 200x200 domain.
  static ScenarioSpec preset(ScenarioKind kind, double side = 200.0) {
    ScenarioSpec s;
    s.kind = kind;
    s.domain_side = side;
    const double u = side / 200.0;
    s.circle_radius = 80.0 * u;
    s.obstacle_min = 10.0 * u;
    s.obstacle_max = 30.0 * u;
    s.min_trip = std::min(10.0, 0.2 * side);
    if (kind == ScenarioKind::circle_transport) s.agents = 20;
    if (kind == ScenarioKind::four_wall) s.agents = 30;
    return s;
  }
};

inline Polygon rectangle(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

// Non-overlapping axis-aligned rectangles with at least `gap` between them
// and `margin` from the domain boundary. Placement is rejection-sampled; a
// rectangle that cannot be placed after 1000 draws is skipped.
inline MapSpec random_rectangle_map(double side, int count, double min_size, double max_size, double gap, double margin,
                                    Rng& rng) {
  MapSpec map;
  map.domain_side = side;
  std::vector<std::array<double, 4>> boxes;
  for (int k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double w = rng.uniform(min_size, max_size);
      const double h = rng.uniform(min_size, max_size);
      if (w + 2.0 * margin >= side || h + 2.0 * margin >= side) continue;
      const double x0 = rng.uniform(margin, side - margin - w);
      const double y0 = rng.uniform(margin, side - margin - h);
      const std::array<double, 4> box{x0, y0, x0 + w, y0 + h};
      const bool clash = std::any_of(boxes.begin(), boxes.end(), [&](const auto& b) {
        return box[0] < b[2] + gap && b[0] < box[2] + gap && box[1] < b[3] + gap && b[1] < box[3] + gap;
      });
      if (clash) continue;
      boxes.push_back(box);
      map.obstacles.push_back(rectangle(box[0], box[1], box[2], box[3]));
      break;
    }
  }
  return map;
}

inline MapSpec scenario_map(const ScenarioSpec& s, double agent_radius, std::uint64_t seed) {
  const double side = s.domain_side;
  const double u = side / 200.0;
  switch (s.kind) {
    case ScenarioKind::basic:
    case ScenarioKind::cross_road:
    case ScenarioKind::circle_transport:
      return MapSpec{side, {}};
    case ScenarioKind::four_wall:
      return MapSpec{side,
                     {rectangle(58 * u, 75 * u, 62 * u, 125 * u), rectangle(138 * u, 75 * u, 142 * u, 125 * u),
                      rectangle(75 * u, 58 * u, 125 * u, 62 * u), rectangle(75 * u, 138 * u, 125 * u, 142 * u)}};
    case ScenarioKind::random_obstacle: {
      Rng rng(mix_seed(seed, 0x6d6170));
      return random_rectangle_map(side, s.obstacle_count, s.obstacle_min, s.obstacle_max, 2.0 * agent_radius + 1.0,
                                  4.0 * agent_radius, rng);
    }
  }
  return MapSpec{side, {}};
}

struct AgentState {
  int id = 0;
  Pose pose;
  Vec2 start;
  Vec2 goal;
  long spawn_step = 0;
  long age = 0;
  double distance_traveled = 0.0;
  double baseline_length = 0.0;
  std::optional<Waypoints> route;
  AgentStatus status = AgentStatus::running;
  int slot = 0;  // fixed spawn slot for scenarios with deterministic layouts
};

struct Observation {
  std::vector<RayHit> rays;
  std::vector<double> encoded;
};

// Closed trial of one agent: from spawn to arrival, collision or timeout.
struct TrialEnd {
  int agent = 0;
  AgentStatus outcome = AgentStatus::arrived;
  double distance = 0.0;  // includes the residual gap to the goal on arrival
  double baseline_length = 0.0;
  long steps = 0;
};

struct AgentStep {
  int agent = 0;
  Action action = Action::stay;
  StepReward reward;
  AgentStatus status = AgentStatus::running;  // status after this step
  Pose pose;                                  // pose after the kinematic update
};

struct StepOutcome {
  long step = 0;  // global counter after this step
  std::vector<AgentStep> agents;
  std::vector<TrialEnd> trials;
};

class World {
 public:
  World(WorldConfig config, ScenarioSpec scenario) : config_(std::move(config)), scenario_(scenario), rng_(config_.seed) {
    if (scenario_.agents > 0) config_.agent_count = scenario_.agents;
    map_ = config_.map ? *config_.map : scenario_map(scenario_, config_.agent_radius, config_.seed);
    config_.validate(map_.domain_side);
    if (scenario_.domain_side != map_.domain_side) scenario_.domain_side = map_.domain_side;
    mesh_ = build_navmesh(map_, config_.inflate_obstacles ? config_.agent_radius : 0.0);
    build_static_segments();

    agents_.resize(config_.agent_count);
    for (int i = 0; i < config_.agent_count; ++i) {
      agents_[i].id = i;
      agents_[i].slot = i;
      agents_[i].status = AgentStatus::arrived;  // not yet placed
    }
    for (auto& a : agents_) {
      if (!spawn(a)) throw ConfigError("overcrowded scenario: cannot place agent " + std::to_string(a.id));
    }
  }

  const WorldConfig& config() const { return config_; }
  const ScenarioSpec& scenario() const { return scenario_; }
  const MapSpec& map() const { return map_; }
  const NavMesh& mesh() const { return mesh_; }
  std::span<const AgentState> agents() const { return agents_; }
  const AgentState& agent(int id) const { return agents_.at(id); }
  long step_count() const { return step_; }
  std::span<const Segment> static_segments() const { return segments_; }

  std::vector<int> running_agents() const {
    std::vector<int> ids;
    for (const auto& a : agents_) {
      if (a.status == AgentStatus::running) ids.push_back(a.id);
    }
    return ids;
  }

  // Test hook: put an agent at a pose with a goal, as a fresh trial.
  void place_agent(int id, Pose pose, Vec2 goal) {
    AgentState& a = agents_.at(id);
    a.pose = pose;
    a.start = pose.position;
    a.goal = goal;
    a.spawn_step = step_;
    a.age = 0;
    a.distance_traveled = 0.0;
    a.route.reset();
    a.status = AgentStatus::running;
    a.baseline_length = shortest_length_estimate(mesh_, a.start, a.goal);
  }

  // Test hook: take an agent out of the world until it respawns.
  void remove_agent(int id) { agents_.at(id).status = AgentStatus::arrived; }

  Observation observe(int id) const {
    const AgentState& self = agents_.at(id);
    if (self.status != AgentStatus::running) throw ProtocolError("observe on an agent that is not running");
    std::vector<Disc> others;
    others.reserve(agents_.size());
    for (const auto& a : agents_) {
      if (a.id != id && a.status == AgentStatus::running) others.push_back({a.pose.position, config_.agent_radius, a.id});
    }
    Observation obs;
    const int n = config_.sensor_count;
    obs.rays.reserve(n);
    obs.encoded.reserve(config_.observation_width());
    const double step = kTwoPi / n;
    for (int j = 0; j < n; ++j) {
      const Vec2 dir = unit_from_angle(self.pose.heading() + step * j);
      const RayHit hit = ray_cast(self.pose.position, dir, config_.sensor_range, segments_, others);
      obs.rays.push_back(hit);
      obs.encoded.push_back(hit.distance / config_.sensor_range);
      obs.encoded.push_back(hit.kind == HitKind::agent ? 1.0 : 0.0);
    }
    if (config_.baseline_mode) {
      const Vec2 to_goal = self.goal - self.pose.position;
      const double diag = map_.domain_side * std::sqrt(2.0);
      obs.encoded.push_back(std::min(1.0, to_goal.norm() / diag));
      double bearing = std::atan2(to_goal.y, to_goal.x) - self.pose.heading();
      bearing = normalize_angle(bearing + kPi) - kPi;  // [-π, π)
      obs.encoded.push_back(0.5 * (bearing / kPi + 1.0));
    }
    return obs;
  }

  // Distinct partners hit by at least one sensor ray.
  int crowdedness(int id) const { return crowdedness_of(observe(id)); }

  static int crowdedness_of(const Observation& obs) {
    std::vector<int> seen;
    for (const RayHit& h : obs.rays) {
      if (h.kind == HitKind::agent && std::find(seen.begin(), seen.end(), h.agent) == seen.end()) seen.push_back(h.agent);
    }
    return static_cast<int>(seen.size());
  }

  // Kinematic update of a single agent; touches nothing but `a`.
  void apply_action(AgentState& a, Action action) const {
    const Vec2 before = a.pose.position;
    switch (action) {
      case Action::stay: break;
      case Action::forward: a.pose.position += a.pose.forward() * config_.speed; break;
      case Action::backward: a.pose.position -= a.pose.forward() * config_.speed; break;
      case Action::turn_left: a.pose.rotate(-config_.turn_rate); break;
      case Action::turn_right: a.pose.rotate(config_.turn_rate); break;
      case Action::navigate: navigate(a); break;
    }
    a.distance_traveled += distance(before, a.pose.position);
  }

  StepOutcome step(std::span<const std::optional<Action>> actions) {
    if (actions.size() != agents_.size()) throw ProtocolError("one action slot per agent is required");
    for (const auto& a : agents_) {
      const bool running = a.status == AgentStatus::running;
      if (actions[a.id].has_value() != running) {
        throw ProtocolError(running ? "missing action for running agent " + std::to_string(a.id)
                                    : "action supplied for non-running agent " + std::to_string(a.id));
      }
      if (running && config_.baseline_mode && *actions[a.id] == Action::navigate) {
        throw ProtocolError("navigate is not available in baseline mode");
      }
    }

    std::vector<int> ids = running_agents();
    for (int id : ids) {
      apply_action(agents_[id], *actions[id]);
      ++agents_[id].age;
    }

    std::vector<char> collided(agents_.size(), 0);
    const double ds = config_.safe_distance;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        if (distance(agents_[ids[i]].pose.position, agents_[ids[j]].pose.position) < ds) {
          collided[ids[i]] = collided[ids[j]] = 1;
        }
      }
    }
    for (int id : ids) {
      if (!collided[id] && hits_static(agents_[id].pose.position)) collided[id] = 1;
    }

    ++step_;
    StepOutcome out;
    out.step = step_;
    const RewardConstants& rc = config_.rewards;
    for (int id : ids) {
      AgentState& a = agents_[id];
      const Action act = *actions[id];
      double scen = 0.0;
      if (collided[id]) {
        a.status = AgentStatus::collided;
        scen = rc.negative;
      } else if (distance(a.pose.position, a.goal) <= config_.agent_radius) {
        a.status = AgentStatus::arrived;
        scen = rc.positive;
      } else if (a.age > config_.max_steps) {
        a.status = AgentStatus::timed_out;
      }
      const StepReward r = StepReward::make(act == Action::navigate ? rc.navigation : 0.0, scen, rc.penalty);
      out.agents.push_back({id, act, r, a.status, a.pose});
      if (a.status != AgentStatus::running) {
        double d = a.distance_traveled;
        if (a.status == AgentStatus::arrived) d += distance(a.pose.position, a.goal);
        out.trials.push_back({id, a.status, d, a.baseline_length, a.age});
      }
    }

    for (auto& a : agents_) {
      if (a.status != AgentStatus::running) spawn(a);
    }
    return out;
  }

  bool hits_static(Vec2 p) const {
    const double r = config_.agent_radius - 1e-9;
    const double side = map_.domain_side;
    if (p.x < r || p.y < r || p.x > side - r || p.y > side - r) return true;
    for (const Polygon& poly : map_.obstacles) {
      if (point_in_polygon(p, poly) || point_polygon_boundary_distance(p, poly) < r) return true;
    }
    return false;
  }

 private:
  void build_static_segments() {
    const double s = map_.domain_side;
    const Vec2 c[4] = {{0, 0}, {s, 0}, {s, s}, {0, s}};
    for (int i = 0; i < 4; ++i) segments_.push_back({c[i], c[(i + 1) % 4]});
    for (const Polygon& poly : map_.obstacles) {
      for (std::size_t i = 0; i < poly.size(); ++i) segments_.push_back({poly[i], poly[(i + 1) % poly.size()]});
    }
  }

  bool in_free_space(Vec2 p) const { return mesh_.locate(p).has_value() && !hits_static(p); }

  Vec2 random_point(double margin) {
    return {rng_.uniform(margin, scenario_.domain_side - margin), rng_.uniform(margin, scenario_.domain_side - margin)};
  }

  // One (start, goal) draw for the scenario; nullopt if it must be redrawn.
  std::optional<std::pair<Vec2, Vec2>> draw_trip(const AgentState& a) {
    const double s = scenario_.domain_side;
    const double m = 2.0 * config_.agent_radius;
    switch (scenario_.kind) {
      case ScenarioKind::basic: {
        const Vec2 p = random_point(m), q = random_point(m);
        if (distance(p, q) < scenario_.min_trip) return std::nullopt;
        return std::pair{p, q};
      }
      case ScenarioKind::cross_road:
      case ScenarioKind::random_obstacle: {
        const int edge = static_cast<int>(rng_.below(4));
        const double t0 = rng_.uniform(m, s - m);
        const double t1 = rng_.uniform(m, s - m);
        Vec2 p, q;
        switch (edge) {
          case 0: p = {m, t0}; q = {s - m, t1}; break;
          case 1: p = {s - m, t0}; q = {m, t1}; break;
          case 2: p = {t0, m}; q = {t1, s - m}; break;
          default: p = {t0, s - m}; q = {t1, m}; break;
        }
        return std::pair{p, q};
      }
      case ScenarioKind::four_wall: {
        const double u = s / 200.0;
        const Vec2 hi{rng_.uniform(180 * u, s - m), rng_.uniform(180 * u, s - m)};
        const Vec2 lo{rng_.uniform(m, 20 * u), rng_.uniform(m, 20 * u)};
        return (a.slot % 2 == 0) ? std::pair{hi, lo} : std::pair{lo, hi};
      }
      case ScenarioKind::circle_transport: {
        const Vec2 c{0.5 * s, 0.5 * s};
        const double ang = kTwoPi * a.slot / static_cast<double>(agents_.size());
        const Vec2 off = unit_from_angle(ang) * scenario_.circle_radius;
        return std::pair{c + off, c - off};
      }
    }
    return std::nullopt;
  }

  bool spawn(AgentState& a) {
    const bool fixed_layout = scenario_.kind == ScenarioKind::circle_transport;
    const int attempts = fixed_layout ? 1 : 1000;
    for (int i = 0; i < attempts; ++i) {
      auto trip = draw_trip(a);
      if (!trip) continue;
      const auto [p, q] = *trip;
      if (!in_free_space(p) || !mesh_.locate(q)) continue;
      const bool crowded = std::any_of(agents_.begin(), agents_.end(), [&](const AgentState& o) {
        return o.id != a.id && o.status == AgentStatus::running && distance(o.pose.position, p) < config_.safe_distance;
      });
      if (crowded) continue;
      const double heading = rng_.uniform(0.0, kTwoPi);
      try {
        place_agent(a.id, Pose(p, heading), q);
      } catch (const UnreachableError&) {
        a.status = AgentStatus::arrived;
        continue;
      }
      return true;
    }
    return false;
  }

  Waypoints plan_route(Vec2 from, Vec2 goal) const {
    if (mesh_.segment_clear(from, goal)) return Waypoints{{goal}, Channel{}};
    const Channel c = astar_channel_from(mesh_, mesh_.locate_nearest(from), from, goal);
    return channel_waypoints(c, from, goal);
  }

  bool route_valid(const AgentState& a) const {
    if (!a.route || a.route->points.empty()) return false;
    const Channel& c = a.route->source_channel;
    if (c.triangle_indices.empty()) return mesh_.segment_clear(a.pose.position, a.goal);
    return std::any_of(c.triangle_indices.begin(), c.triangle_indices.end(),
                       [&](int t) { return mesh_.contains(t, a.pose.position); });
  }

  void navigate(AgentState& a) const {
    if (!route_valid(a)) a.route = plan_route(a.pose.position, a.goal);
    auto& pts = a.route->points;
    const double pop_radius = 0.5 * config_.speed;
    while (pts.size() > 1 && distance(pts.front(), a.pose.position) <= pop_radius) pts.erase(pts.begin());
    const Vec2 delta = pts.front() - a.pose.position;
    const double dist = delta.norm();
    if (dist > 0.0) {
      const double bearing = std::atan2(delta.y, delta.x);
      bool aligned = true;
      if (config_.rate_limited_navigation) {
        const double err = normalize_angle(bearing - a.pose.heading() + kPi) - kPi;
        const double turn = std::clamp(err, -config_.turn_rate, config_.turn_rate);
        a.pose.rotate(turn);
        aligned = std::abs(err - turn) <= 1e-12;
      } else {
        a.pose.set_heading(bearing);
      }
      if (aligned) a.pose.position += delta * (std::min(config_.speed, dist) / dist);
    }
    if (pts.size() > 1 && distance(pts.front(), a.pose.position) <= pop_radius) pts.erase(pts.begin());
  }

  WorldConfig config_;
  ScenarioSpec scenario_;
  Rng rng_;
  MapSpec map_;
  NavMesh mesh_;
  std::vector<Segment> segments_;
  std::vector<AgentState> agents_;
  long step_ = 0;
};

inline World init_world(WorldConfig config, ScenarioSpec scenario) { return World(std::move(config), scenario); }

}  // namespace swarmnav
