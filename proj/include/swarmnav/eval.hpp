#pragma once

// Trial-based evaluation: success, collision and timeout rates, extra
// distance proportion, and the crowdedness histogram.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "swarmnav/error.hpp"
#include "swarmnav/policy.hpp"
#include "swarmnav/sim.hpp"

namespace swarmnav {

enum class TrialOutcome : std::uint8_t { success, accident, timeout };

inline std::string_view outcome_name(TrialOutcome o) {
  switch (o) {
    case TrialOutcome::success: return "success";
    case TrialOutcome::accident: return "accident";
    case TrialOutcome::timeout: return "timeout";
  }
  return "?";
}

inline double compute_edp(double d, double l) {
  if (!(l > 0.0) || !std::isfinite(l)) throw UndefinedBaselineError("baseline length must be positive, got " + std::to_string(l));
  if (!(d >= 0.0) || !std::isfinite(d)) throw ProtocolError("travelled distance must be non-negative, got " + std::to_string(d));
  return (d - l) / l;
}

struct TrialRecord {
  int agent = 0;
  TrialOutcome outcome = TrialOutcome::success;
  double distance = 0.0;
  double baseline = 0.0;
  std::optional<double> edp;  // successes only
  long steps = 0;
};

inline TrialRecord record_from(const TrialEnd& t) {
  TrialRecord r;
  r.agent = t.agent;
  r.distance = t.distance;
  r.baseline = t.baseline_length;
  r.steps = t.steps;
  switch (t.outcome) {
    case AgentStatus::arrived: r.outcome = TrialOutcome::success; break;
    case AgentStatus::collided: r.outcome = TrialOutcome::accident; break;
    default: r.outcome = TrialOutcome::timeout; break;
  }
  if (r.outcome == TrialOutcome::success && r.baseline > 0.0) r.edp = compute_edp(r.distance, r.baseline);
  return r;
}

// counts[k] = number of samples with k perceptible partners.
struct CrowdHistogram {
  std::vector<long> counts;
  long samples = 0;
  long cap = 100000;

  bool full() const { return samples >= cap; }
  bool add(int partners) {
    if (full()) return false;
    if (partners >= static_cast<int>(counts.size())) counts.resize(partners + 1, 0);
    ++counts[partners];
    ++samples;
    return true;
  }
};

struct EvalReport {
  long trials = 0;
  long successes = 0;
  long collisions = 0;
  long timeouts = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  std::optional<double> edp_mean;
  std::optional<double> edp_std;
  CrowdHistogram crowdedness;
  long steps = 0;
  double wall_seconds = 0.0;
  std::string note;
  std::vector<TrialRecord> records;
};

// Aggregates closed trials into rates and EDP statistics.
inline void summarize(EvalReport& rep) {
  rep.trials = static_cast<long>(rep.records.size());
  rep.successes = rep.collisions = rep.timeouts = 0;
  std::vector<double> edps;
  for (const TrialRecord& r : rep.records) {
    switch (r.outcome) {
      case TrialOutcome::success: ++rep.successes; break;
      case TrialOutcome::accident: ++rep.collisions; break;
      case TrialOutcome::timeout: ++rep.timeouts; break;
    }
    if (r.edp) edps.push_back(*r.edp);
  }
  if (rep.trials > 0) {
    const auto n = static_cast<double>(rep.trials);
    rep.success_rate = static_cast<double>(rep.successes) / n;
    rep.collision_rate = static_cast<double>(rep.collisions) / n;
    rep.timeout_rate = static_cast<double>(rep.timeouts) / n;
  }
  rep.edp_mean.reset();
  rep.edp_std.reset();
  if (!edps.empty()) {
    double mean = 0.0;
    for (double e : edps) mean += e;
    mean /= static_cast<double>(edps.size());
    double var = 0.0;
    for (double e : edps) var += (e - mean) * (e - mean);
    rep.edp_mean = mean;
    rep.edp_std = std::sqrt(var / static_cast<double>(edps.size()));
  }
}

struct EvalOptions {
  long crowd_cap = 100000;
  // Called after every world step, e.g. to write a trajectory log.
  std::function<void(const World&, const StepOutcome&)> on_step;
};

// Steps a fresh world under `policy` until `trial_target` trials close.
// Trials closing in the same step beyond the target are dropped.
inline EvalReport run_trials(Policy& policy, const WorldConfig& config, const ScenarioSpec& scenario, long trial_target,
                             const EvalOptions& options = {}) {
  if (trial_target < 0) throw ConfigError("trial count must be non-negative");
  const auto t0 = std::chrono::steady_clock::now();
  World world(config, scenario);
  EvalReport rep;
  rep.crowdedness.cap = options.crowd_cap;
  if (!world.map().obstacles.empty()) {
    rep.note = "baseline length is the portal-midpoint estimate; EDP can be slightly negative on obstacle maps";
  }
  Rng rng(mix_seed(world.config().seed, 0x6576616c));
  std::vector<std::optional<Action>> actions(world.agents().size());
  int idle = 0;
  while (static_cast<long>(rep.records.size()) < trial_target) {
    const std::vector<int> ids = world.running_agents();
    std::fill(actions.begin(), actions.end(), std::nullopt);
    if (ids.empty()) {
      if (++idle > 10000) throw ProtocolError("no agent could be respawned");
    } else {
      idle = 0;
      std::vector<Observation> obs;
      obs.reserve(ids.size());
      for (int id : ids) {
        obs.push_back(world.observe(id));
        rep.crowdedness.add(World::crowdedness_of(obs.back()));
      }
      const std::vector<Action> chosen = policy.act(world, ids, obs, rng);
      if (chosen.size() != ids.size()) throw ProtocolError("policy returned the wrong number of actions");
      for (std::size_t i = 0; i < ids.size(); ++i) actions[ids[i]] = chosen[i];
    }
    const StepOutcome out = world.step(actions);
    ++rep.steps;
    if (options.on_step) options.on_step(world, out);
    for (const TrialEnd& t : out.trials) {
      if (static_cast<long>(rep.records.size()) < trial_target) rep.records.push_back(record_from(t));
    }
  }
  summarize(rep);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Methods as rows, the three metrics as columns.
inline std::string compare_report(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  if (reports.size() < 2) throw ProtocolError("comparison needs at least two reports");
  std::ostringstream os;
  os << "| Method | Trials | Success Rate | EDP | Collision Rate |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& [name, r] : reports) {
    os << "| " << name << " | " << r.trials << " | " << format_fixed(r.success_rate, 3) << " | ";
    if (r.edp_mean) {
      os << format_fixed(*r.edp_mean, 3) << " ± " << format_fixed(*r.edp_std, 3);
    } else {
      os << "-";
    }
    os << " | " << format_fixed(r.collision_rate, 3) << " |\n";
  }
  return os.str();
}

}  // namespace swarmnav
