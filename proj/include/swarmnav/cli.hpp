#pragma once

// Subcommand implementations behind the swarmnav binary. Each returns a
// process exit code: 0 success, 2 configuration error, 3 incompatibility,
// 4 numeric failure, 1 anything else (including replay divergence).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "swarmnav/eval.hpp"
#include "swarmnav/io.hpp"
#include "swarmnav/policy.hpp"
#include "swarmnav/ppo.hpp"

namespace swarmnav {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIncompatible = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr const char* kSeedEnv = "SWARMNAV_SEED";

inline int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const IncompatibleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIncompatible;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

// --seed flag, then SWARMNAV_SEED, then the config value.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kSeedEnv); env != nullptr && *env != '\0') {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || errno != 0 || env[0] == '-') {
      throw ConfigError(std::string(kSeedEnv) + " must be a non-negative integer, got '" + env + "'");
    }
    return v;
  }
  return config_seed;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> output;
  std::optional<long> max_steps;
  bool resume = false;
  bool quiet = false;
};

inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  std::optional<std::filesystem::path> best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) == 0 && e.path().extension() == ".bin" && (!best || name > best->filename().string())) {
      best = e.path();
    }
  }
  return best;
}

inline int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    const std::string verbatim = read_file(args.config);
    RunConfig rc = parse_run_config(verbatim, args.config.parent_path());
    rc.apply_seed(resolve_seed(args.seed, rc.seed));
    if (args.workers) rc.train.workers = *args.workers;
    if (args.output) rc.output_dir = *args.output;
    if (args.max_steps) rc.train.max_training_steps = *args.max_steps;
    rc.train.validate();
    const std::uint64_t hash = config_hash(rc);

    const std::filesystem::path dir(rc.output_dir);
    const auto ckpt_dir = dir / "checkpoints";
    const auto telemetry_path = dir / "telemetry.csv";
    std::optional<TrainState> resume;
    if (args.resume) {
      const auto latest = latest_checkpoint(ckpt_dir);
      if (!latest) throw ConfigError("--resume: no checkpoint in " + ckpt_dir.string());
      Checkpoint ck = load_checkpoint(*latest);
      if (ck.config_hash != hash) {
        throw IncompatibleError("--resume: checkpoint config " + hex64(ck.config_hash) + " differs from run config " + hex64(hash));
      }
      TrainState st;
      st.params = std::move(ck.params);
      st.adam = ck.adam ? std::move(*ck.adam) : AdamState::for_params(st.params);
      st.env_steps = ck.env_steps;
      st.updates = ck.updates;
      resume = std::move(st);
      out << "resuming from " << latest->string() << " at step " << ck.env_steps << "\n";
    } else if (std::filesystem::exists(telemetry_path)) {
      throw ConfigError("run directory " + dir.string() + " already holds a run; pass --resume or choose another output");
    }

    std::filesystem::create_directories(ckpt_dir);
    write_file(dir / "run.cfg", verbatim);
    write_file(dir / "resolved.cfg", write_run_config(rc));
    if (rc.world.map) write_file(dir / "map.txt", write_map(*rc.world.map));
    if (!resume) write_file(telemetry_path, telemetry_header(hash));
    std::ofstream telemetry(telemetry_path, std::ios::app | std::ios::binary);

    std::string last_checkpoint;
    TrainHooks hooks;
    hooks.on_update = [&](const UpdateReport& r) {
      telemetry << telemetry_row(r);
      telemetry.flush();
      if (!args.quiet) {
        out << "update " << r.update << " steps " << r.env_steps << " window_reward " << fmt_real(r.window_reward)
            << " arrivals " << r.arrivals << " collisions " << r.collisions << "\n";
      }
    };
    hooks.on_checkpoint = [&](const TrainState& s) {
      Checkpoint ck{hash, s.env_steps, s.updates, s.params, s.adam};
      last_checkpoint = checkpoint_name(s.env_steps);
      write_file(ckpt_dir / last_checkpoint, write_checkpoint(ck));
    };
    const TrainState final_state = train(rc.train, rc.world, rc.scenario, std::move(resume), hooks);

    std::ostringstream summary;
    summary << "config_hash " << hex64(hash) << "\n";
    summary << "env_steps " << final_state.env_steps << "\n";
    summary << "updates " << final_state.updates << "\n";
    summary << "parameters " << final_state.params.parameter_count() << "\n";
    summary << "last_checkpoint " << last_checkpoint << "\n";
    write_file(dir / "summary.txt", summary.str());
    out << "trained " << final_state.env_steps << " steps in " << final_state.updates << " updates; run directory "
        << dir.string() << "\n";
    return kExitOk;
  }, err);
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> config;
  std::optional<std::string> scenario;
  std::optional<double> domain_side;
  std::optional<int> agents;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> trajectory;
  std::filesystem::path output = "eval";
  std::string policy = "network";  // network | navigate | random
  std::string label;
  long trials = 20000;
  bool baseline = false;
  bool stochastic = false;
};

inline RunConfig evaluation_config(const EvaluateArgs& args) {
  RunConfig rc;
  if (args.config) rc = load_run_config(*args.config);
  if (args.scenario || args.domain_side) {
    const ScenarioKind kind = args.scenario ? scenario_kind_from_name(*args.scenario) : rc.scenario.kind;
    rc.scenario = ScenarioSpec::preset(kind, args.domain_side.value_or(rc.scenario.domain_side));
    if (rc.scenario.agents > 0) rc.world.agent_count = rc.scenario.agents;
  }
  if (args.agents) {
    if (*args.agents < 1) throw ConfigError("--agents must be at least 1");
    rc.world.agent_count = *args.agents;
    rc.scenario.agents = *args.agents;
  }
  if (args.baseline) rc.world.baseline_mode = true;
  rc.apply_seed(resolve_seed(args.seed, rc.seed));
  rc.world.validate(rc.world.map ? rc.world.map->domain_side : rc.scenario.domain_side);
  return rc;
}

inline int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    if (args.trials < 0) throw ConfigError("--trials must be non-negative");
    const RunConfig rc = evaluation_config(args);
    const std::uint64_t hash = config_hash(rc);

    std::optional<Checkpoint> ck;
    std::unique_ptr<Policy> policy;
    if (args.policy == "network") {
      if (!args.checkpoint) throw ConfigError("--checkpoint is required for the network policy");
      ck = load_checkpoint(*args.checkpoint);
      auto net = std::make_unique<NetworkPolicy>(ck->params, !args.stochastic);
      net->check_compatible(rc.world);
      policy = std::move(net);
    } else if (args.policy == "navigate") {
      if (rc.world.baseline_mode) throw ConfigError("the navigate policy is not available in baseline mode");
      policy = std::make_unique<FixedActionPolicy>(Action::navigate);
    } else if (args.policy == "random") {
      std::vector<Action> choices;
      for (int i = rc.world.baseline_mode ? 1 : 0; i < kActionCount; ++i) choices.push_back(static_cast<Action>(i));
      policy = std::make_unique<UniformRandomPolicy>(choices);
    } else {
      throw ConfigError("unknown policy '" + args.policy + "' (expected network, navigate or random)");
    }

    // Trajectory goes to a side file and is renamed only on success.
    std::optional<std::ofstream> traj;
    std::filesystem::path traj_part;
    EvalOptions opts;
    if (args.trajectory) {
      traj_part = args.trajectory->string() + ".part";
      if (args.trajectory->has_parent_path()) std::filesystem::create_directories(args.trajectory->parent_path());
      traj.emplace(traj_part, std::ios::binary);
      if (!*traj) throw ConfigError("cannot write " + traj_part.string());
      *traj << trajectory_prologue(rc);
      opts.on_step = [&](const World&, const StepOutcome& o) {
        for (const AgentStep& a : o.agents) *traj << format_record(trajectory_record(o.step, a)) << "\n";
      };
    }
    EvalReport rep;
    try {
      rep = run_trials(*policy, rc.world, rc.scenario, args.trials, opts);
    } catch (...) {
      if (traj) {
        traj->close();
        std::filesystem::remove(traj_part);
      }
      throw;
    }
    if (traj) {
      traj->close();
      std::filesystem::rename(traj_part, *args.trajectory);
    }

    const std::string label = args.label.empty() ? args.policy + (rc.world.baseline_mode ? "-baseline" : "") : args.label;
    std::filesystem::create_directories(args.output);
    write_file(args.output / "report.json", report_json(rep, hash, label).dump(2) + "\n");
    write_file(args.output / "trials.csv", trials_csv(rep, hash));
    write_file(args.output / "crowdedness.csv", crowdedness_csv(rep, hash));
    out << "scenario " << scenario_name(rc.scenario.kind) << ", " << rc.world.agent_count << " agents"
        << (rc.scenario.agents > 0 ? " (scenario fixes " + std::to_string(rc.scenario.agents) + ")" : "") << "\n";
    out << "trials " << rep.trials << " success_rate " << format_fixed(rep.success_rate, 4) << " collision_rate "
        << format_fixed(rep.collision_rate, 4) << " timeout_rate " << format_fixed(rep.timeout_rate, 4) << " edp_mean "
        << (rep.edp_mean ? format_fixed(*rep.edp_mean, 4) : std::string("absent")) << "\n";
    return kExitOk;
  }, err);
}

// ---------------------------------------------------------------- replay

inline int cmd_replay(const std::filesystem::path& log_path, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    const TrajectoryLog log = parse_trajectory(read_file(log_path));
    const ReplayResult r = replay_trajectory(log);
    if (r.divergence_step) {
      out << "divergence at step " << *r.divergence_step << ": " << r.detail << "\n";
      return kExitFailure;
    }
    out << "verified, 0 divergences (" << r.steps_checked << " steps, " << r.records_checked << " records)\n";
    return kExitOk;
  }, err);
}

// ---------------------------------------------------------------- navmesh

struct NavmeshArgs {
  std::optional<std::filesystem::path> map;
  std::optional<std::string> scenario;
  std::optional<double> domain_side;
  std::optional<std::uint64_t> seed;
  double margin = 0.0;
  std::optional<Vec2> from;
  std::optional<Vec2> to;
};

inline Vec2 parse_point(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("expected a point as x,y, got '" + text + "'");
  char* end = nullptr;
  const std::string xs = text.substr(0, comma), ys = text.substr(comma + 1);
  const double x = std::strtod(xs.c_str(), &end);
  if (xs.empty() || *end != '\0') throw ConfigError("bad x coordinate in '" + text + "'");
  const double y = std::strtod(ys.c_str(), &end);
  if (ys.empty() || *end != '\0') throw ConfigError("bad y coordinate in '" + text + "'");
  return {x, y};
}

inline int cmd_navmesh(const NavmeshArgs& args, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    MapSpec map;
    if (args.map) {
      map = load_map(*args.map);
    } else {
      const ScenarioKind kind = scenario_kind_from_name(args.scenario.value_or("basic"));
      const ScenarioSpec s = ScenarioSpec::preset(kind, args.domain_side.value_or(200.0));
      map = scenario_map(s, 1.0, resolve_seed(args.seed, 0));
    }
    if (args.from.has_value() != args.to.has_value()) throw ConfigError("--from and --to must be given together");
    const NavMesh mesh = build_navmesh(map, args.margin);
    out << dump_navmesh(mesh);
    if (args.from) {
      const Channel c = astar_channel(mesh, *args.from, *args.to);
      out << dump_channel(c, channel_waypoints(c, *args.from, *args.to));
    }
    return kExitOk;
  }, err);
}

}  // namespace swarmnav
