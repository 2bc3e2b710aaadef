#include <CLI11.hpp>

#include <iostream>

#include "swarmnav/cli.hpp"

namespace {

template <class T>
void set_if(std::optional<T>& dst, const CLI::Option* opt, const T& value) {
  if (opt->count() > 0) dst = value;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace swarmnav;
  CLI::App app{"swarmnav: navmesh planning plus PPO collision avoidance"};
  app.require_subcommand(1);
  int code = kExitOk;

  // train
  TrainArgs train_args;
  std::uint64_t train_seed = 0;
  int train_workers = 1;
  std::string train_output;
  long train_steps = 0;
  auto* train_cmd = app.add_subcommand("train", "train a policy from a run config");
  train_cmd->add_option("config", train_args.config, "run config file")->required()->check(CLI::ExistingFile);
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "overrides SWARMNAV_SEED and the config seed");
  auto* train_workers_opt = train_cmd->add_option("--workers", train_workers, "parallel rollout worlds");
  auto* train_output_opt = train_cmd->add_option("--output", train_output, "run directory");
  auto* train_steps_opt = train_cmd->add_option("--max-steps", train_steps, "environment step budget");
  train_cmd->add_flag("--resume", train_args.resume, "continue from the latest checkpoint in the run directory");
  train_cmd->add_flag("--quiet", train_args.quiet, "no per-update progress");

  // evaluate
  EvaluateArgs eval_args;
  std::string eval_checkpoint, eval_config, eval_scenario, eval_trajectory;
  double eval_side = 0.0;
  int eval_agents = 0;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "run evaluation trials and write a report");
  auto* eval_ckpt_opt = eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file");
  auto* eval_config_opt = eval_cmd->add_option("--config", eval_config, "run config with world parameters");
  auto* eval_scenario_opt = eval_cmd->add_option("--scenario", eval_scenario, "scenario preset name");
  auto* eval_side_opt = eval_cmd->add_option("--domain-side", eval_side, "domain side length for the preset");
  auto* eval_agents_opt = eval_cmd->add_option("--agents", eval_agents, "agent count");
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "overrides SWARMNAV_SEED and the config seed");
  auto* eval_traj_opt = eval_cmd->add_option("--trajectory", eval_trajectory, "write a replayable trajectory log");
  eval_cmd->add_option("--trials", eval_args.trials, "closed trials to collect");
  eval_cmd->add_option("--output", eval_args.output, "report directory");
  eval_cmd->add_option("--policy", eval_args.policy, "network, navigate or random")
      ->check(CLI::IsMember({"network", "navigate", "random"}));
  eval_cmd->add_option("--label", eval_args.label, "method name in the report");
  eval_cmd->add_flag("--baseline", eval_args.baseline, "pure-RL action space and observation");
  eval_cmd->add_flag("--stochastic", eval_args.stochastic, "sample actions instead of argmax");

  // replay
  std::string replay_log;
  auto* replay_cmd = app.add_subcommand("replay", "re-simulate a trajectory log and verify it");
  replay_cmd->add_option("log", replay_log, "trajectory log")->required();

  // navmesh
  NavmeshArgs mesh_args;
  std::string mesh_map, mesh_scenario, mesh_from, mesh_to;
  double mesh_side = 0.0;
  std::uint64_t mesh_seed = 0;
  auto* mesh_cmd = app.add_subcommand("navmesh", "build and print a navigation mesh");
  auto* mesh_map_opt = mesh_cmd->add_option("map", mesh_map, "map file");
  auto* mesh_scenario_opt = mesh_cmd->add_option("--scenario", mesh_scenario, "use a scenario preset map instead");
  auto* mesh_side_opt = mesh_cmd->add_option("--domain-side", mesh_side, "domain side length for the preset");
  auto* mesh_seed_opt = mesh_cmd->add_option("--seed", mesh_seed, "seed for generated maps");
  mesh_cmd->add_option("--margin", mesh_args.margin, "obstacle inflation radius");
  auto* mesh_from_opt = mesh_cmd->add_option("--from", mesh_from, "channel query start x,y");
  auto* mesh_to_opt = mesh_cmd->add_option("--to", mesh_to, "channel query goal x,y");
  mesh_map_opt->excludes(mesh_scenario_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (*train_cmd) {
    set_if(train_args.seed, train_seed_opt, train_seed);
    set_if(train_args.workers, train_workers_opt, train_workers);
    set_if(train_args.output, train_output_opt, train_output);
    set_if(train_args.max_steps, train_steps_opt, train_steps);
    code = cmd_train(train_args, std::cout, std::cerr);
  } else if (*eval_cmd) {
    if (eval_ckpt_opt->count()) eval_args.checkpoint = eval_checkpoint;
    if (eval_config_opt->count()) eval_args.config = eval_config;
    if (eval_traj_opt->count()) eval_args.trajectory = eval_trajectory;
    set_if(eval_args.scenario, eval_scenario_opt, eval_scenario);
    set_if(eval_args.domain_side, eval_side_opt, eval_side);
    set_if(eval_args.agents, eval_agents_opt, eval_agents);
    set_if(eval_args.seed, eval_seed_opt, eval_seed);
    code = cmd_evaluate(eval_args, std::cout, std::cerr);
  } else if (*replay_cmd) {
    code = cmd_replay(replay_log, std::cout, std::cerr);
  } else if (*mesh_cmd) {
    if (mesh_map_opt->count()) mesh_args.map = mesh_map;
    set_if(mesh_args.scenario, mesh_scenario_opt, mesh_scenario);
    set_if(mesh_args.domain_side, mesh_side_opt, mesh_side);
    set_if(mesh_args.seed, mesh_seed_opt, mesh_seed);
    code = guarded([&] {
      if (mesh_from_opt->count()) mesh_args.from = parse_point(mesh_from);
      if (mesh_to_opt->count()) mesh_args.to = parse_point(mesh_to);
      return cmd_navmesh(mesh_args, std::cout, std::cerr);
    }, std::cerr);
  }
  return code;
}
