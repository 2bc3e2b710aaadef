#pragma once

// PPO with the clipped surrogate objective and generalized advantage
// estimation. Every agent of every world is one rollout stream; all streams
// share one parameter set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "swarmnav/error.hpp"
#include "swarmnav/nn.hpp"
#include "swarmnav/policy.hpp"
#include "swarmnav/rng.hpp"
#include "swarmnav/sim.hpp"

namespace swarmnav {

struct TrainConfig {
  double discount = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.1;
  double learning_rate = 0.0003;
  long max_training_steps = 5'000'000;
  int horizon = 2048;  // transitions per agent stream per update
  int epochs = 3;
  int minibatch = 256;
  double value_loss_weight = 0.5;
  double entropy_weight = 0.0;
  bool normalize_advantages = true;
  int hidden_layers = 4;
  int hidden_units = 256;
  int workers = 1;        // parallel rollout worlds
  long checkpoint_every = 0;  // environment steps; 0 = only first and last
  int reward_window = 10;     // updates in the sliding reward mean
  std::uint64_t seed = 0;

  void validate() const {
    if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("discount must lie in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in [0, 1]");
    if (!(clip > 0.0)) throw ConfigError("clip must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (max_training_steps < 0) throw ConfigError("max_training_steps must be non-negative");
    if (horizon < 1 || epochs < 1 || minibatch < 1 || workers < 1) {
      throw ConfigError("horizon, epochs, minibatch and workers must be positive");
    }
    if (hidden_layers < 1 || hidden_units < 1) throw ConfigError("network depth and width must be positive");
    if (reward_window < 1) throw ConfigError("reward_window must be positive");
  }
};

struct RolloutStream {
  std::vector<double> observations;  // row per transition, `width` values each
  std::vector<int> actions;          // network output index
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<char> dones;
  double bootstrap_value = 0.0;  // V of the state after the last transition (0 if done)
  bool awaiting_bootstrap = false;
  std::vector<double> advantages;
  std::vector<double> targets;

  std::size_t size() const { return actions.size(); }
};

struct RolloutBuffer {
  int width = 0;
  std::vector<RolloutStream> streams;
  long arrivals = 0;
  long collisions = 0;
  long timeouts = 0;

  std::size_t transitions() const {
    std::size_t n = 0;
    for (const auto& s : streams) n += s.size();
    return n;
  }
  double reward_sum() const {
    double r = 0.0;
    for (const auto& s : streams) r = std::accumulate(s.rewards.begin(), s.rewards.end(), r);
    return r;
  }
};

// Runs the sampling policy on one world until each agent stream holds
// `horizon` transitions. The world keeps its state for the next call.
inline RolloutBuffer collect_world(const PolicyParams& params, World& world, int horizon, Rng& rng) {
  const WorldConfig& cfg = world.config();
  if (params.shape.input != cfg.observation_width() || params.shape.actions != cfg.action_count()) {
    throw IncompatibleError("network shape does not match the world's observation/action widths");
  }
  RolloutBuffer buf;
  buf.width = cfg.observation_width();
  buf.streams.resize(world.agents().size());
  auto unfinished = [&] {
    return std::any_of(buf.streams.begin(), buf.streams.end(), [&](const auto& s) { return static_cast<int>(s.size()) < horizon; });
  };
  int idle_steps = 0;
  std::vector<std::optional<Action>> actions(world.agents().size());
  while (unfinished()) {
    const std::vector<int> ids = world.running_agents();
    std::fill(actions.begin(), actions.end(), std::nullopt);
    if (ids.empty()) {
      if (++idle_steps > 10000) throw ProtocolError("no agent could be respawned");
      world.step(actions);
      continue;
    }
    idle_steps = 0;
    std::vector<Observation> obs;
    obs.reserve(ids.size());
    for (int id : ids) obs.push_back(world.observe(id));
    const ForwardTrace t = forward(params, observation_matrix(obs, buf.width));
    std::vector<int> chosen(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      RolloutStream& s = buf.streams[ids[i]];
      if (s.awaiting_bootstrap) {
        s.bootstrap_value = t.values(static_cast<Eigen::Index>(i));
        s.awaiting_bootstrap = false;
      }
      chosen[i] = sample_categorical(t.probs.col(static_cast<Eigen::Index>(i)), rng);
      actions[ids[i]] = action_from_index(chosen[i], cfg.baseline_mode);
    }
    const StepOutcome out = world.step(actions);
    for (std::size_t i = 0; i < out.agents.size(); ++i) {
      const AgentStep& a = out.agents[i];
      const bool done = a.status != AgentStatus::running;
      if (a.status == AgentStatus::arrived) ++buf.arrivals;
      if (a.status == AgentStatus::collided) ++buf.collisions;
      if (a.status == AgentStatus::timed_out) ++buf.timeouts;
      RolloutStream& s = buf.streams[a.agent];
      if (static_cast<int>(s.size()) >= horizon) continue;
      const auto col = static_cast<Eigen::Index>(i);
      s.observations.insert(s.observations.end(), obs[i].encoded.begin(), obs[i].encoded.end());
      s.actions.push_back(chosen[i]);
      s.log_probs.push_back(std::log(t.probs(chosen[i], col)));
      s.values.push_back(t.values(col));
      s.rewards.push_back(a.reward.total);
      s.dones.push_back(done ? 1 : 0);
      if (static_cast<int>(s.size()) == horizon) {
        s.bootstrap_value = 0.0;
        s.awaiting_bootstrap = !done;
      }
    }
  }
  // Streams that filled on the last step still need V(s_next).
  std::vector<int> pending;
  std::vector<Observation> obs;
  for (int id = 0; id < static_cast<int>(buf.streams.size()); ++id) {
    if (buf.streams[id].awaiting_bootstrap) {
      pending.push_back(id);
      obs.push_back(world.observe(id));
    }
  }
  if (!pending.empty()) {
    const ForwardTrace t = forward(params, observation_matrix(obs, buf.width));
    for (std::size_t i = 0; i < pending.size(); ++i) {
      buf.streams[pending[i]].bootstrap_value = t.values(static_cast<Eigen::Index>(i));
      buf.streams[pending[i]].awaiting_bootstrap = false;
    }
  }
  return buf;
}

// Collects from every world, one thread per world when workers > 1. Each
// world samples actions from its own generator, so the result does not
// depend on scheduling.
inline RolloutBuffer collect_rollouts(const PolicyParams& params, std::span<World> worlds, std::span<Rng> rngs,
                                      int horizon, int workers = 1) {
  if (worlds.size() != rngs.size()) throw ProtocolError("one generator per world is required");
  std::vector<RolloutBuffer> parts(worlds.size());
  if (workers <= 1 || worlds.size() <= 1) {
    for (std::size_t w = 0; w < worlds.size(); ++w) parts[w] = collect_world(params, worlds[w], horizon, rngs[w]);
  } else {
    std::vector<std::exception_ptr> errors(worlds.size());
    for (std::size_t begin = 0; begin < worlds.size(); begin += static_cast<std::size_t>(workers)) {
      std::vector<std::thread> pool;
      for (std::size_t w = begin; w < std::min(worlds.size(), begin + workers); ++w) {
        pool.emplace_back([&, w] {
          try {
            parts[w] = collect_world(params, worlds[w], horizon, rngs[w]);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  RolloutBuffer all;
  all.width = worlds.empty() ? 0 : worlds[0].config().observation_width();
  for (auto& p : parts) {
    for (auto& s : p.streams) all.streams.push_back(std::move(s));
    all.arrivals += p.arrivals;
    all.collisions += p.collisions;
    all.timeouts += p.timeouts;
  }
  return all;
}

struct AdvantageResult {
  std::vector<double> advantages;
  std::vector<double> targets;
};

// Backward GAE recursion. dones[t] marks s_{t+1} terminal, which zeroes
// V(s_{t+1}) and cuts the accumulation.
inline AdvantageResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const char> dones, double bootstrap_value, double discount, double lambda) {
  if (rewards.size() != values.size() || rewards.size() != dones.size()) {
    throw ProtocolError("reward, value and done sequences differ in length");
  }
  const std::size_t n = rewards.size();
  AdvantageResult r;
  r.advantages.resize(n);
  r.targets.resize(n);
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + discount * next_value * live - values[i];
    const double adv = delta + discount * lambda * live * next_adv;
    r.advantages[i] = adv;
    r.targets[i] = adv + values[i];
    next_value = values[i];
    next_adv = adv;
  }
  return r;
}

inline void compute_gae(RolloutBuffer& buf, double discount, double lambda) {
  for (auto& s : buf.streams) {
    auto r = compute_gae(s.rewards, s.values, s.dones, s.bootstrap_value, discount, lambda);
    s.advantages = std::move(r.advantages);
    s.targets = std::move(r.targets);
  }
}

struct PpoBatch {
  Matrix observations;  // width x B
  std::vector<int> actions;
  Vector old_log_probs;
  Vector advantages;
  Vector targets;
};

struct PpoLoss {
  double total = 0.0;
  double surrogate = 0.0;  // mean clipped surrogate (maximized)
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  Gradients grads;
};

// total = -surrogate + c_v * value_loss - c_e * entropy, with gradients.
inline PpoLoss ppo_loss(const PolicyParams& params, const PpoBatch& batch, const TrainConfig& cfg) {
  const ForwardTrace t = forward(params, batch.observations);
  const Eigen::Index n = batch.observations.cols();
  const double inv = 1.0 / static_cast<double>(n);
  Matrix d_logits = Matrix::Zero(params.shape.actions, n);
  RowVector d_values(n);
  PpoLoss out;
  long clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = batch.actions[static_cast<std::size_t>(i)];
    const double logp = std::log(t.probs(a, i));
    const double ratio = std::exp(logp - batch.old_log_probs(i));
    const double adv = batch.advantages(i);
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    out.surrogate += std::min(ratio * adv, clipped_ratio * adv);
    if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
    // Gradient flows only through the unclipped branch when it is the minimum.
    const bool active = adv >= 0.0 ? ratio <= 1.0 + cfg.clip : ratio >= 1.0 - cfg.clip;
    if (active) {
      const double coef = -inv * adv * ratio;
      d_logits.col(i) -= coef * t.probs.col(i);
      d_logits(a, i) += coef;
    }
    const double err = t.values(i) - batch.targets(i);
    out.value_loss += err * err;
    d_values(i) = cfg.value_loss_weight * 2.0 * err * inv;

    double h = 0.0;
    for (Eigen::Index k = 0; k < t.probs.rows(); ++k) h -= t.probs(k, i) * std::log(t.probs(k, i));
    out.entropy += h;
    if (cfg.entropy_weight != 0.0) {
      for (Eigen::Index k = 0; k < t.probs.rows(); ++k) {
        const double p = t.probs(k, i);
        d_logits(k, i) += cfg.entropy_weight * inv * p * (std::log(p) + h);
      }
    }
  }
  out.surrogate *= inv;
  out.value_loss *= inv;
  out.entropy *= inv;
  out.clip_fraction = static_cast<double>(clipped) * inv;
  out.total = -out.surrogate + cfg.value_loss_weight * out.value_loss - cfg.entropy_weight * out.entropy;
  if (!std::isfinite(out.total)) {
    throw NumericError("non-finite PPO loss (surrogate " + std::to_string(out.surrogate) + ", value loss " +
                       std::to_string(out.value_loss) + ")");
  }
  out.grads = backward(params, t, d_logits, d_values);
  return out;
}

// Linear decay from the initial rate to 0 at max_training_steps.
inline double lr_schedule(long step, const TrainConfig& cfg) {
  if (cfg.max_training_steps <= 0) return cfg.learning_rate;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(cfg.max_training_steps), 0.0, 1.0);
  return cfg.learning_rate * (1.0 - frac);
}

struct UpdateReport {
  long update = 0;
  long env_steps = 0;  // cumulative agent transitions
  double learning_rate = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double first_clip_fraction = 0.0;  // first minibatch of the update
  double first_surrogate = 0.0;
  double mean_advantage = 0.0;  // before normalization
  double mean_reward = 0.0;     // per transition, this batch
  double window_reward = 0.0;   // per transition, sliding window of updates
  long arrivals = 0;
  long collisions = 0;
  long timeouts = 0;
};

inline PpoBatch flatten(const RolloutBuffer& buf) {
  const std::size_t n = buf.transitions();
  PpoBatch b;
  b.observations.resize(buf.width, static_cast<Eigen::Index>(n));
  b.actions.reserve(n);
  b.old_log_probs.resize(static_cast<Eigen::Index>(n));
  b.advantages.resize(static_cast<Eigen::Index>(n));
  b.targets.resize(static_cast<Eigen::Index>(n));
  Eigen::Index c = 0;
  for (const auto& s : buf.streams) {
    if (s.advantages.size() != s.size()) throw ProtocolError("advantages not computed for rollout stream");
    for (std::size_t i = 0; i < s.size(); ++i, ++c) {
      b.observations.col(c) = Eigen::Map<const Vector>(s.observations.data() + i * buf.width, buf.width);
      b.actions.push_back(s.actions[i]);
      b.old_log_probs(c) = s.log_probs[i];
      b.advantages(c) = s.advantages[i];
      b.targets(c) = s.targets[i];
    }
  }
  return b;
}

// Zero mean, unit variance. A batch with (near) constant advantages is only centered.
inline void normalize_advantages(Vector& adv) {
  if (adv.size() < 2) return;
  const double mean = adv.mean();
  adv.array() -= mean;
  const double sd = std::sqrt(adv.array().square().mean());
  if (sd > 1e-12) adv /= sd;
}

inline PpoBatch select(const PpoBatch& all, std::span<const std::size_t> idx) {
  PpoBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.observations.resize(all.observations.rows(), n);
  b.old_log_probs.resize(n);
  b.advantages.resize(n);
  b.targets.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]);
    b.observations.col(i) = all.observations.col(j);
    b.actions.push_back(all.actions[static_cast<std::size_t>(j)]);
    b.old_log_probs(i) = all.old_log_probs(j);
    b.advantages(i) = all.advantages(j);
    b.targets(i) = all.targets(j);
  }
  return b;
}

// One PPO update over a complete buffer whose advantages are computed.
inline UpdateReport ppo_update(PolicyParams& params, AdamState& adam, const RolloutBuffer& buf, const TrainConfig& cfg,
                               double learning_rate, Rng& rng) {
  PpoBatch all = flatten(buf);
  const std::size_t n = all.actions.size();
  UpdateReport rep;
  rep.learning_rate = learning_rate;
  if (n == 0) return rep;
  rep.mean_advantage = all.advantages.mean();
  if (cfg.normalize_advantages) normalize_advantages(all.advantages);

  std::vector<std::size_t> order(n);
  long batches = 0;
  bool first = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);  // Fisher-Yates
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.minibatch));
      const PpoBatch mb = select(all, std::span<const std::size_t>(order).subspan(begin, end - begin));
      const PpoLoss loss = ppo_loss(params, mb, cfg);
      if (first) {
        rep.first_clip_fraction = loss.clip_fraction;
        rep.first_surrogate = loss.surrogate;
        first = false;
      }
      rep.surrogate += loss.surrogate;
      rep.value_loss += loss.value_loss;
      rep.clip_fraction += loss.clip_fraction;
      ++batches;
      adam_step(params, loss.grads, adam, learning_rate);
    }
  }
  rep.surrogate /= static_cast<double>(batches);
  rep.value_loss /= static_cast<double>(batches);
  rep.clip_fraction /= static_cast<double>(batches);
  if (!params.all_finite()) throw NumericError("non-finite parameters after update");
  return rep;
}

struct TrainState {
  PolicyParams params;
  AdamState adam;
  long env_steps = 0;
  long updates = 0;
};

struct TrainHooks {
  std::function<void(const UpdateReport&)> on_update;
  std::function<void(const TrainState&)> on_checkpoint;
};

inline NetShape network_shape(const WorldConfig& world, const TrainConfig& cfg) {
  return {world.observation_width(), cfg.hidden_layers, cfg.hidden_units, world.action_count()};
}

inline TrainState initial_train_state(const WorldConfig& world, const TrainConfig& cfg) {
  TrainState s;
  s.params = init_params(network_shape(world, cfg), mix_seed(cfg.seed, 400));
  s.adam = AdamState::for_params(s.params);
  return s;
}

// Alternates rollout collection, GAE and PPO updates until the step budget
// is spent. `state` may come from a checkpoint to resume.
inline TrainState train(const TrainConfig& cfg, const WorldConfig& world_cfg, const ScenarioSpec& scenario,
                        std::optional<TrainState> resume = std::nullopt, const TrainHooks& hooks = {}) {
  cfg.validate();
  TrainState state = resume ? std::move(*resume) : initial_train_state(world_cfg, cfg);
  if (state.params.shape != network_shape(world_cfg, cfg)) throw IncompatibleError("resumed network shape mismatch");
  if (!resume && hooks.on_checkpoint) hooks.on_checkpoint(state);

  std::vector<World> worlds;
  std::vector<Rng> rngs;
  for (int w = 0; w < cfg.workers; ++w) {
    WorldConfig wc = world_cfg;
    wc.seed = mix_seed(world_cfg.seed, 100 + static_cast<std::uint64_t>(w) + 1000 * static_cast<std::uint64_t>(state.env_steps));
    worlds.emplace_back(wc, scenario);
    rngs.emplace_back(mix_seed(cfg.seed, 200 + static_cast<std::uint64_t>(w) + 1000 * static_cast<std::uint64_t>(state.env_steps)));
  }
  Rng shuffle_rng(mix_seed(cfg.seed, 300 + static_cast<std::uint64_t>(state.env_steps)));

  std::size_t streams = 0;
  for (const auto& w : worlds) streams += w.agents().size();
  std::deque<std::pair<double, double>> window;  // (reward sum, transitions)
  long last_checkpoint = state.env_steps;

  while (state.env_steps < cfg.max_training_steps) {
    const long remaining = cfg.max_training_steps - state.env_steps;
    const long per_stream = std::min<long>(cfg.horizon, remaining / static_cast<long>(streams));
    if (per_stream < 1) break;
    const double lr = lr_schedule(state.env_steps, cfg);
    RolloutBuffer buf = collect_rollouts(state.params, worlds, rngs, static_cast<int>(per_stream), cfg.workers);
    compute_gae(buf, cfg.discount, cfg.gae_lambda);
    UpdateReport rep = ppo_update(state.params, state.adam, buf, cfg, lr, shuffle_rng);
    state.env_steps += static_cast<long>(buf.transitions());
    rep.update = ++state.updates;
    rep.env_steps = state.env_steps;
    const double rsum = buf.reward_sum();
    const auto count = static_cast<double>(buf.transitions());
    rep.mean_reward = rsum / count;
    window.emplace_back(rsum, count);
    if (static_cast<int>(window.size()) > cfg.reward_window) window.pop_front();
    double ws = 0.0, wc = 0.0;
    for (const auto& [s, c] : window) {
      ws += s;
      wc += c;
    }
    rep.window_reward = ws / wc;
    rep.arrivals = buf.arrivals;
    rep.collisions = buf.collisions;
    rep.timeouts = buf.timeouts;
    if (hooks.on_update) hooks.on_update(rep);
    const bool last = state.env_steps >= cfg.max_training_steps ||
                      std::min<long>(cfg.horizon, (cfg.max_training_steps - state.env_steps) / static_cast<long>(streams)) < 1;
    if (hooks.on_checkpoint &&
        (last || (cfg.checkpoint_every > 0 && state.env_steps - last_checkpoint >= cfg.checkpoint_every))) {
      hooks.on_checkpoint(state);
      last_checkpoint = state.env_steps;
    }
  }
  return state;
}

}  // namespace swarmnav
