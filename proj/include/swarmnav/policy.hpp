#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "swarmnav/nn.hpp"
#include "swarmnav/sim.hpp"

namespace swarmnav {

// Chooses one action per listed agent. `observations[i]` belongs to `ids[i]`.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::vector<Action> act(const World& world, std::span<const int> ids, std::span<const Observation> observations,
                                  Rng& rng) = 0;
};

inline Matrix observation_matrix(std::span<const Observation> observations, int width) {
  Matrix x(width, static_cast<Eigen::Index>(observations.size()));
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (static_cast<int>(observations[i].encoded.size()) != width) throw ProtocolError("observation width mismatch");
    x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(observations[i].encoded.data(), width);
  }
  return x;
}

// First index of the largest entry.
inline int argmax(const Eigen::Ref<const Vector>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

inline int sample_categorical(const Eigen::Ref<const Vector>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

class FixedActionPolicy final : public Policy {
 public:
  explicit FixedActionPolicy(Action a) : action_(a) {}
  std::vector<Action> act(const World&, std::span<const int> ids, std::span<const Observation>, Rng&) override {
    return std::vector<Action>(ids.size(), action_);
  }

 private:
  Action action_;
};

class UniformRandomPolicy final : public Policy {
 public:
  explicit UniformRandomPolicy(std::vector<Action> choices) : choices_(std::move(choices)) {
    if (choices_.empty()) throw ConfigError("random policy needs at least one action");
  }
  std::vector<Action> act(const World&, std::span<const int> ids, std::span<const Observation>, Rng& rng) override {
    std::vector<Action> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(choices_[rng.below(choices_.size())]);
    return out;
  }

 private:
  std::vector<Action> choices_;
};

class FunctionPolicy final : public Policy {
 public:
  using Fn = std::function<Action(const World&, int, const Observation&, Rng&)>;
  explicit FunctionPolicy(Fn fn) : fn_(std::move(fn)) {}
  std::vector<Action> act(const World& w, std::span<const int> ids, std::span<const Observation> obs, Rng& rng) override {
    std::vector<Action> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(fn_(w, ids[i], obs[i], rng));
    return out;
  }

 private:
  Fn fn_;
};

// Network-backed policy. Greedy selection takes the lowest-index argmax.
class NetworkPolicy final : public Policy {
 public:
  NetworkPolicy(const PolicyParams& params, bool greedy) : params_(params), greedy_(greedy) {}

  std::vector<Action> act(const World& world, std::span<const int> ids, std::span<const Observation> obs,
                          Rng& rng) override {
    check_compatible(world.config());
    if (ids.empty()) return {};
    const ForwardTrace t = forward(params_, observation_matrix(obs, params_.shape.input));
    std::vector<Action> out;
    out.reserve(ids.size());
    for (Eigen::Index c = 0; c < t.probs.cols(); ++c) {
      const int idx = greedy_ ? argmax(t.probs.col(c)) : sample_categorical(t.probs.col(c), rng);
      out.push_back(action_from_index(idx, world.config().baseline_mode));
    }
    return out;
  }

  void check_compatible(const WorldConfig& cfg) const {
    if (params_.shape.input != cfg.observation_width() || params_.shape.actions != cfg.action_count()) {
      throw IncompatibleError("checkpoint expects observation width " + std::to_string(params_.shape.input) + " and " +
                              std::to_string(params_.shape.actions) + " actions; world provides width " +
                              std::to_string(cfg.observation_width()) + " and " + std::to_string(cfg.action_count()) +
                              " actions");
    }
  }

 private:
  const PolicyParams& params_;
  bool greedy_;
};

}  // namespace swarmnav
