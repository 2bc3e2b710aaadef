#pragma once

// Fully-connected policy/value network: K rectified hidden layers of equal
// width feeding two linear heads (action logits, state value). Samples are
// stored as columns, so a batch of B observations is an (input x B) matrix.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "swarmnav/error.hpp"
#include "swarmnav/rng.hpp"

namespace swarmnav {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct NetShape {
  int input = 90;
  int hidden_layers = 4;
  int hidden_units = 256;
  int actions = 6;

  bool operator==(const NetShape&) const = default;
};

struct Layer {
  Matrix weights;  // out x in
  Vector bias;
};

namespace detail {
inline std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

// layers[0..K-1] are the trunk, layers[K] the policy head, layers[K+1] the
// value head. The same struct carries gradients.
struct PolicyParams {
  NetShape shape;
  std::vector<Layer> layers;
  std::uint64_t generation = 0;  // changes whenever the values change

  int trunk_depth() const { return shape.hidden_layers; }
  const Layer& policy_head() const { return layers[shape.hidden_layers]; }
  const Layer& value_head() const { return layers[shape.hidden_layers + 1]; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void touch() { generation = detail::next_generation(); }

  std::string layer_name(std::size_t i) const {
    if (static_cast<int>(i) < shape.hidden_layers) return "hidden layer " + std::to_string(i);
    return static_cast<int>(i) == shape.hidden_layers ? "policy head" : "value head";
  }

  // Flat view used by finite-difference checks and serialization: per layer,
  // row-major weights then bias.
  double& at(std::size_t index) {
    for (Layer& l : layers) {
      const auto w = static_cast<std::size_t>(l.weights.size());
      if (index < w) {
        const auto cols = static_cast<std::size_t>(l.weights.cols());
        return l.weights(static_cast<Eigen::Index>(index / cols), static_cast<Eigen::Index>(index % cols));
      }
      index -= w;
      if (index < static_cast<std::size_t>(l.bias.size())) return l.bias(static_cast<Eigen::Index>(index));
      index -= static_cast<std::size_t>(l.bias.size());
    }
    throw ProtocolError("parameter index out of range");
  }
  double at(std::size_t index) const { return const_cast<PolicyParams*>(this)->at(index); }

  bool all_finite() const {
    for (const Layer& l : layers) {
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }
};

using Gradients = PolicyParams;

inline PolicyParams zero_params(const NetShape& shape) {
  if (shape.input < 1 || shape.hidden_layers < 1 || shape.hidden_units < 1 || shape.actions < 1) {
    throw ConfigError("network widths must all be positive");
  }
  PolicyParams p;
  p.shape = shape;
  int fan_in = shape.input;
  for (int k = 0; k < shape.hidden_layers; ++k) {
    p.layers.push_back({Matrix::Zero(shape.hidden_units, fan_in), Vector::Zero(shape.hidden_units)});
    fan_in = shape.hidden_units;
  }
  p.layers.push_back({Matrix::Zero(shape.actions, fan_in), Vector::Zero(shape.actions)});
  p.layers.push_back({Matrix::Zero(1, fan_in), Vector::Zero(1)});
  p.touch();
  return p;
}

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline PolicyParams init_params(const NetShape& shape, std::uint64_t seed) {
  PolicyParams p = zero_params(shape);
  Rng rng(seed);
  for (Layer& l : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weights.cols()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = rng.uniform(-bound, bound);
    }
  }
  p.touch();
  return p;
}

struct ForwardTrace {
  std::uint64_t generation = 0;
  Matrix input;
  std::vector<Matrix> pre;   // z_k = W_k h_{k-1} + b_k
  std::vector<Matrix> post;  // h_k = relu(z_k)
  Matrix logits;             // actions x B
  Matrix probs;              // actions x B
  RowVector values;          // 1 x B
};

// Column-wise softmax with max subtraction.
inline Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

inline ForwardTrace forward(const PolicyParams& params, const Matrix& observations) {
  if (observations.rows() != params.shape.input) {
    throw ProtocolError("observation width " + std::to_string(observations.rows()) + " does not match network input " +
                        std::to_string(params.shape.input));
  }
  if (!observations.allFinite()) throw NumericError("non-finite network input");
  ForwardTrace t;
  t.generation = params.generation;
  t.input = observations;
  const Matrix* h = &t.input;
  t.pre.reserve(params.shape.hidden_layers);
  t.post.reserve(params.shape.hidden_layers);
  for (int k = 0; k < params.shape.hidden_layers; ++k) {
    const Layer& l = params.layers[k];
    Matrix z = l.weights * *h;
    z.colwise() += l.bias;
    t.pre.push_back(std::move(z));
    t.post.push_back(t.pre.back().cwiseMax(0.0));
    h = &t.post.back();
  }
  t.logits = params.policy_head().weights * *h;
  t.logits.colwise() += params.policy_head().bias;
  t.probs = softmax_columns(t.logits);
  t.values = params.value_head().weights * *h;
  t.values.array() += params.value_head().bias(0);
  return t;
}

// Chain rule through the softmax: gradient w.r.t. logits from gradient w.r.t. probabilities.
inline Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs) {
  Matrix d = probs.cwiseProduct(d_probs);
  const RowVector s = d.colwise().sum();
  return d - probs * s.asDiagonal();
}

// Parameter gradients given d(loss)/d(logits) and d(loss)/d(values).
inline Gradients backward(const PolicyParams& params, const ForwardTrace& trace, const Matrix& d_logits,
                          const RowVector& d_values) {
  if (trace.generation != params.generation) throw ProtocolError("stale forward trace");
  const Eigen::Index batch = trace.input.cols();
  if (d_logits.rows() != params.shape.actions || d_logits.cols() != batch || d_values.cols() != batch) {
    throw ProtocolError("output gradient shape mismatch");
  }
  const int depth = params.shape.hidden_layers;
  Gradients g = zero_params(params.shape);
  const Matrix& top = trace.post.back();
  g.layers[depth].weights.noalias() = d_logits * top.transpose();
  g.layers[depth].bias = d_logits.rowwise().sum();
  g.layers[depth + 1].weights.noalias() = d_values * top.transpose();
  g.layers[depth + 1].bias(0) = d_values.sum();

  Matrix dh = params.policy_head().weights.transpose() * d_logits;
  dh.noalias() += params.value_head().weights.transpose() * d_values;
  for (int k = depth - 1; k >= 0; --k) {
    const Matrix dz = dh.cwiseProduct((trace.pre[k].array() > 0.0).cast<double>().matrix());
    const Matrix& below = k == 0 ? trace.input : trace.post[k - 1];
    g.layers[k].weights.noalias() = dz * below.transpose();
    g.layers[k].bias = dz.rowwise().sum();
    if (k > 0) dh.noalias() = params.layers[k].weights.transpose() * dz;
  }
  return g;
}

struct AdamState {
  std::vector<Layer> first;
  std::vector<Layer> second;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const PolicyParams& p) {
    AdamState s;
    for (const Layer& l : p.layers) {
      s.first.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size())});
      s.second.push_back(s.first.back());
    }
    return s;
  }
};

inline void adam_step(PolicyParams& params, const Gradients& grads, AdamState& state, double learning_rate) {
  if (grads.layers.size() != params.layers.size() || state.first.size() != params.layers.size()) {
    throw ProtocolError("optimizer shape mismatch");
  }
  for (std::size_t i = 0; i < grads.layers.size(); ++i) {
    const Layer& g = grads.layers[i];
    if (g.weights.rows() != params.layers[i].weights.rows() || g.weights.cols() != params.layers[i].weights.cols()) {
      throw ProtocolError("gradient shape mismatch in " + params.layer_name(i));
    }
    if (!g.weights.allFinite() || !g.bias.allFinite()) throw NumericError("non-finite gradient in " + params.layer_name(i));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weights, grads.layers[i].weights, state.first[i].weights, state.second[i].weights);
    update(params.layers[i].bias, grads.layers[i].bias, state.first[i].bias, state.second[i].bias);
  }
  params.touch();
}

}  // namespace swarmnav
