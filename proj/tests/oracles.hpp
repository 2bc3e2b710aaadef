#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of them share code paths with the library beyond the basic
// mesh accessors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <queue>
#include <vector>

#include "swarmnav/navmesh.hpp"
#include "swarmnav/nn.hpp"
#include "swarmnav/rng.hpp"
#include "swarmnav/sim.hpp"

namespace oracle {

using swarmnav::MapSpec;
using swarmnav::NavMesh;
using swarmnav::Vec2;

// Dijkstra over a graph whose nodes are the start point, the goal point and
// the midpoints of interior mesh edges. Two midpoints are joined when their
// edges bound a common triangle; the start joins the edges of its triangle,
// the goal joins the edges of its triangle.
inline double dijkstra_channel_cost(const NavMesh& mesh, Vec2 start, Vec2 goal) {
  const int st = *mesh.locate(start);
  const int gt = *mesh.locate(goal);
  if (st == gt) return 0.0;
  std::map<std::pair<int, int>, int> edge_id;
  std::vector<Vec2> pos{start, goal};
  std::vector<std::vector<int>> tri_nodes(mesh.triangles.size());
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    for (int k = 0; k < 3; ++k) {
      if (mesh.adjacency[t][k] < 0) continue;
      int a = mesh.triangles[t][k], b = mesh.triangles[t][(k + 1) % 3];
      if (a > b) std::swap(a, b);
      auto [it, fresh] = edge_id.emplace(std::pair{a, b}, static_cast<int>(pos.size()));
      if (fresh) pos.push_back(swarmnav::midpoint(mesh.vertices[a], mesh.vertices[b]));
      tri_nodes[t].push_back(it->second);
    }
  }
  std::vector<std::vector<int>> adj(pos.size());
  auto link_all = [&](const std::vector<int>& nodes, int extra) {
    for (int u : nodes) {
      for (int v : nodes) {
        if (u != v) adj[u].push_back(v);
      }
      if (extra >= 0) {
        adj[extra].push_back(u);
        adj[u].push_back(extra);
      }
    }
  };
  for (int t = 0; t < static_cast<int>(tri_nodes.size()); ++t) {
    link_all(tri_nodes[t], -1);
  }
  for (int u : tri_nodes[st]) adj[0].push_back(u);
  for (int u : tri_nodes[gt]) adj[u].push_back(1);

  std::vector<double> dist(pos.size(), INFINITY);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[0] = 0.0;
  pq.push({0.0, 0});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (int v : adj[u]) {
      const double nd = d + std::hypot(pos[u].x - pos[v].x, pos[u].y - pos[v].y);
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.push({nd, v});
      }
    }
  }
  return dist[1];
}

// True when every map edge p-q is exactly covered by collinear mesh edges.
inline bool edge_covered(const NavMesh& mesh, Vec2 p, Vec2 q) {
  const Vec2 d = q - p;
  const double len2 = d.x * d.x + d.y * d.y;
  const double len = std::sqrt(len2);
  std::vector<std::pair<double, double>> pieces;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const Vec2 a = mesh.vertices[mesh.triangles[t][k]];
      const Vec2 b = mesh.vertices[mesh.triangles[t][(k + 1) % 3]];
      auto off_line = [&](Vec2 v) { return std::abs((v.x - p.x) * d.y - (v.y - p.y) * d.x) / len; };
      if (off_line(a) > 1e-9 || off_line(b) > 1e-9) continue;
      double s0 = ((a.x - p.x) * d.x + (a.y - p.y) * d.y) / len2;
      double s1 = ((b.x - p.x) * d.x + (b.y - p.y) * d.y) / len2;
      if (s0 > s1) std::swap(s0, s1);
      if (s1 < 1e-12 || s0 > 1.0 - 1e-12) continue;
      if (s0 < -1e-9 || s1 > 1.0 + 1e-9) return false;  // a mesh edge runs past the corner
      pieces.push_back({s0, s1});
    }
  }
  std::sort(pieces.begin(), pieces.end());
  double reach = 0.0;
  for (const auto& [s0, s1] : pieces) {
    if (s0 > reach + 1e-9) return false;
    reach = std::max(reach, s1);
  }
  return reach >= 1.0 - 1e-9;
}

// Random axis-aligned rectangles that do not touch each other or the border.
inline MapSpec random_map(swarmnav::Rng& rng, double side, int max_obstacles) {
  const int count = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_obstacles) + 1));
  return swarmnav::random_rectangle_map(side, count, 0.05 * side, 0.2 * side, 0.02 * side, 0.03 * side, rng);
}

inline Vec2 random_free_point(const NavMesh& mesh, swarmnav::Rng& rng, double side) {
  for (;;) {
    const Vec2 p{rng.uniform(0.0, side), rng.uniform(0.0, side)};
    if (mesh.locate(p)) return p;
  }
}

// All pairs of running agents closer than d_safe.
inline std::vector<char> all_pairs_collisions(std::span<const Vec2> positions, double d_safe) {
  std::vector<char> hit(positions.size(), 0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = 0; j < positions.size(); ++j) {
      if (i == j) continue;
      const double dx = positions[i].x - positions[j].x, dy = positions[i].y - positions[j].y;
      if (std::sqrt(dx * dx + dy * dy) < d_safe) hit[i] = 1;
    }
  }
  return hit;
}

// Plain-loop forward pass for one sample: returns (probabilities, value).
inline std::pair<std::vector<double>, double> naive_forward(const swarmnav::PolicyParams& p,
                                                            const std::vector<double>& x) {
  std::vector<double> h = x;
  auto affine = [](const swarmnav::Layer& l, const std::vector<double>& in) {
    std::vector<double> out(static_cast<std::size_t>(l.weights.rows()));
    for (std::size_t r = 0; r < out.size(); ++r) {
      double acc = l.bias(static_cast<Eigen::Index>(r));
      for (std::size_t c = 0; c < in.size(); ++c) acc += l.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * in[c];
      out[r] = acc;
    }
    return out;
  };
  for (int k = 0; k < p.shape.hidden_layers; ++k) {
    h = affine(p.layers[k], h);
    for (double& v : h) v = v > 0.0 ? v : 0.0;
  }
  std::vector<double> logits = affine(p.policy_head(), h);
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double& v : logits) z += (v = std::exp(v - m));
  for (double& v : logits) v /= z;
  return {logits, affine(p.value_head(), h)[0]};
}

// Largest elementwise relative error between an analytic gradient and central
// differences of `loss` over every coordinate whose gradient exceeds 1e-8.
template <class Loss>
double gradient_check(swarmnav::PolicyParams& params, const swarmnav::PolicyParams& grads, Loss&& loss,
                      double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < params.parameter_count(); ++i) {
    const double analytic = grads.at(i);
    const double saved = params.at(i);
    params.at(i) = saved + step;
    const double up = loss(params);
    params.at(i) = saved - step;
    const double down = loss(params);
    params.at(i) = saved;
    const double numeric = (up - down) / (2.0 * step);
    if (std::abs(analytic) <= 1e-8 && std::abs(numeric) <= 1e-8) continue;
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric)));
  }
  return worst;
}

inline swarmnav::Matrix random_matrix(swarmnav::Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                                      double hi = 1.0) {
  swarmnav::Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
  }
  return m;
}

// Advantages by direct summation of discounted TD residuals up to the end of
// each episode: A_t = sum_k (discount*lambda)^(k-t) delta_k.
inline std::vector<double> gae_expansion(const std::vector<double>& rewards, const std::vector<double>& values,
                                         const std::vector<char>& dones, double bootstrap, double discount,
                                         double lambda) {
  const std::size_t n = rewards.size();
  std::vector<double> delta(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double next = dones[k] ? 0.0 : (k + 1 < n ? values[k + 1] : bootstrap);
    delta[k] = rewards[k] + discount * next - values[k];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += weight * delta[k];
      if (dones[k]) break;
      weight *= discount * lambda;
    }
  }
  return adv;
}

inline std::vector<double> reward_to_go(const std::vector<double>& rewards, double discount) {
  std::vector<double> out(rewards.size(), 0.0);
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < rewards.size(); ++k) {
      out[t] += weight * rewards[k];
      weight *= discount;
    }
  }
  return out;
}

}  // namespace oracle
