#pragma once

// Navigation mesh over the free space of a square map with polygonal
// obstacles, and the triangle-channel A* that plans over it.
//
// Path cost: a channel is scored by the length of the polyline
//   start -> mid(portal 1) -> ... -> mid(portal n-1) -> goal
// i.e. each traversed triangle contributes the distance from the midpoint
// of its in-edge to the midpoint of its out-edge, with the start and goal
// standing in for the missing in-edge/out-edge of the end triangles.
// A single-triangle channel costs 0. The heuristic of a search state is the
// straight-line distance from its triangle's barycenter to the goal.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "swarmnav/error.hpp"
#include "swarmnav/geom.hpp"

namespace swarmnav {

struct MapSpec {
  double domain_side = 200.0;
  std::vector<Polygon> obstacles;
};

struct NavMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  // adjacency[t][k] is the triangle across edge (v[k], v[k+1]); -1 on the boundary.
  std::vector<std::array<int, 3>> adjacency;
  std::vector<Vec2> barycenters;
  std::vector<std::pair<int, int>> boundary_edges;

  // Builds adjacency, barycenters and the boundary edge list from raw
  // triangles. Triangles are reoriented counterclockwise.
  static NavMesh from_triangles(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles) {
    NavMesh m;
    m.vertices = std::move(vertices);
    m.triangles = std::move(triangles);
    const int n = static_cast<int>(m.triangles.size());
    for (auto& t : m.triangles) {
      for (int v : t) {
        if (v < 0 || v >= static_cast<int>(m.vertices.size())) throw MeshBuildError("triangle references missing vertex");
      }
      const double a = orient(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
      if (std::abs(a) <= kGeomEps) throw MeshBuildError("triangle with zero area");
      if (a < 0.0) std::swap(t[1], t[2]);
    }
    m.adjacency.assign(n, {-1, -1, -1});
    std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> edges;  // ((lo,hi),(tri,k))
    edges.reserve(3 * n);
    for (int t = 0; t < n; ++t) {
      for (int k = 0; k < 3; ++k) {
        const int a = m.triangles[t][k];
        const int b = m.triangles[t][(k + 1) % 3];
        edges.push_back({{std::min(a, b), std::max(a, b)}, {t, k}});
      }
    }
    std::sort(edges.begin(), edges.end());
    for (std::size_t i = 0; i < edges.size();) {
      std::size_t j = i;
      while (j < edges.size() && edges[j].first == edges[i].first) ++j;
      if (j - i == 2) {
        const auto [t0, k0] = edges[i].second;
        const auto [t1, k1] = edges[i + 1].second;
        m.adjacency[t0][k0] = t1;
        m.adjacency[t1][k1] = t0;
      } else if (j - i == 1) {
        const auto [t0, k0] = edges[i].second;
        m.boundary_edges.emplace_back(m.triangles[t0][k0], m.triangles[t0][(k0 + 1) % 3]);
      } else {
        throw MeshBuildError("edge shared by more than two triangles");
      }
      i = j;
    }
    m.barycenters.reserve(n);
    for (const auto& t : m.triangles) {
      m.barycenters.push_back((m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0);
    }
    return m;
  }

  std::size_t size() const { return triangles.size(); }
  Vec2 corner(int t, int k) const { return vertices[triangles[t][k % 3]]; }

  // Edge k of triangle t as (v[k], v[k+1]).
  std::pair<Vec2, Vec2> edge(int t, int k) const { return {corner(t, k), corner(t, k + 1)}; }
  Vec2 edge_midpoint(int t, int k) const { return midpoint(corner(t, k), corner(t, k + 1)); }

  // Index of the edge of t shared with neighbor u, or -1.
  int shared_edge(int t, int u) const {
    for (int k = 0; k < 3; ++k) {
      if (adjacency[t][k] == u) return k;
    }
    return -1;
  }

  bool contains(int t, Vec2 p) const { return point_in_triangle(p, corner(t, 0), corner(t, 1), corner(t, 2)); }

  // Lowest-index triangle containing p (closed triangles).
  std::optional<int> locate(Vec2 p) const {
    for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
      if (contains(t, p)) return t;
    }
    return std::nullopt;
  }

  double distance_to_triangle(int t, Vec2 p) const {
    if (contains(t, p)) return 0.0;
    double d = INFINITY;
    for (int k = 0; k < 3; ++k) d = std::min(d, point_segment_distance(p, corner(t, k), corner(t, k + 1)));
    return d;
  }

  // Containing triangle, or the closest one for points off the mesh.
  int locate_nearest(Vec2 p) const {
    if (auto t = locate(p)) return *t;
    int best = -1;
    double best_d = INFINITY;
    for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
      const double d = distance_to_triangle(t, p);
      if (d < best_d) {
        best_d = d;
        best = t;
      }
    }
    if (best < 0) throw LocationError("empty navigation mesh");
    return best;
  }

  double area() const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      a += 0.5 * orient(corner(static_cast<int>(t), 0), corner(static_cast<int>(t), 1), corner(static_cast<int>(t), 2));
    }
    return a;
  }

  // True when the closed segment a-b lies inside the meshed free space.
  bool segment_clear(Vec2 a, Vec2 b) const {
    if (!locate(a) || !locate(b)) return false;
    const Vec2 d = b - a;
    const double len2 = d.squared_norm();
    if (len2 <= 0.0) return true;
    std::vector<double> cuts{0.0, 1.0};
    for (const auto& [i, j] : boundary_edges) {
      const Vec2 p = vertices[i];
      const Vec2 q = vertices[j];
      const double o1 = orient(a, b, p);
      const double o2 = orient(a, b, q);
      const double o3 = orient(p, q, a);
      const double o4 = orient(p, q, b);
      const double eps = kGeomEps * std::max(1.0, len2 + (q - p).squared_norm());
      if (((o1 > eps && o2 < -eps) || (o1 < -eps && o2 > eps)) && ((o3 > eps && o4 < -eps) || (o3 < -eps && o4 > eps))) {
        return false;  // proper crossing of the free-space boundary
      }
      for (Vec2 v : {p, q}) {
        if (point_segment_distance(v, a, b) <= kGeomEps) cuts.push_back(std::clamp(dot(v - a, d) / len2, 0.0, 1.0));
      }
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      if (cuts[i + 1] - cuts[i] <= 1e-12) continue;
      if (!locate(a + d * (0.5 * (cuts[i] + cuts[i + 1])))) return false;
    }
    return true;
  }
};

struct Portal {
  int from = -1;  // triangle left through this edge
  int to = -1;    // triangle entered
  Vec2 a;
  Vec2 b;
  Vec2 midpoint() const { return swarmnav::midpoint(a, b); }
};

struct Channel {
  std::vector<int> triangle_indices;
  std::vector<Portal> portals;  // portals[k] joins triangle k and k+1
  double total_cost = 0.0;
};

struct Waypoints {
  std::vector<Vec2> points;
  Channel source_channel;
};

namespace detail {

// Incremental constrained Delaunay triangulation: Lawson insertion into a
// seed rectangle, Sloan edge flipping to recover constraints, then a global
// Lawson pass over unconstrained edges.
class CdtBuilder {
 public:
  CdtBuilder(Vec2 lo, Vec2 hi) {
    pts_ = {lo, {hi.x, lo.y}, hi, {lo.x, hi.y}};
    tris_.push_back({{0, 1, 2}, {-1, -1, 1}});
    tris_.push_back({{0, 2, 3}, {0, -1, -1}});
  }

  int insert_point(Vec2 p, const std::string& feature) {
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      if (distance(pts_[i], p) < 1e-9) throw MeshBuildError("duplicate vertex at " + feature);
    }
    const int id = static_cast<int>(pts_.size());
    pts_.push_back(p);
    for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
      const auto& v = tris_[t].v;
      const Vec2 a = pts_[v[0]], b = pts_[v[1]], c = pts_[v[2]];
      const double scale = std::max({1.0, (b - a).squared_norm(), (c - a).squared_norm(), (p - a).squared_norm()});
      const double eps = kGeomEps * scale;
      const std::array<double, 3> o{orient(a, b, p), orient(b, c, p), orient(c, a, p)};
      if (o[0] < -eps || o[1] < -eps || o[2] < -eps) continue;
      int on_edge = -1;
      for (int k = 0; k < 3; ++k) {
        if (std::abs(o[k]) <= eps) on_edge = k;
      }
      if (on_edge >= 0) {
        split_edge(t, on_edge, id);
      } else {
        split_triangle(t, id);
      }
      legalize_all();
      return id;
    }
    throw MeshBuildError(feature + " lies outside the domain");
  }

  void insert_constraint(int u, int w, const std::string& feature) {
    // Split the constraint at vertices lying on it.
    std::vector<std::pair<double, int>> on;
    const Vec2 a = pts_[u], b = pts_[w];
    const double len2 = (b - a).squared_norm();
    for (int i = 0; i < static_cast<int>(pts_.size()); ++i) {
      if (i == u || i == w) continue;
      if (point_segment_distance(pts_[i], a, b) <= kGeomEps) on.push_back({dot(pts_[i] - a, b - a) / len2, i});
    }
    std::sort(on.begin(), on.end());
    int prev = u;
    for (const auto& [t, i] : on) {
      recover_edge(prev, i, feature);
      prev = i;
    }
    recover_edge(prev, w, feature);
  }

  void finalize_delaunay() { legalize_all(); }

  const std::vector<Vec2>& points() const { return pts_; }

  std::vector<std::array<int, 3>> triangles() const {
    std::vector<std::array<int, 3>> out;
    out.reserve(tris_.size());
    for (const auto& t : tris_) out.push_back(t.v);
    return out;
  }

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> n;  // n[k] across (v[k], v[k+1])
  };

  static std::pair<int, int> key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }
  bool constrained(int a, int b) const { return constraints_.count(key(a, b)) != 0; }

  void relink(int nbr, int old_t, int new_t) {
    if (nbr < 0) return;
    for (int& x : tris_[nbr].n) {
      if (x == old_t) {
        x = new_t;
        return;
      }
    }
  }

  void split_triangle(int t, int p) {
    const Tri old = tris_[t];
    const int a = old.v[0], b = old.v[1], c = old.v[2];
    const int t1 = static_cast<int>(tris_.size());
    const int t2 = t1 + 1;
    tris_[t] = {{a, b, p}, {old.n[0], t1, t2}};
    tris_.push_back({{b, c, p}, {old.n[1], t2, t}});
    tris_.push_back({{c, a, p}, {old.n[2], t, t1}});
    relink(old.n[1], t, t1);
    relink(old.n[2], t, t2);
  }

  void split_edge(int t, int k, int p) {
    const Tri old = tris_[t];
    const int a = old.v[k], b = old.v[(k + 1) % 3], c = old.v[(k + 2) % 3];
    const int n_bc = old.n[(k + 1) % 3];
    const int n_ca = old.n[(k + 2) % 3];
    const int t2 = old.n[k];
    const bool was_constrained = constrained(a, b);
    if (t2 < 0) {
      const int tb = static_cast<int>(tris_.size());
      tris_[t] = {{a, p, c}, {-1, tb, n_ca}};
      tris_.push_back({{p, b, c}, {-1, n_bc, t}});
      relink(n_bc, t, tb);
    } else {
      const Tri o2 = tris_[t2];
      int j = 0;
      while (o2.v[j] != b) ++j;
      const int d = o2.v[(j + 2) % 3];
      const int n_ad = o2.n[(j + 1) % 3];
      const int n_db = o2.n[(j + 2) % 3];
      const int tb = static_cast<int>(tris_.size());
      const int td = tb + 1;
      // t -> (a,p,c), tb -> (p,b,c), t2 -> (b,p,d), td -> (p,a,d)
      tris_[t] = {{a, p, c}, {td, tb, n_ca}};
      tris_.push_back({{p, b, c}, {t2, n_bc, t}});
      tris_.push_back({{p, a, d}, {t, n_ad, t2}});
      tris_[t2] = {{b, p, d}, {tb, td, n_db}};
      relink(n_bc, t, tb);
      relink(n_ad, t2, td);
    }
    if (was_constrained) {
      constraints_.erase(key(a, b));
      constraints_.insert(key(a, p));
      constraints_.insert(key(p, b));
    }
  }

  // Is d strictly inside the circumcircle of counterclockwise (a, b, c)?
  bool in_circle(int ia, int ib, int ic, int id) const {
    const Vec2 d = pts_[id];
    const Vec2 a = pts_[ia] - d, b = pts_[ib] - d, c = pts_[ic] - d;
    const double al = a.squared_norm(), bl = b.squared_norm(), cl = c.squared_norm();
    const double det = al * (b.x * c.y - b.y * c.x) + bl * (c.x * a.y - c.y * a.x) + cl * (a.x * b.y - a.y * b.x);
    const double perm = al * (std::abs(b.x * c.y) + std::abs(b.y * c.x)) + bl * (std::abs(c.x * a.y) + std::abs(c.y * a.x)) +
                        cl * (std::abs(a.x * b.y) + std::abs(a.y * b.x));
    return det > 1e-10 * perm;
  }

  // The quad around edge k of t, as (p, q, a, b): edge p-q, a opposite in t, b opposite in the neighbor.
  std::array<int, 4> quad(int t, int k) const {
    const Tri& x = tris_[t];
    const Tri& y = tris_[x.n[k]];
    const int p = x.v[k], q = x.v[(k + 1) % 3];
    int j = 0;
    while (y.v[j] != q) ++j;
    return {p, q, x.v[(k + 2) % 3], y.v[(j + 2) % 3]};
  }

  bool flippable(int t, int k) const {
    const auto [p, q, a, b] = quad(t, k);
    const Vec2 P = pts_[p], Q = pts_[q], A = pts_[a], B = pts_[b];
    const double eps = kGeomEps * std::max({1.0, (P - A).squared_norm(), (Q - A).squared_norm(), (B - A).squared_norm()});
    return orient(A, B, P) < -eps && orient(A, B, Q) > eps;
  }

  // Flips edge k of t; returns the two triangles now holding the new diagonal.
  void flip(int t, int k) {
    const Tri x = tris_[t];
    const int t2 = x.n[k];
    const Tri y = tris_[t2];
    const int p = x.v[k], q = x.v[(k + 1) % 3], a = x.v[(k + 2) % 3];
    int j = 0;
    while (y.v[j] != q) ++j;
    const int b = y.v[(j + 2) % 3];
    const int n_qa = x.n[(k + 1) % 3];
    const int n_ap = x.n[(k + 2) % 3];
    const int n_pb = y.n[(j + 1) % 3];
    const int n_bq = y.n[(j + 2) % 3];
    tris_[t] = {{a, p, b}, {n_ap, n_pb, t2}};
    tris_[t2] = {{b, q, a}, {n_bq, n_qa, t}};
    relink(n_pb, t2, t);
    relink(n_qa, t, t2);
  }

  void legalize_all() {
    bool changed = true;
    int guard = 0;
    while (changed) {
      changed = false;
      if (++guard > 10000) throw MeshBuildError("triangulation failed to converge");
      for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
        for (int k = 0; k < 3; ++k) {
          const int u = tris_[t].n[k];
          if (u < 0) continue;
          const auto [p, q, a, b] = quad(t, k);
          if (constrained(p, q)) continue;
          if (in_circle(p, q, a, b) && flippable(t, k)) {
            flip(t, k);
            changed = true;
          }
        }
      }
    }
  }

  std::optional<std::pair<int, int>> find_edge(int p, int q) const {
    for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
      for (int k = 0; k < 3; ++k) {
        if (tris_[t].v[k] == p && tris_[t].v[(k + 1) % 3] == q) return std::pair{t, k};
      }
    }
    return std::nullopt;
  }

  bool crosses(int p, int q, int u, int w) const {
    if (p == u || p == w || q == u || q == w) return false;
    const Vec2 P = pts_[p], Q = pts_[q], U = pts_[u], W = pts_[w];
    const double o1 = orient(U, W, P), o2 = orient(U, W, Q), o3 = orient(P, Q, U), o4 = orient(P, Q, W);
    return ((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0));
  }

  void recover_edge(int u, int w, const std::string& feature) {
    if (find_edge(u, w) || find_edge(w, u)) {
      constraints_.insert(key(u, w));
      return;
    }
    std::deque<std::pair<int, int>> queue;
    for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
      for (int k = 0; k < 3; ++k) {
        const int p = tris_[t].v[k], q = tris_[t].v[(k + 1) % 3];
        if (p < q && crosses(p, q, u, w)) {
          if (constrained(p, q)) throw MeshBuildError(feature + " crosses another constrained edge");
          queue.emplace_back(p, q);
        }
      }
    }
    std::size_t stall = 0;
    while (!queue.empty()) {
      const auto [p, q] = queue.front();
      queue.pop_front();
      auto e = find_edge(p, q);
      if (!e) e = find_edge(q, p);
      if (!e) continue;
      auto [t, k] = *e;
      if (!flippable(t, k)) {
        queue.emplace_back(p, q);
        if (++stall > 4 * queue.size() + 16) throw MeshBuildError("cannot recover boundary edge of " + feature);
        continue;
      }
      stall = 0;
      const int a = tris_[t].v[(k + 2) % 3];
      const int t2 = tris_[t].n[k];
      int j = 0;
      while (tris_[t2].v[j] != q) ++j;
      const int b = tris_[t2].v[(j + 2) % 3];
      flip(t, k);
      if (crosses(a, b, u, w)) queue.emplace_back(a, b);
    }
    if (!find_edge(u, w) && !find_edge(w, u)) throw MeshBuildError("cannot recover boundary edge of " + feature);
    constraints_.insert(key(u, w));
  }

  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  std::set<std::pair<int, int>> constraints_;
};

inline void validate_polygon(const Polygon& poly, const std::string& name) {
  if (poly.size() < 3) throw MeshBuildError(name + " has fewer than 3 vertices");
  for (const Vec2& v : poly) {
    if (!v.finite()) throw MeshBuildError(name + " has a non-finite vertex");
  }
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (distance(poly[i], poly[(i + 1) % poly.size()]) < 1e-9) throw MeshBuildError("duplicate vertex in " + name);
  }
  if (std::abs(polygon_area(poly)) <= 1e-9) throw MeshBuildError(name + " has zero area");
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segment_intersection(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) {
        throw MeshBuildError(name + " is self-intersecting");
      }
    }
  }
}

inline bool polygons_overlap(const Polygon& a, const Polygon& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (segment_intersection(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()])) return true;
    }
  }
  return point_in_polygon(a[0], b) || point_in_polygon(b[0], a);
}

}  // namespace detail

// Counterclockwise copy of `poly` offset outward by `margin` with mitered corners.
inline Polygon inflate_polygon(const Polygon& poly, double margin) {
  Polygon ccw = poly;
  if (polygon_area(ccw) < 0.0) std::reverse(ccw.begin(), ccw.end());
  if (margin == 0.0) return ccw;
  const std::size_t n = ccw.size();
  Polygon out(n);
  auto normal = [&](std::size_t i) {
    const Vec2 e = ccw[(i + 1) % n] - ccw[i];
    return Vec2{e.y, -e.x} / e.norm();
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 n1 = normal((i + n - 1) % n);
    const Vec2 n2 = normal(i);
    const double denom = 1.0 + dot(n1, n2);
    if (denom <= 1e-9) throw MeshBuildError("polygon corner too sharp to inflate");
    out[i] = ccw[i] + (n1 + n2) * (margin / denom);
  }
  return out;
}

// Constrained Delaunay mesh of [margin, side - margin]^2 minus the obstacles
// inflated by `margin`. Pass margin = 0 to mesh the literal map.
inline NavMesh build_navmesh(const MapSpec& map, double margin = 0.0) {
  if (!std::isfinite(map.domain_side) || map.domain_side <= 0.0) throw MeshBuildError("domain side must be positive");
  if (!std::isfinite(margin) || margin < 0.0) throw MeshBuildError("inflation margin must be non-negative");
  const Vec2 lo{margin, margin};
  const Vec2 hi{map.domain_side - margin, map.domain_side - margin};
  if (hi.x - lo.x <= 1e-9) throw MeshBuildError("domain too small for the inflation margin");

  std::vector<Polygon> blockers;
  for (std::size_t k = 0; k < map.obstacles.size(); ++k) {
    const std::string name = "obstacle " + std::to_string(k);
    detail::validate_polygon(map.obstacles[k], name);
    Polygon inflated = inflate_polygon(map.obstacles[k], margin);
    detail::validate_polygon(inflated, name + " (inflated)");
    for (const Vec2& v : inflated) {
      if (v.x <= lo.x + 1e-9 || v.y <= lo.y + 1e-9 || v.x >= hi.x - 1e-9 || v.y >= hi.y - 1e-9) {
        throw MeshBuildError(name + " touches or leaves the domain boundary");
      }
    }
    for (std::size_t j = 0; j < blockers.size(); ++j) {
      if (detail::polygons_overlap(blockers[j], inflated)) {
        throw MeshBuildError("obstacles " + std::to_string(j) + " and " + std::to_string(k) + " overlap");
      }
    }
    blockers.push_back(std::move(inflated));
  }

  detail::CdtBuilder cdt(lo, hi);
  std::vector<std::vector<int>> ids(blockers.size());
  for (std::size_t k = 0; k < blockers.size(); ++k) {
    for (std::size_t i = 0; i < blockers[k].size(); ++i) {
      ids[k].push_back(cdt.insert_point(blockers[k][i], "obstacle " + std::to_string(k) + " vertex " + std::to_string(i)));
    }
  }
  for (std::size_t k = 0; k < blockers.size(); ++k) {
    const std::size_t n = ids[k].size();
    for (std::size_t i = 0; i < n; ++i) {
      cdt.insert_constraint(ids[k][i], ids[k][(i + 1) % n], "obstacle " + std::to_string(k) + " edge " + std::to_string(i));
    }
  }
  cdt.finalize_delaunay();

  std::vector<std::array<int, 3>> kept;
  for (const auto& t : cdt.triangles()) {
    const auto& p = cdt.points();
    const Vec2 c = (p[t[0]] + p[t[1]] + p[t[2]]) / 3.0;
    const bool blocked = std::any_of(blockers.begin(), blockers.end(), [&](const Polygon& b) { return point_in_polygon(c, b); });
    if (!blocked) kept.push_back(t);
  }
  return NavMesh::from_triangles(cdt.points(), std::move(kept));
}

namespace detail {

inline std::atomic<std::uint64_t>& astar_fallback_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

// Search over states (triangle, entry edge). State id 3t+k means "inside
// triangle t, entered through edge k"; the start state and the terminal
// goal state get the two ids after those.
struct ChannelSearch {
  const NavMesh& mesh;
  int start_tri;
  Vec2 start;
  int goal_tri;
  Vec2 goal;

  struct Result {
    double cost = INFINITY;
    std::vector<int> triangles;
  };

  Result run(bool use_heuristic) const {
    const int n = static_cast<int>(mesh.size());
    const int start_state = 3 * n;
    const int goal_state = 3 * n + 1;
    const int states = 3 * n + 2;
    std::vector<double> g(states, INFINITY);
    std::vector<int> depth(states, 0);
    std::vector<int> parent(states, -1);

    auto tri_of = [&](int s) { return s == start_state ? start_tri : s / 3; };
    auto point_of = [&](int s) { return s == start_state ? start : mesh.edge_midpoint(s / 3, s % 3); };
    auto heuristic = [&](int s) {
      if (!use_heuristic || s == goal_state) return 0.0;
      return distance(mesh.barycenters[tri_of(s)], goal);
    };

    // (f, channel length, triangle index, state)
    using Entry = std::tuple<double, int, int, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
    g[start_state] = 0.0;
    depth[start_state] = 1;
    open.emplace(heuristic(start_state), 1, start_tri, start_state);

    auto relax = [&](int from, int to, double cost, int to_depth) {
      const double ng = g[from] + cost;
      if (ng < g[to] || (ng == g[to] && to_depth < depth[to])) {
        g[to] = ng;
        depth[to] = to_depth;
        parent[to] = from;
        open.emplace(ng + heuristic(to), to_depth, to == goal_state ? goal_tri : to / 3, to);
      }
    };

    while (!open.empty()) {
      const auto [f, len, tri, s] = open.top();
      open.pop();
      if (f > g[s] + heuristic(s) || len != depth[s]) continue;  // stale
      if (s == goal_state) break;
      const int t = tri_of(s);
      const Vec2 here = point_of(s);
      if (t == goal_tri) relax(s, goal_state, distance(here, goal), depth[s]);
      for (int k = 0; k < 3; ++k) {
        const int u = mesh.adjacency[t][k];
        if (u < 0) continue;
        if (s != start_state && k == s % 3) continue;  // back out the way we came
        const int back = mesh.shared_edge(u, t);
        relax(s, 3 * u + back, distance(here, mesh.edge_midpoint(t, k)), depth[s] + 1);
      }
    }

    Result r;
    if (!std::isfinite(g[goal_state])) return r;
    r.cost = g[goal_state];
    for (int s = parent[goal_state]; s >= 0; s = parent[s]) r.triangles.push_back(tri_of(s));
    std::reverse(r.triangles.begin(), r.triangles.end());
    return r;
  }
};

inline Channel make_channel(const NavMesh& mesh, const std::vector<int>& tris, double cost) {
  Channel c;
  c.triangle_indices = tris;
  c.total_cost = cost;
  for (std::size_t i = 0; i + 1 < tris.size(); ++i) {
    const int k = mesh.shared_edge(tris[i], tris[i + 1]);
    const auto [a, b] = mesh.edge(tris[i], k);
    c.portals.push_back({tris[i], tris[i + 1], a, b});
  }
  return c;
}

}  // namespace detail

// Number of queries where the barycenter-guided search returned a costlier
// channel than the exhaustive search and was overridden.
inline std::uint64_t astar_fallback_count() { return detail::astar_fallback_counter().load(); }

// Channel search from a known start triangle. The start point may lie
// slightly off the mesh (agents pushed into the inflation margin).
inline Channel astar_channel_from(const NavMesh& mesh, int start_tri, Vec2 start, Vec2 goal) {
  const auto goal_tri = mesh.locate(goal);
  if (!goal_tri) throw LocationError("goal is not in free space");
  if (start_tri == *goal_tri) return detail::make_channel(mesh, {start_tri}, 0.0);
  const detail::ChannelSearch search{mesh, start_tri, start, *goal_tri, goal};
  auto guided = search.run(true);
  if (guided.triangles.empty()) throw UnreachableError("goal is unreachable from start");
  const auto exact = search.run(false);
  if (exact.cost < guided.cost - 1e-12) {
    detail::astar_fallback_counter().fetch_add(1);
    guided = exact;
  }
  return detail::make_channel(mesh, guided.triangles, guided.cost);
}

inline Channel astar_channel(const NavMesh& mesh, Vec2 start, Vec2 goal) {
  if (!start.finite() || !goal.finite()) throw LocationError("non-finite query point");
  const auto start_tri = mesh.locate(start);
  if (!start_tri) throw LocationError("start is not in free space");
  if (!mesh.locate(goal)) throw LocationError("goal is not in free space");
  return astar_channel_from(mesh, *start_tri, start, goal);
}

inline Waypoints channel_waypoints(const Channel& channel, Vec2 /*start*/, Vec2 goal) {
  Waypoints w;
  w.points.reserve(channel.portals.size() + 1);
  for (const Portal& p : channel.portals) w.points.push_back(p.midpoint());
  w.points.push_back(goal);
  w.source_channel = channel;
  return w;
}

inline double polyline_length(Vec2 start, std::span<const Vec2> points) {
  double total = 0.0;
  Vec2 prev = start;
  for (Vec2 p : points) {
    total += distance(prev, p);
    prev = p;
  }
  return total;
}

// Planner length from start to goal: the straight distance when the segment
// is collision-free, otherwise the portal-midpoint polyline.
inline double shortest_length_estimate(const NavMesh& mesh, Vec2 start, Vec2 goal) {
  if (start == goal) {
    if (!mesh.locate(start)) throw LocationError("start is not in free space");
    return 0.0;
  }
  if (mesh.segment_clear(start, goal)) return distance(start, goal);
  const Channel c = astar_channel(mesh, start, goal);
  const Waypoints w = channel_waypoints(c, start, goal);
  return polyline_length(start, w.points);
}

}  // namespace swarmnav
