#pragma once

// 2D primitives shared by the navmesh and the simulator: vectors, poses,
// segment/triangle predicates and ray casting against walls and discs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "swarmnav/error.hpp"

namespace swarmnav {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kGeomEps = 1e-9;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double squared_norm() const { return x * x + y * y; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }
constexpr Vec2 midpoint(Vec2 a, Vec2 b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }

// Twice the signed area of (a, b, c); positive when counterclockwise.
constexpr double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

inline Vec2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }

inline double normalize_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;  // fmod of a tiny negative can round up to 2π
  return r;
}

// Heading is kept in [0, 2π), counterclockwise from +x.
class Pose {
 public:
  Pose() = default;
  Pose(Vec2 position, double heading) : position(position), heading_(normalize_angle(heading)) {}

  double heading() const { return heading_; }
  void set_heading(double h) { heading_ = normalize_angle(h); }
  void rotate(double delta) { heading_ = normalize_angle(heading_ + delta); }
  Vec2 forward() const { return unit_from_angle(heading_); }

  bool operator==(const Pose&) const = default;

  Vec2 position;

 private:
  double heading_ = 0.0;
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

struct Disc {
  Vec2 center;
  double radius = 1.0;
  int id = -1;
};

enum class HitKind : std::uint8_t { none, static_obstacle, agent };

struct RayHit {
  double distance = 0.0;
  HitKind kind = HitKind::none;
  int agent = -1;  // id of the disc hit, when kind == agent

  bool operator==(const RayHit&) const = default;
};

namespace detail {

inline void require_finite(Vec2 v, const char* what) {
  if (!v.finite()) throw GeometryError(std::string("non-finite ") + what);
}

}  // namespace detail

// Distance along a unit ray to a closed segment, if any.
inline std::optional<double> ray_segment_distance(Vec2 origin, Vec2 dir, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const Vec2 w = s.a - origin;
  const double denom = cross(dir, e);
  const double scale = std::max({1.0, e.norm(), w.norm()});
  if (std::abs(denom) <= kGeomEps * scale) {
    // Parallel. Only a collinear segment can be hit.
    if (std::abs(cross(w, dir)) > kGeomEps * scale) return std::nullopt;
    const double ta = dot(s.a - origin, dir);
    const double tb = dot(s.b - origin, dir);
    const double lo = std::min(ta, tb);
    const double hi = std::max(ta, tb);
    if (hi < 0.0) return std::nullopt;
    return std::max(lo, 0.0);
  }
  const double t = cross(w, e) / denom;
  const double u = cross(w, dir) / denom;
  if (t < -kGeomEps || u < -kGeomEps || u > 1.0 + kGeomEps) return std::nullopt;
  return std::max(t, 0.0);
}

// Distance along a unit ray to a disc; 0 if the origin is inside it.
inline std::optional<double> ray_disc_distance(Vec2 origin, Vec2 dir, const Disc& d) {
  const Vec2 oc = origin - d.center;
  const double b = dot(dir, oc);
  const double c = oc.squared_norm() - d.radius * d.radius;
  if (c <= 0.0) return 0.0;
  if (b >= 0.0) return std::nullopt;  // outside and pointing away
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  // Near root c / (-b + sqrt(disc)) avoids cancellation for grazing rays.
  return c / (-b + std::sqrt(disc));
}

// Nearest hit within max_range against static segments and agent discs.
// The caster's own disc must not be part of `agents`.
inline RayHit ray_cast(Vec2 origin, Vec2 direction, double max_range, std::span<const Segment> obstacles,
                       std::span<const Disc> agents) {
  detail::require_finite(origin, "ray origin");
  detail::require_finite(direction, "ray direction");
  if (!std::isfinite(max_range) || max_range <= 0.0) throw GeometryError("ray max_range must be positive and finite");
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw GeometryError("ray direction must have unit norm");

  RayHit best{max_range, HitKind::none, -1};
  for (const Segment& s : obstacles) {
    detail::require_finite(s.a, "obstacle vertex");
    detail::require_finite(s.b, "obstacle vertex");
    if (auto t = ray_segment_distance(origin, direction, s); t && *t < best.distance) {
      best = {*t, HitKind::static_obstacle, -1};
    }
  }
  for (const Disc& d : agents) {
    detail::require_finite(d.center, "agent center");
    if (auto t = ray_disc_distance(origin, direction, d); t && *t < best.distance) {
      best = {*t, HitKind::agent, d.id};
    }
  }
  return best;
}

// Intersection of closed segments a1-a2 and b1-b2. Collinear overlaps
// report the overlap endpoint nearest to a1.
inline std::optional<Vec2> segment_intersection(Vec2 a1, Vec2 a2, Vec2 b1, Vec2 b2) {
  const Vec2 r = a2 - a1;
  const Vec2 s = b2 - b1;
  const Vec2 qp = b1 - a1;
  const double denom = cross(r, s);
  const double scale = std::max({1.0, r.norm(), s.norm(), qp.norm()});
  const double eps = kGeomEps * scale * scale;

  if (std::abs(denom) <= eps) {
    if (std::abs(cross(qp, r)) > eps) return std::nullopt;  // parallel, not collinear
    const double rr = r.squared_norm();
    if (rr <= 0.0) {
      // a is a point
      const double ss = s.squared_norm();
      if (ss <= 0.0) return (qp.squared_norm() <= eps) ? std::optional<Vec2>(a1) : std::nullopt;
      const double u = dot(a1 - b1, s) / ss;
      return (u >= -kGeomEps && u <= 1.0 + kGeomEps) ? std::optional<Vec2>(a1) : std::nullopt;
    }
    double t0 = dot(qp, r) / rr;
    double t1 = dot(b2 - a1, r) / rr;
    if (t0 > t1) std::swap(t0, t1);
    const double lo = std::max(t0, 0.0);
    const double hi = std::min(t1, 1.0);
    if (lo > hi + kGeomEps) return std::nullopt;
    return a1 + r * lo;
  }
  const double t = cross(qp, s) / denom;
  const double u = cross(qp, r) / denom;
  if (t < -kGeomEps || t > 1.0 + kGeomEps || u < -kGeomEps || u > 1.0 + kGeomEps) return std::nullopt;
  return a1 + r * std::clamp(t, 0.0, 1.0);
}

// Closed-triangle containment. Throws on a degenerate triangle.
inline bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  const double area2 = orient(a, b, c);
  const double scale = std::max({1.0, (b - a).squared_norm(), (c - a).squared_norm()});
  if (std::abs(area2) <= kGeomEps * scale) throw GeometryError("degenerate triangle");
  const double sign = area2 > 0.0 ? 1.0 : -1.0;
  const double eps = kGeomEps * scale;
  return sign * orient(a, b, p) >= -eps && sign * orient(b, c, p) >= -eps && sign * orient(c, a, p) >= -eps;
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  if (len2 <= 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

using Polygon = std::vector<Vec2>;

// Signed area; positive for counterclockwise vertex order.
inline double polygon_area(std::span<const Vec2> poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) acc += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * acc;
}

// Even-odd rule; boundary points count as inside.
inline bool point_in_polygon(Vec2 p, std::span<const Vec2> poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[j];
    const Vec2 b = poly[i];
    if (point_segment_distance(p, a, b) <= kGeomEps) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

inline double point_polygon_boundary_distance(Vec2 p, std::span<const Vec2> poly) {
  double best = INFINITY;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
  }
  return best;
}

// True when a closed segment touches the polygon (boundary or interior).
inline bool segment_touches_polygon(Vec2 a, Vec2 b, std::span<const Vec2> poly) {
  if (point_in_polygon(a, poly) || point_in_polygon(b, poly)) return true;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (segment_intersection(a, b, poly[i], poly[(i + 1) % poly.size()])) return true;
  }
  return false;
}

}  // namespace swarmnav
