#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "swarmnav/navmesh.hpp"
#include "swarmnav/sim.hpp"

using namespace swarmnav;

namespace {

// L-shaped region made of three unit squares of side 2:
// A = [0,2]x[0,2], B = [2,4]x[0,2], C = [2,4]x[2,4].
NavMesh l_shape() {
  std::vector<Vec2> v{{0, 0}, {2, 0}, {2, 2}, {0, 2}, {4, 0}, {4, 2}, {4, 4}, {2, 4}};
  return NavMesh::from_triangles(v, {{0, 1, 2}, {0, 2, 3}, {1, 4, 5}, {1, 5, 2}, {2, 5, 6}, {2, 6, 7}});
}

MapSpec square_with_hole() { return MapSpec{10.0, {rectangle(4, 4, 6, 6)}}; }

}  // namespace

TEST(BuildNavmesh, EmptySquareIsTwoTriangles) {
  const NavMesh m = build_navmesh(MapSpec{10.0, {}});
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.vertices.size(), 4u);
  EXPECT_DOUBLE_EQ(m.area(), 100.0);
}

TEST(BuildNavmesh, HoleAreaIsRemoved) {
  const NavMesh m = build_navmesh(square_with_hole());
  EXPECT_NEAR(m.area(), 100.0 - 4.0, 1e-9);
  for (int t = 0; t < static_cast<int>(m.size()); ++t) {
    const Vec2 c = m.barycenters[t];
    EXPECT_FALSE(c.x > 4 && c.x < 6 && c.y > 4 && c.y < 6);
  }
  EXPECT_FALSE(m.locate({5, 5}));
}

TEST(BuildNavmesh, InflationShrinksFreeArea) {
  const NavMesh m = build_navmesh(square_with_hole(), 1.0);
  EXPECT_NEAR(m.area(), 8.0 * 8.0 - 4.0 * 4.0, 1e-9);
  EXPECT_FALSE(m.locate({0.5, 5}));
  EXPECT_FALSE(m.locate({3.5, 5}));
  EXPECT_TRUE(m.locate({2.5, 5}));
}

TEST(BuildNavmesh, ObstacleEdgesAreUnionsOfMeshEdges) {
  Rng rng(100);
  for (int i = 0; i < 100; ++i) {
    const MapSpec map = oracle::random_map(rng, 100.0, 8);
    const NavMesh m = build_navmesh(map);
    double hole_area = 0.0;
    for (const Polygon& poly : map.obstacles) {
      hole_area += std::abs(polygon_area(poly));
      for (std::size_t k = 0; k < poly.size(); ++k) {
        EXPECT_TRUE(oracle::edge_covered(m, poly[k], poly[(k + 1) % poly.size()])) << "map " << i << " edge " << k;
      }
    }
    EXPECT_TRUE(oracle::edge_covered(m, {0, 0}, {100, 0}));
    EXPECT_TRUE(oracle::edge_covered(m, {100, 0}, {100, 100}));
    EXPECT_TRUE(oracle::edge_covered(m, {100, 100}, {0, 100}));
    EXPECT_TRUE(oracle::edge_covered(m, {0, 100}, {0, 0}));
    EXPECT_NEAR(m.area(), 100.0 * 100.0 - hole_area, 1e-6) << "map " << i;
  }
}

TEST(BuildNavmesh, ErrorsNameTheFeature) {
  try {
    build_navmesh(MapSpec{10.0, {{{1, 1}, {3, 1}, {5, 1}}}});
    FAIL();
  } catch (const MeshBuildError& e) {
    EXPECT_NE(std::string(e.what()).find("obstacle 0"), std::string::npos) << e.what();
  }
  try {
    build_navmesh(MapSpec{10.0, {rectangle(1, 1, 2, 2), {{5, 5}, {6, 5}, {6, 5}, {5, 6}}}});
    FAIL();
  } catch (const MeshBuildError& e) {
    EXPECT_NE(std::string(e.what()).find("obstacle 1"), std::string::npos) << e.what();
  }
  try {
    build_navmesh(MapSpec{10.0, {rectangle(1, 1, 4, 4), rectangle(3, 3, 6, 6)}});
    FAIL();
  } catch (const MeshBuildError& e) {
    EXPECT_NE(std::string(e.what()).find("obstacles 0 and 1"), std::string::npos) << e.what();
  }
}

TEST(AstarChannel, SameTriangleIsZeroCost) {
  const NavMesh m = build_navmesh(MapSpec{10.0, {}});
  const Vec2 a{8, 1}, b{9, 2};
  ASSERT_EQ(m.locate(a), m.locate(b));
  const Channel c = astar_channel(m, a, b);
  EXPECT_EQ(c.triangle_indices.size(), 1u);
  EXPECT_EQ(c.total_cost, 0.0);
}

TEST(AstarChannel, TwoTriangleSquareCrossesTheDiagonal) {
  const NavMesh m = build_navmesh(MapSpec{2.0, {}});
  Vec2 a{0.2, 1.7}, b{1.7, 0.2};
  if (m.locate(a) == m.locate(b)) {
    a = {0.2, 0.3};
    b = {1.8, 1.7};
  }
  ASSERT_NE(m.locate(a), m.locate(b));
  const Channel c = astar_channel(m, a, b);
  ASSERT_EQ(c.triangle_indices.size(), 2u);
  ASSERT_EQ(c.portals.size(), 1u);
  EXPECT_NEAR(distance(c.portals[0].a, c.portals[0].b), 2.0 * std::sqrt(2.0), 1e-12);
  const Vec2 mid = c.portals[0].midpoint();
  EXPECT_EQ(mid, (Vec2{1, 1}));
  EXPECT_NEAR(c.total_cost, distance(a, mid) + distance(mid, b), 1e-12);
}

TEST(AstarChannel, MatchesDijkstraOracle) {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const MapSpec map = oracle::random_map(rng, 100.0, 10);
    const NavMesh m = build_navmesh(map, 1.0);
    for (int q = 0; q < 3; ++q) {
      const Vec2 s = oracle::random_free_point(m, rng, 100.0);
      const Vec2 g = oracle::random_free_point(m, rng, 100.0);
      const Channel c = astar_channel(m, s, g);
      EXPECT_NEAR(c.total_cost, oracle::dijkstra_channel_cost(m, s, g), 1e-9) << "map " << i;
    }
  }
}

TEST(AstarChannel, LocationAndReachabilityErrors) {
  const NavMesh m = build_navmesh(square_with_hole());
  EXPECT_THROW(astar_channel(m, {5, 5}, {1, 1}), LocationError);
  EXPECT_THROW(astar_channel(m, {1, 1}, {5, 5}), LocationError);
  EXPECT_THROW(astar_channel(m, {1, 1}, {11, 1}), LocationError);
  const NavMesh split = NavMesh::from_triangles({{0, 0}, {1, 0}, {0, 1}, {5, 5}, {6, 5}, {5, 6}}, {{0, 1, 2}, {3, 4, 5}});
  EXPECT_THROW(astar_channel(split, {0.2, 0.2}, {5.2, 5.2}), UnreachableError);
}

TEST(AstarChannel, Deterministic) {
  Rng r1(3), r2(3);
  const MapSpec map = oracle::random_map(r1, 100.0, 10);
  const NavMesh m1 = build_navmesh(map, 1.0);
  const NavMesh m2 = build_navmesh(oracle::random_map(r2, 100.0, 10), 1.0);
  ASSERT_EQ(m1.triangles, m2.triangles);
  const Channel c1 = astar_channel(m1, {3, 3}, {97, 97});
  const Channel c2 = astar_channel(m2, {3, 3}, {97, 97});
  EXPECT_EQ(c1.triangle_indices, c2.triangle_indices);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(c1.total_cost), std::bit_cast<std::uint64_t>(c2.total_cost));
  const Waypoints w1 = channel_waypoints(c1, {3, 3}, {97, 97});
  const Waypoints w2 = channel_waypoints(c2, {3, 3}, {97, 97});
  EXPECT_EQ(w1.points, w2.points);
}

TEST(ChannelWaypoints, SingleTriangleIsGoal) {
  Channel c;
  c.triangle_indices = {0};
  const Waypoints w = channel_waypoints(c, {0, 0}, {1, 1});
  ASSERT_EQ(w.points.size(), 1u);
  EXPECT_EQ(w.points[0], (Vec2{1, 1}));
}

TEST(ChannelWaypoints, PortalMidpoint) {
  Channel c;
  c.triangle_indices = {0, 1};
  c.portals.push_back({0, 1, {0, 0}, {0, 2}});
  const Waypoints w = channel_waypoints(c, {-1, 1}, {1, 1});
  ASSERT_EQ(w.points.size(), 2u);
  EXPECT_EQ(w.points[0], (Vec2{0, 1}));
}

TEST(ChannelWaypoints, HandBuiltLShape) {
  const NavMesh m = l_shape();
  const Vec2 s{0.5, 1.5}, g{3.5, 3.0};
  const Channel c = astar_channel(m, s, g);
  EXPECT_EQ(c.triangle_indices, (std::vector<int>{1, 0, 3, 4}));
  const Waypoints w = channel_waypoints(c, s, g);
  EXPECT_EQ(w.points, (std::vector<Vec2>{{1, 1}, {2, 1}, {3, 2}, {3.5, 3.0}}));
}

TEST(ChannelWaypoints, InteriorPointsLieOnSharedEdges) {
  Rng rng(21);
  for (int i = 0; i < 30; ++i) {
    const NavMesh m = build_navmesh(oracle::random_map(rng, 100.0, 8), 1.0);
    const Vec2 s = oracle::random_free_point(m, rng, 100.0);
    const Vec2 g = oracle::random_free_point(m, rng, 100.0);
    const Channel c = astar_channel(m, s, g);
    const Waypoints w = channel_waypoints(c, s, g);
    ASSERT_EQ(w.points.size(), c.triangle_indices.size());
    for (std::size_t k = 0; k + 1 < w.points.size(); ++k) {
      const int t = c.triangle_indices[k], u = c.triangle_indices[k + 1];
      const int e = m.shared_edge(t, u);
      ASSERT_GE(e, 0);
      const auto [a, b] = m.edge(t, e);
      EXPECT_LE(point_segment_distance(w.points[k], a, b), 1e-12);
    }
  }
}

TEST(ShortestLengthEstimate, ObstacleFreeIsStraightLine) {
  const NavMesh m = build_navmesh(MapSpec{10.0, {}});
  EXPECT_DOUBLE_EQ(shortest_length_estimate(m, {0, 0}, {3, 4}), 5.0);
  EXPECT_EQ(shortest_length_estimate(m, {2, 2}, {2, 2}), 0.0);
}

TEST(ShortestLengthEstimate, DetourFollowsMidpoints) {
  const NavMesh m = l_shape();
  const double want = std::sqrt(0.5) + 1.0 + std::sqrt(2.0) + std::sqrt(1.25);
  EXPECT_NEAR(shortest_length_estimate(m, {0.5, 1.5}, {3.5, 3.0}), want, 1e-12);
}

TEST(ShortestLengthEstimate, WallForcesDetour) {
  const MapSpec map{20.0, {rectangle(9, 4, 11, 16)}};
  const NavMesh m = build_navmesh(map, 1.0);
  const Vec2 s{4, 10}, g{16, 10};
  const double est = shortest_length_estimate(m, s, g);
  // Any path must pass the inflated wall's top or bottom end.
  const double lower = distance(s, {8, 17}) + 4.0 + distance({12, 17}, g);
  EXPECT_GE(est, lower - 1e-9);
  const Waypoints w = channel_waypoints(astar_channel(m, s, g), s, g);
  EXPECT_NEAR(est, polyline_length(s, w.points), 1e-12);
}

// The estimate follows portal midpoints, so removing an obstacle can
// re-triangulate a region and lengthen the midpoint polyline. The property
// holds whenever the removal clears the straight segment, and never when
// both maps already had it clear.
TEST(ShortestLengthEstimate, RemovingObstacleThatClearsTheSegment) {
  Rng rng(31);
  int checked = 0, cleared = 0, longer = 0;
  for (int i = 0; i < 60; ++i) {
    MapSpec map = oracle::random_map(rng, 100.0, 8);
    if (map.obstacles.empty()) continue;
    const NavMesh full = build_navmesh(map, 1.0);
    MapSpec relaxed = map;
    relaxed.obstacles.erase(relaxed.obstacles.begin() + static_cast<long>(rng.below(relaxed.obstacles.size())));
    const NavMesh less = build_navmesh(relaxed, 1.0);
    for (int q = 0; q < 5; ++q) {
      const Vec2 s = oracle::random_free_point(full, rng, 100.0);
      const Vec2 g = oracle::random_free_point(full, rng, 100.0);
      const double before = shortest_length_estimate(full, s, g);
      const double after = shortest_length_estimate(less, s, g);
      ++checked;
      if (after > before + 1e-9) ++longer;
      if (less.segment_clear(s, g)) {
        ++cleared;
        EXPECT_LE(after, before + 1e-9);
      }
    }
  }
  EXPECT_GT(cleared, 50);
  // Measured on this fixed seed: 13 of 245 pairs get a longer estimate.
  EXPECT_EQ(checked, 245);
  EXPECT_EQ(longer, 13);
}
