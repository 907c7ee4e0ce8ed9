#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "error.hpp"
#include "layout.hpp"
#include "mesh.hpp"
#include "predicates.hpp"
#include "support.hpp"

using namespace hcm;
using hcm::testing::make_mesh;
using hcm::testing::unit_disk;
using hcm::testing::unit_square;

TEST_CASE("point classification and distances") {
  const Geometry g = unit_disk({Circle{{0.5, 0.0}, 0.1}, Polygon{{{-0.6, -0.1}, {-0.4, -0.1}, {-0.4, 0.1}, {-0.6, 0.1}}}});
  CHECK(g.classify_point({0.5, 0.05}) == RegionId{1});
  CHECK(g.classify_point({0.6, 0.0}) == RegionId{1});  // closed set
  CHECK(g.classify_point({-0.5, 0.0}) == RegionId{2});
  CHECK(g.classify_point({0.0, 0.0}) == RegionId{0});
  CHECK_FALSE(g.in_domain({1.1, 0.0}));
  CHECK(g.distance_to_inclusion(RegionId{1}, {0.8, 0.0}) == doctest::Approx(0.2));
  CHECK(g.distance_to_inclusion(RegionId{1}, {0.5, 0.0}) == 0.0);
  CHECK(g.distance_to_inclusion(RegionId{2}, {-0.5, 0.3}) == doctest::Approx(0.2));
  CHECK(g.distance_to_outer_boundary({0.0, 0.0}) == doctest::Approx(1.0));
  CHECK(g.diameter() == doctest::Approx(2.0));
  CHECK_THROWS_AS(g.inclusion(RegionId{3}), Error);

  const auto nb = g.delta_neighborhood(RegionId{1}, 0.05);
  CHECK(nb({0.64, 0.0}));
  CHECK_FALSE(nb({0.66, 0.0}));
  const auto strip = g.boundary_strip(0.1);
  CHECK(strip({0.95, 0.0}));
  CHECK_FALSE(strip({0.85, 0.0}));
}

TEST_CASE("geometry validation") {
  CHECK(unit_disk().validate().ok);
  const auto overlap = unit_disk({Circle{{0.0, 0.0}, 0.2}, Circle{{0.3, 0.0}, 0.2}}).validate();
  CHECK_FALSE(overlap.ok);
  CHECK(overlap.closest_a == 1);
  CHECK(overlap.closest_b == 2);
  CHECK_FALSE(unit_disk({Circle{{0.95, 0.0}, 0.1}}).validate().ok);
  CHECK_THROWS_AS(unit_disk({Circle{{0.95, 0.0}, 0.1}}).require_valid(), Error);
  CHECK_THROWS_AS(Geometry(Circle{{0, 0}, -1.0}, {}), Error);
  // Clockwise input is normalized.
  const Geometry cw(Polygon{{{0, 0}, {0, 1}, {1, 1}, {1, 0}}}, {});
  CHECK(cw.in_domain({0.5, 0.5}));
}

TEST_CASE("geometry json round trip") {
  const Geometry g = unit_disk({Circle{{0.25, -0.5}, 0.07}});
  const Geometry back = geometry_from_json(geometry_to_json(g));
  CHECK(back.inclusion_count() == 1);
  CHECK(geometry_to_json(back) == geometry_to_json(g));
  CHECK_THROWS_AS(geometry_from_json("{\"domain\": 3}"), Error);
  CHECK_THROWS_AS(geometry_from_json("not json"), Error);
}

TEST_CASE("exact predicates") {
  CHECK(predicates::orient2d({0, 0}, {1, 0}, {0, 1}) > 0);
  CHECK(predicates::orient2d({0, 0}, {1, 0}, {2, 0}) == 0);
  // Nearly collinear points that defeat naive floating point.
  const Point a{0.5, 0.5}, b{12.0, 12.0}, c{24.0, 24.0};
  CHECK(predicates::orient2d(a, b, c) == 0);
  CHECK(predicates::orient2d(a, b, {24.0, std::nextafter(24.0, 25.0)}) > 0);
  CHECK(predicates::incircle({0, 0}, {1, 0}, {0, 1}, {1, 1}) == 0);
  CHECK(predicates::incircle({0, 0}, {1, 0}, {0, 1}, {0.5, 0.5}) > 0);
}

TEST_CASE("layout generator") {
  const Geometry g = make_layout(36, 0.07, LayoutPattern::Rings, 1);
  CHECK(g.inclusion_count() == 36);
  const auto rep = g.validate();
  CHECK(rep.ok);
  CHECK(rep.min_separation >= 0.035);
  CHECK(geometry_to_json(g) == geometry_to_json(make_layout(36, 0.07, LayoutPattern::Rings, 1)));
  CHECK(geometry_to_json(g) != geometry_to_json(make_layout(36, 0.07, LayoutPattern::Rings, 2)));
  CHECK(make_layout(0, 0.07, LayoutPattern::Rings, 1).inclusion_count() == 0);
  CHECK(make_layout(60, 0.07, LayoutPattern::Rings, 1).validate().min_separation >= 0.035);
  CHECK(make_layout(20, 0.07, LayoutPattern::JitteredGrid, 5).validate().ok);
  CHECK_THROWS_AS(make_layout(400, 0.07, LayoutPattern::Rings, 1), Error);
  CHECK_THROWS_AS(parse_layout_pattern("hexagonal"), Error);
}

TEST_CASE("generated meshes are conforming and well shaped") {
  const Geometry g = unit_disk({Circle{{0.3, 0.1}, 0.15}, Circle{{-0.4, -0.2}, 0.1}});
  const MeshPtr m = make_mesh(g, 0.04);
  CHECK_NOTHROW(check_mesh(*m));
  const auto q = mesh_quality(*m);
  CHECK(q.min_angle_deg >= 20.0 - 1e-9);
  CHECK(q.delaunay_pair_fraction > 0.95);
  CHECK(m->region_count() == 3);

  // Region labels agree with the analytic classification at centroids.
  std::size_t mismatches = 0;
  double area[3] = {0, 0, 0};
  for (std::size_t t = 0; t < m->triangles.size(); ++t) {
    if (g.classify_point(m->centroid(t)).value != m->tri_region[t]) ++mismatches;
    area[m->tri_region[t]] += m->triangle_area(t);
  }
  CHECK(mismatches == 0);
  CHECK(area[1] == doctest::Approx(std::numbers::pi * 0.15 * 0.15).epsilon(0.01));
  CHECK(area[0] + area[1] + area[2] == doctest::Approx(std::numbers::pi).epsilon(0.005));

  // Boundary markers: outer edges lie on the unit circle, inclusion edges on their circle.
  std::size_t outer = 0, incl = 0;
  for (const auto& e : m->boundary_edges) {
    const Point p = m->vertices[e.v[0]];
    if (e.marker.kind == BoundaryMarker::Kind::Outer) {
      ++outer;
      CHECK(norm(p) == doctest::Approx(1.0).epsilon(1e-9));
    } else if (e.marker.kind == BoundaryMarker::Kind::Inclusion) {
      ++incl;
      const Circle& c = std::get<Circle>(g.inclusion(RegionId{e.marker.inclusion}));
      CHECK(distance(p, c.center) == doctest::Approx(c.radius).epsilon(1e-9));
    }
  }
  CHECK(outer > 0);
  CHECK(incl > 0);
}

TEST_CASE("mesh generation errors") {
  CHECK_THROWS_AS(generate_mesh(unit_disk(), -1.0), Error);
  CHECK_THROWS_AS(generate_mesh(unit_disk({Circle{{0, 0}, 0.2}, Circle{{0.3, 0}, 0.2}}), 0.05), Error);
  CHECK_THROWS_AS(generate_mesh(unit_disk({Circle{{0, 0}, 0.07}}), 0.1), Error);
}

TEST_CASE("mesh text format round trip and parse errors") {
  const MeshPtr m = make_mesh(unit_disk({Circle{{0.0, 0.0}, 0.3}}), 0.1);
  const Mesh back = parse_mesh(format_mesh(*m));
  CHECK(back.vertices.size() == m->vertices.size());
  CHECK(back.triangles == m->triangles);
  CHECK(back.tri_region == m->tri_region);
  CHECK(back.boundary_edges.size() == m->boundary_edges.size());
  CHECK(format_mesh(back) == format_mesh(*m));

  const auto path = (std::filesystem::temp_directory_path() / "hcm_test_mesh.txt").string();
  save_mesh(*m, path);
  CHECK(load_mesh(path).triangles.size() == m->triangles.size());
  std::remove(path.c_str());

  try {
    parse_mesh("vertices 2\n0 0\n");
    FAIL("expected parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() >= 1);
  }
  CHECK_THROWS_AS(load_mesh("/nonexistent/mesh.txt"), Error);
}

TEST_CASE("check_mesh detects broken connectivity") {
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  m.triangles = {{0, 1, 2}, {1, 3, 2}};
  m.tri_region = {0, 0};
  for (auto e : {std::array<Index, 2>{0, 1}, {1, 3}, {3, 2}, {2, 0}}) m.boundary_edges.push_back({e, BoundaryMarker::outer()});
  CHECK_NOTHROW(check_mesh(m));
  Mesh cw = m;
  cw.triangles[0] = {0, 2, 1};
  CHECK_THROWS_AS(check_mesh(cw), Error);
  Mesh bad = m;
  bad.triangles[1] = {1, 3, 7};
  CHECK_THROWS_AS(check_mesh(bad), Error);
}

TEST_CASE("extracted submeshes stay conforming and map back to the parent") {
  const Geometry g = make_layout(12, 0.07, LayoutPattern::Rings, 3);
  const MeshPtr m = make_mesh(g, 0.03);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(0.02, 0.5);
  for (int trial = 0; trial < 6; ++trial) {
    const double delta = ud(rng);
    const std::size_t inc = 1 + static_cast<std::size_t>(trial) % g.inclusion_count();
    const auto pred = g.delta_neighborhood(RegionId{inc}, delta);
    const SubMesh s = extract_submesh_if(m, [&](std::size_t t) { return m->tri_region[t] == 0 && pred(m->centroid(t)); });
    CHECK_NOTHROW(check_mesh(*s.mesh));
    CHECK(s.triangle_map.size() == s.mesh->triangles.size());
    for (std::size_t t = 0; t < s.mesh->triangles.size(); ++t)
      for (int k = 0; k < 3; ++k)
        CHECK(s.mesh->vertices[s.mesh->triangles[t][k]] == m->vertices[m->triangles[s.triangle_map[t]][k]]);
    // The submesh boundary has artificial markers where it cuts the background.
    bool artificial = false;
    for (const auto& e : s.mesh->boundary_edges) artificial |= e.marker.kind == BoundaryMarker::Kind::Artificial;
    CHECK(artificial);
  }
  const SubMesh bg = extract_submesh(m, std::vector<std::size_t>{0});
  CHECK_NOTHROW(check_mesh(*bg.mesh));
  CHECK_THROWS_AS(extract_submesh_if(m, [](std::size_t) { return false; }), Error);
}
