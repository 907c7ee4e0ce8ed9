#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace hcm {

using Index = std::uint32_t;
using Triangle = std::array<Index, 3>;

struct BoundaryMarker {
  enum class Kind : std::uint8_t { Outer, Inclusion, Artificial };

  Kind kind = Kind::Outer;
  std::size_t inclusion = 0;  // 1..M when kind == Inclusion

  static BoundaryMarker outer() { return {Kind::Outer, 0}; }
  static BoundaryMarker of_inclusion(std::size_t m) { return {Kind::Inclusion, m}; }
  static BoundaryMarker artificial() { return {Kind::Artificial, 0}; }

  friend bool operator==(const BoundaryMarker& a, const BoundaryMarker& b) {
    return a.kind == b.kind && a.inclusion == b.inclusion;
  }
};

struct BoundaryEdge {
  std::array<Index, 2> v{};
  BoundaryMarker marker;
};

// Conforming triangulation with region labels. Interface edges between the
// background and inclusion m carry InclusionBoundary(m) markers even though
// they are interior to the full mesh.
struct Mesh {
  std::vector<Point> vertices;
  std::vector<Triangle> triangles;  // counterclockwise
  std::vector<std::size_t> tri_region;
  std::vector<BoundaryEdge> boundary_edges;
  double h_target = 0.0;

  std::size_t vertex_count() const noexcept { return vertices.size(); }
  std::size_t triangle_count() const noexcept { return triangles.size(); }
  std::size_t region_count() const;  // max region + 1
  double triangle_area(std::size_t t) const;
  Point centroid(std::size_t t) const;
};

using MeshPtr = std::shared_ptr<const Mesh>;

struct SubMesh {
  MeshPtr mesh;
  std::vector<Index> vertex_map;    // submesh vertex -> parent vertex
  std::vector<Index> triangle_map;  // submesh triangle -> parent triangle
};

struct MeshQuality {
  double min_angle_deg = 0.0;
  double max_aspect = 0.0;           // circumradius / (2 * inradius); 1 for equilateral
  double delaunay_pair_fraction = 0.0;  // interior edges with opposite angles summing to <= pi
  double max_circumradius = 0.0;
};

struct MeshOptions {
  double min_angle_deg = 20.0;
  std::size_t max_refinement_steps = 2'000'000;
};

Mesh generate_mesh(const Geometry& geom, double h, const MeshOptions& opts = {});

// Line-oriented text format with `vertices`, `triangles`, `boundary_edges`
// sections; see mesh_io.cpp for the grammar.
Mesh load_mesh(const std::string& path);
Mesh parse_mesh(const std::string& text);
void save_mesh(const Mesh& mesh, const std::string& path);
std::string format_mesh(const Mesh& mesh);

// Throws MeshInvalid when connectivity is not conforming or a triangle is not
// counterclockwise.
void check_mesh(const Mesh& mesh);

SubMesh extract_submesh(const MeshPtr& parent, const std::function<bool(Point)>& keep_centroid);
SubMesh extract_submesh(const MeshPtr& parent, const std::vector<std::size_t>& regions);
SubMesh extract_submesh_if(const MeshPtr& parent, const std::function<bool(std::size_t)>& keep_triangle);

MeshQuality mesh_quality(const Mesh& mesh);

struct VtkPointData {
  std::string name;
  const std::vector<double>* values;
};
void write_vtk(const Mesh& mesh, const std::string& path, const std::vector<VtkPointData>& point_data = {});

}  // namespace hcm
