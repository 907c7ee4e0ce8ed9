#include "mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <unordered_map>

#include "error.hpp"

namespace hcm {
namespace {

std::uint64_t edge_key(Index a, Index b) {
  return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
}

struct EdgeUse {
  std::size_t count = 0;
  std::size_t first_tri = 0;
  bool forward = false;  // orientation in the first triangle: min -> max
};

std::unordered_map<std::uint64_t, EdgeUse> edge_uses(const Mesh& mesh) {
  std::unordered_map<std::uint64_t, EdgeUse> uses;
  uses.reserve(mesh.triangles.size() * 2);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      const Index a = tri[i], b = tri[(i + 1) % 3];
      auto& u = uses[edge_key(a, b)];
      if (u.count == 0) {
        u.first_tri = t;
        u.forward = a < b;
      } else if (u.count == 1 && u.forward == (a < b)) {
        throw Error(ErrorCode::MeshInvalid, "triangles " + std::to_string(u.first_tri) + " and " + std::to_string(t) +
                                                " traverse edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                                ") in the same direction");
      }
      ++u.count;
    }
  }
  return uses;
}

double angle_at(Point p, Point q, Point r) {
  // angle at p in triangle (p, q, r)
  const Point u = q - p, v = r - p;
  return std::atan2(std::abs(cross(u, v)), dot(u, v));
}

}  // namespace

std::size_t Mesh::region_count() const {
  std::size_t r = 0;
  for (auto reg : tri_region) r = std::max(r, reg + 1);
  return r;
}

double Mesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 * cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]);
}

Point Mesh::centroid(std::size_t t) const {
  const auto& tri = triangles[t];
  return (1.0 / 3.0) * (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]);
}

void check_mesh(const Mesh& mesh) {
  const std::size_t nv = mesh.vertices.size();
  if (mesh.tri_region.size() != mesh.triangles.size())
    throw Error(ErrorCode::MeshInvalid, "region label count does not match triangle count");
  std::vector<char> used(nv, 0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (Index v : mesh.triangles[t]) {
      if (v >= nv) throw Error(ErrorCode::MeshInvalid, "triangle " + std::to_string(t) + " references missing vertex " + std::to_string(v));
      used[v] = 1;
    }
    if (!(mesh.triangle_area(t) > 0.0))
      throw Error(ErrorCode::MeshInvalid, "triangle " + std::to_string(t) + " is degenerate or clockwise");
  }
  for (std::size_t v = 0; v < nv; ++v)
    if (!used[v]) throw Error(ErrorCode::MeshInvalid, "vertex " + std::to_string(v) + " is not used by any triangle");

  const auto uses = edge_uses(mesh);
  std::unordered_map<std::uint64_t, BoundaryMarker> marked;
  for (const auto& e : mesh.boundary_edges) {
    if (e.v[0] >= nv || e.v[1] >= nv) throw Error(ErrorCode::MeshInvalid, "boundary edge references missing vertex");
    auto it = uses.find(edge_key(e.v[0], e.v[1]));
    if (it == uses.end())
      throw Error(ErrorCode::MeshInvalid, "boundary edge (" + std::to_string(e.v[0]) + ", " + std::to_string(e.v[1]) +
                                              ") is not an edge of the triangulation");
    if (e.marker.kind != BoundaryMarker::Kind::Inclusion && it->second.count != 1)
      throw Error(ErrorCode::MeshInvalid, "outer/artificial edge (" + std::to_string(e.v[0]) + ", " +
                                              std::to_string(e.v[1]) + ") is shared by two triangles");
    if (e.marker.kind == BoundaryMarker::Kind::Inclusion && e.marker.inclusion == 0)
      throw Error(ErrorCode::MeshInvalid, "inclusion marker with index 0");
    marked.emplace(edge_key(e.v[0], e.v[1]), e.marker);
  }
  for (const auto& [key, use] : uses) {
    if (use.count > 2) throw Error(ErrorCode::MeshInvalid, "edge shared by more than two triangles (non-manifold)");
    if (use.count == 1 && !marked.count(key))
      throw Error(ErrorCode::MeshInvalid, "boundary edge (" + std::to_string(key >> 32) + ", " +
                                              std::to_string(key & 0xffffffffu) + ") has no marker");
  }
}

SubMesh extract_submesh_if(const MeshPtr& parent, const std::function<bool(std::size_t)>& keep_triangle) {
  const Mesh& p = *parent;
  std::vector<Index> tri_map;
  for (std::size_t t = 0; t < p.triangles.size(); ++t)
    if (keep_triangle(t)) tri_map.push_back(static_cast<Index>(t));
  if (tri_map.empty()) throw Error(ErrorCode::EmptySelection, "submesh selection contains no triangles");

  constexpr Index kNone = std::numeric_limits<Index>::max();
  std::vector<Index> local(p.vertices.size(), kNone);
  for (Index t : tri_map)
    for (Index v : p.triangles[t]) local[v] = 0;
  std::vector<Index> vertex_map;
  for (std::size_t v = 0; v < p.vertices.size(); ++v)
    if (local[v] != kNone) {
      local[v] = static_cast<Index>(vertex_map.size());
      vertex_map.push_back(static_cast<Index>(v));
    }

  auto sub = std::make_shared<Mesh>();
  sub->h_target = p.h_target;
  sub->vertices.reserve(vertex_map.size());
  for (Index v : vertex_map) sub->vertices.push_back(p.vertices[v]);
  for (Index t : tri_map) {
    const auto& tri = p.triangles[t];
    sub->triangles.push_back({local[tri[0]], local[tri[1]], local[tri[2]]});
    sub->tri_region.push_back(p.tri_region[t]);
  }

  const auto uses = edge_uses(*sub);
  std::unordered_map<std::uint64_t, bool> has_marker;
  for (const auto& e : p.boundary_edges) {
    const Index a = local[e.v[0]], b = local[e.v[1]];
    if (a == kNone || b == kNone) continue;
    if (!uses.count(edge_key(a, b))) continue;
    sub->boundary_edges.push_back({{a, b}, e.marker});
    has_marker[edge_key(a, b)] = true;
  }
  for (const auto& tri : sub->triangles)
    for (int i = 0; i < 3; ++i) {
      const Index a = tri[i], b = tri[(i + 1) % 3];
      const auto key = edge_key(a, b);
      if (uses.at(key).count == 1 && !has_marker.count(key)) {
        sub->boundary_edges.push_back({{a, b}, BoundaryMarker::artificial()});
        has_marker[key] = true;
      }
    }
  return SubMesh{std::move(sub), std::move(vertex_map), std::move(tri_map)};
}

SubMesh extract_submesh(const MeshPtr& parent, const std::function<bool(Point)>& keep_centroid) {
  const Mesh& p = *parent;
  return extract_submesh_if(parent, [&](std::size_t t) { return keep_centroid(p.centroid(t)); });
}

SubMesh extract_submesh(const MeshPtr& parent, const std::vector<std::size_t>& regions) {
  const Mesh& p = *parent;
  return extract_submesh_if(parent, [&](std::size_t t) {
    return std::find(regions.begin(), regions.end(), p.tri_region[t]) != regions.end();
  });
}

MeshQuality mesh_quality(const Mesh& mesh) {
  MeshQuality q;
  q.min_angle_deg = 180.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    const double min_angle = std::min({angle_at(a, b, c), angle_at(b, c, a), angle_at(c, a, b)});
    q.min_angle_deg = std::min(q.min_angle_deg, min_angle * 180.0 / std::numbers::pi);
    const double la = distance(b, c), lb = distance(c, a), lc = distance(a, b);
    const double area = mesh.triangle_area(t);
    const double circum = la * lb * lc / (4.0 * area);
    const double inr = 2.0 * area / (la + lb + lc);
    q.max_aspect = std::max(q.max_aspect, circum / (2.0 * inr));
    q.max_circumradius = std::max(q.max_circumradius, circum);
  }

  // Opposite-angle sums over interior edges.
  std::unordered_map<std::uint64_t, double> opposite;
  std::size_t interior = 0, delaunay = 0;
  for (const auto& tri : mesh.triangles)
    for (int i = 0; i < 3; ++i) {
      const Index a = tri[(i + 1) % 3], b = tri[(i + 2) % 3];
      const double ang = angle_at(mesh.vertices[tri[i]], mesh.vertices[a], mesh.vertices[b]);
      auto [it, fresh] = opposite.emplace(edge_key(a, b), ang);
      if (!fresh) {
        ++interior;
        if (it->second + ang <= std::numbers::pi * (1.0 + 1e-12)) ++delaunay;
      }
    }
  q.delaunay_pair_fraction = interior == 0 ? 1.0 : static_cast<double>(delaunay) / static_cast<double>(interior);
  if (mesh.triangles.empty()) q.min_angle_deg = 0.0;
  return q;
}

void write_vtk(const Mesh& mesh, const std::string& path, const std::vector<VtkPointData>& point_data) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  std::fprintf(f, "# vtk DataFile Version 3.0\nhicomsfem\nASCII\nDATASET UNSTRUCTURED_GRID\n");
  std::fprintf(f, "POINTS %zu double\n", mesh.vertices.size());
  for (Point p : mesh.vertices) std::fprintf(f, "%.17g %.17g 0\n", p.x, p.y);
  std::fprintf(f, "CELLS %zu %zu\n", mesh.triangles.size(), 4 * mesh.triangles.size());
  for (const auto& t : mesh.triangles) std::fprintf(f, "3 %u %u %u\n", t[0], t[1], t[2]);
  std::fprintf(f, "CELL_TYPES %zu\n", mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) std::fprintf(f, "5\n");
  std::fprintf(f, "CELL_DATA %zu\nSCALARS region int 1\nLOOKUP_TABLE default\n", mesh.triangles.size());
  for (auto r : mesh.tri_region) std::fprintf(f, "%zu\n", r);
  if (!point_data.empty()) {
    std::fprintf(f, "POINT_DATA %zu\n", mesh.vertices.size());
    for (const auto& pd : point_data) {
      if (pd.values->size() != mesh.vertices.size()) {
        std::fclose(f);
        throw Error(ErrorCode::InvalidArgument, "point data '" + pd.name + "' does not match the vertex count");
      }
      std::fprintf(f, "SCALARS %s double 1\nLOOKUP_TABLE default\n", pd.name.c_str());
      for (double v : *pd.values) std::fprintf(f, "%.12g\n", v);
    }
  }
  if (std::fclose(f) != 0) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

}  // namespace hcm
