#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "fem.hpp"
#include "geometry.hpp"
#include "layout.hpp"
#include "mesh.hpp"

namespace hcm::testing {

inline Geometry unit_square() {
  return Geometry(Polygon{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}, {});
}

inline Geometry unit_disk(std::vector<Shape> inclusions = {}) {
  return Geometry(Circle{{0, 0}, 1.0}, std::move(inclusions));
}

inline MeshPtr make_mesh(const Geometry& g, double h) { return std::make_shared<const Mesh>(generate_mesh(g, h)); }

struct Exact {
  std::function<double(Point)> u;
  std::function<Point(Point)> grad;
};

// Squared L2 and H1-seminorm errors of a P1 field against a smooth function,
// degree-5 seven-point rule per triangle.
struct ErrorParts {
  double l2_sq = 0.0, semi_sq = 0.0, ref_l2_sq = 0.0, ref_semi_sq = 0.0;
  double relative_h1() const { return std::sqrt((l2_sq + semi_sq) / (ref_l2_sq + ref_semi_sq)); }
};

inline ErrorParts exact_error(const Mesh& mesh, std::span<const double> uh, const Exact& ex) {
  static const double a1 = 0.059715871789770, b1 = 0.470142064105115;
  static const double a2 = 0.797426985353087, b2 = 0.101286507323456;
  static const double w0 = 0.225, w1 = 0.132394152788506, w2 = 0.125939180544827;
  const double bary[7][3] = {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1},
                             {a2, b2, b2},                {b2, a2, b2}, {b2, b2, a2}};
  const double w[7] = {w0, w1, w1, w1, w2, w2, w2};
  ErrorParts out;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point p0 = mesh.vertices[tri[0]], p1 = mesh.vertices[tri[1]], p2 = mesh.vertices[tri[2]];
    const double area = mesh.triangle_area(t);
    const double det = 2.0 * area;
    // Gradient of the P1 field on this triangle.
    const double b[3] = {p1.y - p2.y, p2.y - p0.y, p0.y - p1.y};
    const double c[3] = {p2.x - p1.x, p0.x - p2.x, p1.x - p0.x};
    Point gh{0, 0};
    for (int i = 0; i < 3; ++i) gh = gh + Point{b[i] * uh[tri[i]] / det, c[i] * uh[tri[i]] / det};
    for (int q = 0; q < 7; ++q) {
      const Point x = bary[q][0] * p0 + bary[q][1] * p1 + bary[q][2] * p2;
      const double vh = bary[q][0] * uh[tri[0]] + bary[q][1] * uh[tri[1]] + bary[q][2] * uh[tri[2]];
      const double v = ex.u(x);
      const Point gv = ex.grad(x);
      out.l2_sq += w[q] * area * (v - vh) * (v - vh);
      out.semi_sq += w[q] * area * dot(gv - gh, gv - gh);
      out.ref_l2_sq += w[q] * area * v * v;
      out.ref_semi_sq += w[q] * area * dot(gv, gv);
    }
  }
  return out;
}

inline RealVector interpolate(const Mesh& mesh, const std::function<double(Point)>& f) {
  RealVector v(mesh.vertices.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(mesh.vertices[i]);
  return v;
}

}  // namespace hcm::testing
