#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "error.hpp"
#include "expansion.hpp"
#include "fem.hpp"
#include "support.hpp"

using namespace hcm;
using namespace hcm::testing;

namespace {

// Reference triangle (0,0), (1,0), (0,1) as a one-element mesh.
MeshPtr reference_triangle() {
  auto m = std::make_shared<Mesh>();
  m->vertices = {{0, 0}, {1, 0}, {0, 1}};
  m->triangles = {{0, 1, 2}};
  m->tri_region = {0};
  m->boundary_edges = {{{0, 1}, BoundaryMarker::outer()}, {{1, 2}, BoundaryMarker::outer()},
                       {{2, 0}, BoundaryMarker::outer()}};
  return m;
}

double sum(const RealVector& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("P1 element stiffness on the reference triangle") {
  const auto m = reference_triangle();
  const CsrMatrix k = assemble_stiffness(*m, Coefficient{});
  const double ref[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(k.at(i, j) == doctest::Approx(ref[i][j]));
  // Every diagonal entry is stored even when it would vanish.
  const RealVector w{0.0};
  const CsrMatrix zero = assemble_stiffness_weighted(*m, w);
  CHECK(zero.at(2, 2) == 0.0);
  CHECK(zero.diagonal().size() == 3);
}

TEST_CASE("load vector for f = x on the reference triangle") {
  const auto m = reference_triangle();
  const RealVector b = assemble_load(*m, [](Point p) { return p.x; });
  CHECK(b[0] == doctest::Approx(1.0 / 24.0));
  CHECK(b[1] == doctest::Approx(1.0 / 12.0));
  CHECK(b[2] == doctest::Approx(1.0 / 24.0));
  // Quadratic sources are integrated exactly: integral of x^2 over the triangle is 1/12.
  CHECK(sum(assemble_load(*m, [](Point p) { return p.x * p.x; })) == doctest::Approx(1.0 / 12.0));
  CHECK(sum(assemble_load(*m, 2.0)) == doctest::Approx(1.0));
  const RealVector lm = lumped_mass(*m);
  for (double v : lm) CHECK(v == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("stiffness rows sum to zero and the coefficient scales inclusion triangles") {
  const Geometry g = unit_disk({Circle{{0.2, 0.1}, 0.2}});
  const MeshPtr m = make_mesh(g, 0.05);
  const CsrMatrix k1 = assemble_stiffness(*m, Coefficient{1.0});
  const CsrMatrix k7 = assemble_stiffness(*m, Coefficient{7.0});
  const CsrMatrix k0 = assemble_region_stiffness(*m, 0);
  const CsrMatrix ki = assemble_region_stiffness(*m, 1);
  const RealVector ones(m->vertices.size(), 1.0);
  for (double v : k1 * ones) CHECK(std::abs(v) < 1e-12);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ud(-1, 1);
  RealVector x(m->vertices.size());
  for (double& v : x) v = ud(rng);
  const RealVector a = k7 * x, b0 = k0 * x, bi = ki * x;
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a[i] == doctest::Approx(b0[i] + 7.0 * bi[i]).epsilon(1e-12));
}

TEST_CASE("degenerate triangle is reported") {
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {2, 0}};
  m.triangles = {{0, 1, 2}};
  m.tri_region = {0};
  CHECK_THROWS_AS(assemble_stiffness(m, Coefficient{}), Error);
}

TEST_CASE("norms of x on the unit square are exact for linear fields") {
  const MeshPtr m = make_mesh(unit_square(), 0.1);
  const RealVector u = interpolate(*m, [](Point p) { return p.x; });
  CHECK(l2_norm(*m, u) == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));
  CHECK(h1_seminorm(*m, u) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h1_norm(*m, u) == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));
  const FeField f(m, u);
  CHECK(relative_h1_error(f, f, f) == 0.0);
  CHECK_THROWS_AS(relative_h1_error(f, f, FeField::zeros(m)), Error);
  CHECK_THROWS_AS(FeField(m, RealVector{1.0}), Error);
  RealVector bad = u;
  bad[0] = NAN;
  CHECK_THROWS_AS(FeField(m, bad), Error);
}

TEST_CASE("linear fields are reproduced exactly") {
  const MeshPtr m = make_mesh(unit_square(), 0.1);
  DirichletSpec spec;
  spec.outer([](Point p) { return 1.0 + 2.0 * p.x - 3.0 * p.y; });
  const FeField u = solve_poisson(m, Coefficient{}, [](Point) { return 0.0; }, spec, {1e-13, 0, Preconditioner::Jacobi});
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    const Point p = m->vertices[i];
    CHECK(u.values[i] == doctest::Approx(1.0 + 2.0 * p.x - 3.0 * p.y).epsilon(1e-9));
  }
}

TEST_CASE("manufactured solution converges at first order in H1") {
  const Exact ex{[](Point p) { return p.x + p.y * p.y; }, [](Point p) { return Point{1.0, 2.0 * p.y}; }};
  double err[2];
  const double hs[2] = {0.1, 0.05};
  for (int k = 0; k < 2; ++k) {
    const MeshPtr m = make_mesh(unit_square(), hs[k]);
    DirichletSpec spec;
    spec.outer(ex.u);
    const FeField u = solve_poisson(m, Coefficient{}, [](Point) { return -2.0; }, spec);
    err[k] = exact_error(*m, u.values, ex).relative_h1();
  }
  CHECK(err[1] < err[0]);
  CHECK(err[0] / err[1] == doctest::Approx(2.0).epsilon(0.25));
}

TEST_CASE("discrete maximum principle for harmonic fields") {
  const Geometry g = unit_disk({Circle{{0.3, 0.0}, 0.15}, Circle{{-0.3, 0.2}, 0.1}});
  const MeshPtr m = make_mesh(g, 0.04);
  DirichletSpec spec;
  spec.outer([](Point p) { return std::sin(3.0 * p.x) + p.y; });
  for (double eta : {1.0, 100.0}) {
    const FeField u = solve_poisson(m, Coefficient{eta}, [](Point) { return 0.0; }, spec, {1e-12, 0, Preconditioner::Jacobi});
    double bmin = INFINITY, bmax = -INFINITY;
    for (const auto& e : m->boundary_edges)
      if (e.marker.kind == BoundaryMarker::Kind::Outer)
        for (Index v : e.v) bmin = std::min(bmin, u.values[v]), bmax = std::max(bmax, u.values[v]);
    for (double v : u.values) {
      CHECK(v >= bmin - 1e-9);
      CHECK(v <= bmax + 1e-9);
    }
  }
}

TEST_CASE("Dirichlet boundary rules") {
  const Geometry g = unit_disk({Circle{{0.0, 0.0}, 0.3}});
  const MeshPtr m = make_mesh(g, 0.08);
  SUBCASE("interface markers inside the full mesh are ignored") {
    DirichletSpec spec;
    spec.outer([](Point) { return 2.0; });
    const auto data = dirichlet_data(*m, spec);
    std::size_t count = 0;
    for (char c : data.constrained) count += c != 0;
    std::size_t outer = 0;
    for (const auto& e : m->boundary_edges) outer += e.marker.kind == BoundaryMarker::Kind::Outer;
    CHECK(count == outer);  // closed polygon: as many vertices as edges
  }
  SUBCASE("missing rule on a true boundary is a configuration error") {
    const SubMesh bg = extract_submesh(m, std::vector<std::size_t>{0});
    DirichletSpec spec;
    spec.outer([](Point) { return 0.0; });
    try {
      dirichlet_data(*bg.mesh, spec);
      FAIL("expected configuration error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Configuration);
    }
  }
  SUBCASE("priority: outer beats inclusion beats artificial") {
    const SubMesh bg = extract_submesh(m, std::vector<std::size_t>{0});
    DirichletSpec spec;
    spec.outer([](Point) { return 1.0; }).inclusions([](Point) { return 5.0; }).inclusion(1, [](Point) { return 7.0; });
    const auto data = dirichlet_data(*bg.mesh, spec);
    for (std::size_t v = 0; v < bg.mesh->vertices.size(); ++v) {
      if (!data.constrained[v]) continue;
      const double r = norm(bg.mesh->vertices[v]);
      CHECK(data.values[v] == (r > 0.6 ? 1.0 : 7.0));
    }
  }
  SUBCASE("no Dirichlet vertices") {
    DirichletSpec spec;
    spec.natural_outer();
    CHECK_THROWS_AS(solve_poisson(m, Coefficient{}, [](Point) { return 1.0; }, spec), Error);
  }
}

TEST_CASE("reduced problem matches the DirichletSolver path") {
  const MeshPtr m = make_mesh(unit_square(), 0.1);
  DirichletSpec spec;
  spec.outer([](Point p) { return p.x * p.y; });
  const CsrMatrix a = assemble_stiffness(*m, Coefficient{});
  const RealVector b = assemble_load(*m, 1.0);
  const ReducedProblem rp = apply_dirichlet(a, b, m, spec);
  const auto r = cg_solve(rp.a, rp.b, {1e-13, 0, Preconditioner::Jacobi});
  const FeField u1 = rp.reconstruct(r.x);
  const FeField u2 = solve_poisson(m, Coefficient{}, [](Point) { return 1.0; }, spec, {1e-13, 0, Preconditioner::Jacobi});
  for (std::size_t i = 0; i < u1.values.size(); ++i) CHECK(u1.values[i] == doctest::Approx(u2.values[i]).epsilon(1e-10));
}

TEST_CASE("consistent flux: capacity identity, conservation and linearity") {
  const Geometry g = unit_disk({Circle{{0.0, 0.0}, 0.25}});
  const MeshPtr m = make_mesh(g, 0.04);
  const CharacteristicBasis cb = harmonic_characteristics(m);
  const FeField& chi = cb.chi[0];
  const auto zero = [](Point) { return 0.0; };
  const FluxData fd = boundary_flux_functional(*m, chi.values, zero, 1);
  const CsrMatrix k0 = assemble_region_stiffness(*m, 0);
  const double a11 = dot(chi.values, k0 * chi.values);
  // Total flux out of the inclusion equals the capacity a(chi, chi).
  CHECK(fd.total == doctest::Approx(a11).epsilon(1e-8));
  CHECK(fd.total == doctest::Approx(2.0 * std::numbers::pi / std::log(4.0)).epsilon(0.03));
  // Outer boundary carries the opposite flux: lambda over all constrained vertices sums to zero.
  const RealVector lam = k0 * chi.values;
  double outer = 0.0;
  std::vector<char> on_outer(m->vertices.size(), 0);
  for (const auto& e : m->boundary_edges)
    if (e.marker.kind == BoundaryMarker::Kind::Outer) on_outer[e.v[0]] = on_outer[e.v[1]] = 1;
  for (std::size_t v = 0; v < lam.size(); ++v)
    if (on_outer[v]) outer += lam[v];
  CHECK(outer == doctest::Approx(-fd.total).epsilon(1e-8));

  // Linearity in u for f = 0.
  RealVector v(m->vertices.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = m->vertices[i].x * m->vertices[i].x;
  RealVector w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = 2.0 * chi.values[i] - 3.0 * v[i];
  const FluxData fv = boundary_flux_functional(*m, v, zero, 1);
  const FluxData fw = boundary_flux_functional(*m, w, zero, 1);
  REQUIRE(fw.lambda.size() == fd.lambda.size());
  for (std::size_t i = 0; i < fw.lambda.size(); ++i)
    CHECK(fw.lambda[i] == doctest::Approx(2.0 * fd.lambda[i] - 3.0 * fv.lambda[i]).epsilon(1e-9));
  CHECK_THROWS_AS(boundary_flux_functional(*m, chi.values, zero, 2), Error);
}

TEST_CASE("field writers") {
  const MeshPtr m = make_mesh(unit_square(), 0.25);
  const FeField u(m, interpolate(*m, [](Point p) { return p.x + 0.5; }));
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = (dir / "hcm_field.csv").string();
  const auto vtk = (dir / "hcm_field.vtk").string();
  write_field_csv(u, csv);
  write_field_vtk(u, "u", vtk);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "index,x,y,value");
  std::size_t lines = 0;
  for (std::string s; std::getline(in, s);) ++lines;
  CHECK(lines == m->vertices.size());
  std::ifstream v(vtk);
  std::string first;
  std::getline(v, first);
  CHECK(first.rfind("# vtk DataFile", 0) == 0);
  std::filesystem::remove(csv);
  std::filesystem::remove(vtk);
  CHECK_THROWS_AS(write_field_csv(u, "/nonexistent/dir/u.csv"), Error);
}
