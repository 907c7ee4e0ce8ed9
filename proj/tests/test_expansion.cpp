#include <cmath>
#include <numbers>

#include "doctest.h"
#include "error.hpp"
#include "expansion.hpp"
#include "localization.hpp"
#include "support.hpp"

using namespace hcm;
using namespace hcm::testing;

namespace {

const ScalarFunction f_one = [](Point) { return 1.0; };
const ScalarFunction g_quad = [](Point p) { return p.x + p.y * p.y; };

struct Fixture {
  Geometry geom = make_layout(8, 0.1, LayoutPattern::Rings, 4);
  MeshPtr mesh = make_mesh(geom, 0.04);
};

const Fixture& fixture() {
  static const Fixture fx;
  return fx;
}

FeField fine_solve(const MeshPtr& m, double eta) {
  DirichletSpec spec;
  spec.outer(g_quad);
  return solve_poisson(m, Coefficient{eta}, f_one, spec, {1e-13, 100000, Preconditioner::Jacobi});
}

}  // namespace

TEST_CASE("leading term is constant on every inclusion and Galerkin orthogonal") {
  const auto& fx = fixture();
  Expansion ex(fx.mesh, f_one, g_quad);
  REQUIRE(ex.inclusion_count() == 8);
  const FeField& u0 = ex.term(0);
  for (std::size_t m = 1; m <= 8; ++m) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t t = 0; t < fx.mesh->triangles.size(); ++t)
      if (fx.mesh->tri_region[t] == m)
        for (Index v : fx.mesh->triangles[t]) lo = std::min(lo, u0.values[v]), hi = std::max(hi, u0.values[v]);
    CHECK(hi - lo == 0.0);
    CHECK(lo == doctest::Approx(ex.constants(0)[m - 1]));
  }
  for (double r : ex.galerkin_residuals()) CHECK(std::abs(r) <= 1e-10);
  CHECK(ex.geom_system().asymmetry() == 0.0);
  CHECK(ex.geom_system().min_eigenvalue() > 0.0);
  // u00 vanishes on the inclusions and matches g on the outer boundary.
  const FeField& u00 = ex.boundary_corrector();
  for (std::size_t t = 0; t < fx.mesh->triangles.size(); ++t)
    if (fx.mesh->tri_region[t] != 0)
      for (Index v : fx.mesh->triangles[t]) CHECK(u00.values[v] == 0.0);
  for (const auto& e : fx.mesh->boundary_edges)
    if (e.marker.kind == BoundaryMarker::Kind::Outer)
      CHECK(u00.values[e.v[0]] == doctest::Approx(g_quad(fx.mesh->vertices[e.v[0]])));
}

TEST_CASE("partial sums approach the fine solution at the predicted rate") {
  const auto& fx = fixture();
  Expansion ex(fx.mesh, f_one, g_quad);
  double rem[2][3];
  const double etas[2] = {1e2, 1e3};
  for (int k = 0; k < 2; ++k) {
    const FeField u = fine_solve(fx.mesh, etas[k]);
    for (std::size_t J = 0; J < 3; ++J) rem[k][J] = relative_h1_error(u, ex.partial_sum(etas[k], J), u);
    for (std::size_t J = 1; J < 3; ++J) CHECK(rem[k][J] < rem[k][J - 1]);
  }
  // Remainder after J terms scales like eta^-(J+1).
  for (std::size_t J = 0; J < 2; ++J) {
    const double observed = std::log10(rem[0][J] / rem[1][J]);
    CHECK(observed == doctest::Approx(static_cast<double>(J + 1)).epsilon(0.15));
  }
}

TEST_CASE("terms do not depend on eta and decay diagnostics scale with 1/eta") {
  const auto& fx = fixture();
  Expansion a(fx.mesh, f_one, g_quad), b(fx.mesh, f_one, g_quad);
  CHECK(a.terms_needed(1e6, 1e-8) <= 2);
  b.compute_terms(4);
  for (std::size_t j = 0; j <= 2; ++j) CHECK(a.term(j).values == b.term(j).values);
  const DecayFit d1 = a.decay_diagnostics(10.0, 5), d2 = a.decay_diagnostics(20.0, 5);
  CHECK(d2.rho / d1.rho == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(d1.r2 > 0.99);
  CHECK(d1.scaled_norms.size() == 6);
  for (std::size_t j = 1; j <= 3; ++j) CHECK(a.compatibility_defect(j) < 1e-6);

  std::size_t prev = 1000;
  for (double eta : {10.0, 1e2, 1e4, 1e8}) {
    const std::size_t n = a.terms_needed(eta, 1e-8);
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("expansion error handling") {
  const auto& fx = fixture();
  Expansion ex(fx.mesh, f_one, g_quad);
  CHECK_THROWS_AS(ex.partial_sum(0.0, 1), Error);
  CHECK_THROWS_AS(ex.terms_needed(10.0, 0.0), Error);
  CHECK_THROWS_AS(ex.decay_diagnostics(10.0, 1), Error);
  try {
    ex.terms_needed(0.5, 1e-8, 10);
    FAIL("expected non-convergence for eta below 1");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonConvergentExpansion);
    CHECK(std::string(e.what()).find("term ratio") != std::string::npos);
  }
  CHECK_THROWS_AS(Expansion(nullptr, f_one, g_quad), Error);
  CHECK_THROWS_AS(harmonic_characteristics(make_mesh(unit_disk(), 0.1)), Error);
}

TEST_CASE("source in every inclusion step changes only later terms") {
  const auto& fx = fixture();
  ExpansionOptions opt;
  opt.source_in_all_steps = true;
  Expansion a(fx.mesh, f_one, g_quad), b(fx.mesh, f_one, g_quad, opt);
  CHECK(a.term(1).values == b.term(1).values);
  CHECK(relative_h1_error(a.term(2), b.term(2), a.term(2)) > 1e-6);
}

TEST_CASE("no source and zero boundary data give a vanishing expansion") {
  const auto& fx = fixture();
  Expansion ex(fx.mesh, [](Point) { return 0.0; }, [](Point) { return 0.0; });
  CHECK(ex.term_norm(0) == 0.0);
  CHECK(ex.terms_needed(10.0, 1e-8) == 0);
}

TEST_CASE("annulus characteristic function and capacity") {
  const double r0 = 0.25;
  const MeshPtr m = make_mesh(unit_disk({Circle{{0, 0}, r0}}), 0.04);
  const CharacteristicBasis cb = harmonic_characteristics(m);
  const Exact ex{[&](Point p) { return norm(p) <= r0 ? 1.0 : std::log(norm(p)) / std::log(r0); },
                 [&](Point p) {
                   const double r = norm(p);
                   if (r <= r0) return Point{0, 0};
                   const double s = 1.0 / (std::log(r0) * r * r);
                   return Point{s * p.x, s * p.y};
                 }};
  CHECK(exact_error(*m, cb.chi[0].values, ex).relative_h1() < 0.05);
  const CsrMatrix k0 = assemble_region_stiffness(*m, 0);
  const double a11 = dot(cb.chi[0].values, k0 * cb.chi[0].values);
  CHECK(a11 == doctest::Approx(2.0 * std::numbers::pi / std::log(1.0 / r0)).epsilon(0.03));
}

TEST_CASE("localized leading term with delta beyond the diameter reproduces the global one") {
  const auto& fx = fixture();
  Expansion ex(fx.mesh, f_one, g_quad);
  const auto loc = localized_u0(fx.mesh, fx.geom, 2.5, f_one, g_quad);
  for (std::size_t m = 0; m < 8; ++m) CHECK(loc.c[m] == doctest::Approx(ex.constants(0)[m]).epsilon(1e-9));
  CHECK(relative_h1_error(ex.term(0), loc.u0, ex.term(0)) < 1e-9);
  CHECK((loc.a - ex.geom_system().matrix()).cwiseAbs().maxCoeff() < 1e-9);

  DeltaSweep sweep(ex, fx.geom, f_one, g_quad);
  const DeltaRow row = sweep.evaluate(2.5);
  CHECK(row.ok);
  CHECK(row.e_uc <= 1e-8);
  CHECK(row.chi_max_diff < 1e-9);

  LocalizationOptions off;
  off.corrector_coupling = false;
  DeltaSweep uncoupled(ex, fx.geom, f_one, g_quad, off);
  CHECK(uncoupled.evaluate(2.5).e_uc > 1e-3);
}

TEST_CASE("localized characteristic functions obey the maximum principle and shrink with delta") {
  const auto& fx = fixture();
  Expansion ex(fx.mesh, f_one, g_quad);
  double prev = INFINITY;
  for (double delta : {0.15, 0.3, 0.6}) {
    const LocalBasis lb = localized_characteristics(fx.mesh, fx.geom, delta);
    for (const auto& chi : lb.chi)
      for (double v : chi.values) {
        CHECK(v >= -1e-12);
        CHECK(v <= 1.0 + 1e-12);
      }
    for (const auto& r : lb.regions) CHECK_NOTHROW(check_mesh(*r.mesh));
    const auto loc = localized_u0(fx.mesh, fx.geom, delta, f_one, g_quad);
    CHECK((loc.a - loc.a.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(loc.a).eigenvalues()(0) > 0.0);
    const double e = relative_h1_error(ex.term(0), loc.u0, ex.term(0));
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("delta sweep error rows") {
  const auto& fx = fixture();
  Expansion ex(fx.mesh, f_one, g_quad);
  DeltaSweep sweep(ex, fx.geom, f_one, g_quad);
  CHECK_THROWS_AS(sweep.run({}), Error);
  const auto rows = sweep.run({0.001, 0.3});
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].ok);
  CHECK(std::isnan(rows[0].e_u0));
  CHECK(rows[0].error.find("no triangles") != std::string::npos);
  CHECK(rows[1].ok);
  CHECK_THROWS_AS(localized_characteristics(fx.mesh, fx.geom, -1.0), Error);
  try {
    localized_boundary_corrector(fx.mesh, fx.geom, 1e-4, f_one, g_quad);
    FAIL("expected empty selection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySelection);
  }
}
