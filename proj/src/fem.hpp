#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "linalg.hpp"
#include "mesh.hpp"

namespace hcm {

using ScalarFunction = std::function<double(Point)>;

// Sum of coef * x^px * y^py. Used for sources and boundary data read from
// configuration files.
struct Polynomial {
  struct Term {
    double coef = 0.0;
    int px = 0;
    int py = 0;
  };
  std::vector<Term> terms;

  static Polynomial constant(double c) { return Polynomial{{{c, 0, 0}}}; }
  double operator()(Point p) const;
  bool is_zero() const;
};

// kappa = 1 on region 0 and eta on every inclusion region.
struct Coefficient {
  double eta = 1.0;
  double value(std::size_t region) const { return region == 0 ? 1.0 : eta; }
};

// P1 field on a mesh, one value per vertex.
struct FeField {
  MeshPtr mesh;
  RealVector values;

  FeField() = default;
  FeField(MeshPtr m, RealVector v);
  static FeField zeros(MeshPtr m);
};

CsrMatrix assemble_stiffness(const Mesh& mesh, const Coefficient& coeff);
// Per-triangle weights instead of a region coefficient; weight 0 drops the triangle.
CsrMatrix assemble_stiffness_weighted(const Mesh& mesh, std::span<const double> tri_weight);
// Stiffness with kappa = 1 on the triangles of the given region only.
CsrMatrix assemble_region_stiffness(const Mesh& mesh, std::size_t region);

// Edge-midpoint rule, exact for quadratic f.
RealVector assemble_load(const Mesh& mesh, const ScalarFunction& f);
RealVector assemble_load(const Mesh& mesh, double f);
RealVector assemble_region_load(const Mesh& mesh, const ScalarFunction& f, std::size_t region);
// Row sums of the consistent mass matrix (area / 3 per incident triangle).
RealVector lumped_mass(const Mesh& mesh);

// Boundary rules per marker. Markers on edges interior to the mesh (inclusion
// interfaces of a full mesh) are ignored. Inclusion-specific rules take precedence over the
// kind-wide inclusion rule. A vertex touched by several Dirichlet markers takes
// the value of the highest priority kind: outer, then inclusion, then
// artificial.
class DirichletSpec {
public:
  DirichletSpec& outer(ScalarFunction g);
  DirichletSpec& inclusions(ScalarFunction g);
  DirichletSpec& inclusion(std::size_t m, ScalarFunction g);
  DirichletSpec& artificial(ScalarFunction g);
  DirichletSpec& natural_outer();
  DirichletSpec& natural_inclusions();
  DirichletSpec& natural_artificial();

  // Dirichlet value of one marker, nullopt for natural markers. Throws
  // Configuration when no rule covers the marker.
  std::optional<double> value(const BoundaryMarker& marker, Point p) const;

private:
  struct Rule {
    bool natural = false;
    ScalarFunction g;
  };
  std::optional<Rule> outer_, inclusions_, artificial_;
  std::map<std::size_t, Rule> per_inclusion_;
  const Rule* find(const BoundaryMarker& marker) const;
};

// Constrained-vertex mask and values implied by a spec on a mesh.
struct DirichletData {
  std::vector<char> constrained;
  RealVector values;  // 0 on free vertices
};
DirichletData dirichlet_data(const Mesh& mesh, const DirichletSpec& spec);

// Symmetric elimination of constrained vertices. Built once per (matrix,
// constrained set) and reusable for any right-hand side and boundary values.
class DirichletSolver {
public:
  DirichletSolver(const CsrMatrix& a, std::vector<char> constrained);

  std::size_t free_count() const noexcept { return free_.size(); }
  const std::vector<Index>& free_vertices() const noexcept { return free_; }
  const CsrMatrix& reduced_matrix() const noexcept { return a_ff_; }

  // Reduced right-hand side b_f - A_fc g for full-length b and lifting g.
  RealVector reduced_rhs(std::span<const double> b, std::span<const double> lifting) const;
  // Full-length vector: lifting on constrained vertices, x on free ones.
  RealVector reconstruct(std::span<const double> x_reduced, std::span<const double> lifting) const;
  RealVector solve(std::span<const double> b, std::span<const double> lifting, const CgOptions& opts = {}) const;

private:
  std::size_t n_;
  std::vector<char> constrained_;
  std::vector<Index> free_;
  CsrMatrix a_ff_;
  CsrMatrix a_fc_;  // rows: free, columns: full numbering
};

struct ReducedProblem {
  CsrMatrix a;
  RealVector b;
  std::vector<Index> free;  // reduced index -> vertex
  FeField lifting;

  FeField reconstruct(std::span<const double> x) const;
};

ReducedProblem apply_dirichlet(const CsrMatrix& a, std::span<const double> b, const MeshPtr& mesh,
                               const DirichletSpec& spec);

FeField solve_poisson(const MeshPtr& mesh, const Coefficient& coeff, const ScalarFunction& f,
                      const DirichletSpec& spec, const CgOptions& opts = {});

// Exact P1 integrals.
double l2_norm(const Mesh& mesh, std::span<const double> u);
double h1_seminorm(const Mesh& mesh, std::span<const double> u);
double h1_norm(const Mesh& mesh, std::span<const double> u);
double l2_norm(const FeField& u);
double h1_seminorm(const FeField& u);
double h1_norm(const FeField& u);

enum class NormKind { H1, H1Seminorm };
double field_norm(const Mesh& mesh, std::span<const double> u, NormKind kind);

// ||a - b|| / ||ref|| on a common mesh. Throws InvalidArgument when the
// reference norm vanishes.
double relative_h1_error(const FeField& a, const FeField& b, const FeField& ref, NormKind kind = NormKind::H1);

struct FluxData {
  std::vector<Index> vertices;  // vertices on the inclusion boundary, ascending
  RealVector lambda;            // consistent flux functional per vertex
  double total = 0.0;
};

// Consistent flux through the boundary of inclusion m with respect to the
// outward normal of the background: lambda_i = a(u, phi_i) - (f, phi_i), with
// the integrals over region-0 triangles of the mesh.
FluxData boundary_flux_functional(const Mesh& mesh, std::span<const double> u, const ScalarFunction& f,
                                  std::size_t m);

void write_field_csv(const FeField& u, const std::string& path);
void write_field_vtk(const FeField& u, const std::string& name, const std::string& path);

}  // namespace hcm
