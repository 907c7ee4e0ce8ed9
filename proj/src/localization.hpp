#pragma once

#include <string>
#include <vector>

#include "expansion.hpp"
#include "fem.hpp"
#include "geometry.hpp"

namespace hcm {

struct LocalizationOptions {
  // Subtract a(u00^delta, chi^delta_l) in the truncated right-hand side. With
  // it, delta >= diam(D) reproduces the global constants exactly.
  bool corrector_coupling = true;
  CgOptions cg{1e-12, 0, Preconditioner::Jacobi};
};

struct LocalBasis {
  double delta = 0.0;
  std::vector<FeField> chi;      // chi[m - 1], on the parent mesh
  std::vector<SubMesh> regions;  // discrete delta-neighbourhood of each inclusion
};

struct LocalizedLeadingTerm {
  double delta = 0.0;
  FeField u0;
  FeField u00;
  FeField uc;  // sum_m c_m chi^delta_m
  RealVector c;
  Eigen::MatrixXd a;  // truncated coupling matrix
  RealVector b;
  LocalBasis basis;
};

struct DeltaRow {
  double delta = 0.0;
  bool ok = false;
  std::string error;
  double e_u0 = 0.0, e_u00 = 0.0, e_uc = 0.0;
  double chi_max_diff = 0.0;  // max over inclusions and vertices of |chi - chi^delta|
};

// Discrete neighbourhoods are unions of background triangles whose centroid
// satisfies the analytic predicate, so all fields stay on the parent mesh.
LocalBasis localized_characteristics(const MeshPtr& mesh, const Geometry& geom, double delta,
                                     const CgOptions& cg = {1e-12, 0, Preconditioner::Jacobi});
FeField localized_boundary_corrector(const MeshPtr& mesh, const Geometry& geom, double delta, const ScalarFunction& f,
                                     const ScalarFunction& g, const CgOptions& cg = {1e-12, 0, Preconditioner::Jacobi});
LocalizedLeadingTerm localized_u0(const MeshPtr& mesh, const Geometry& geom, double delta, const ScalarFunction& f,
                                  const ScalarFunction& g, const LocalizationOptions& opts = {});

// Compares localized leading terms against a global expansion. Errors are
// relative to ||u0|| in the expansion's norm.
class DeltaSweep {
public:
  DeltaSweep(Expansion& global, Geometry geom, ScalarFunction f, ScalarFunction g, LocalizationOptions opts = {});
  DeltaRow evaluate(double delta) const;
  // Failures become rows with ok = false; the sweep always returns one row per delta.
  std::vector<DeltaRow> run(const std::vector<double>& deltas) const;

private:
  Expansion& global_;
  Geometry geom_;
  ScalarFunction f_, g_;
  LocalizationOptions opts_;
};

}  // namespace hcm
