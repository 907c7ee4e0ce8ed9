#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "fem.hpp"
#include "linalg.hpp"
#include "mesh.hpp"

namespace hcm {

struct ExpansionOptions {
  // Include the source in every inclusion Neumann problem, not only the first.
  bool source_in_all_steps = false;
  CgOptions cg{1e-12, 0, Preconditioner::Jacobi};
  double compatibility_warn = 1e-6;
  NormKind norm = NormKind::H1;
};

struct CharacteristicBasis {
  MeshPtr mesh;
  std::vector<FeField> chi;  // chi[m - 1] for inclusion m
};

struct DecayFit {
  bool exact = false;            // every term beyond u0 vanishes
  std::vector<double> scaled_norms;  // eta^-j ||u_j|| for j = 0..last
  std::size_t first = 1, last = 0;   // fitted range of j
  double rho = 0.0;                  // fitted geometric ratio
  double r2 = 1.0;
};

// Number of inclusions implied by the mesh: the largest inclusion region or
// inclusion marker.
std::size_t mesh_inclusion_count(const Mesh& mesh);

// Asymptotic expansion u = sum_j eta^-j u_j of the discrete high-contrast
// problem. Terms are computed lazily and never depend on eta. Not thread-safe.
class Expansion {
public:
  Expansion(MeshPtr mesh, ScalarFunction f, ScalarFunction g, ExpansionOptions opts = {});
  ~Expansion();
  Expansion(const Expansion&) = delete;
  Expansion& operator=(const Expansion&) = delete;

  const MeshPtr& mesh() const noexcept;
  std::size_t inclusion_count() const noexcept;
  const ExpansionOptions& options() const noexcept;

  const CharacteristicBasis& basis() const;
  const FeField& boundary_corrector() const;          // u00
  const DenseSpdSystem& geom_system() const;           // A_geom
  const RealVector& geom_rhs() const;                  // b
  // chi_l^T (F - K0 u0): vanishes when sum c_m chi_m is the Galerkin
  // projection of u0 - u00.
  RealVector galerkin_residuals() const;

  // Ensures terms 0..j exist.
  void compute_terms(std::size_t j);
  std::size_t computed_terms() const noexcept;  // number of available terms
  const FeField& term(std::size_t j);
  const RealVector& constants(std::size_t j);   // c_j
  double term_norm(std::size_t j);
  // Compatibility defect removed from the inclusion Neumann data of term j,
  // relative to the data norm (0 for j = 0).
  double compatibility_defect(std::size_t j);

  FeField partial_sum(double eta, std::size_t J);
  // Smallest J with eta^-J ||u_J|| / ||S_J|| < tol. Throws
  // NonConvergentExpansion after max_terms.
  std::size_t terms_needed(double eta, double tol, std::size_t max_terms = 60);
  // Least-squares fit of log(eta^-j ||u_j||) against j over j = 1..last.
  DecayFit decay_diagnostics(double eta, std::size_t last);

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Stand-alone helpers; each builds the background problem from scratch.
CharacteristicBasis harmonic_characteristics(const MeshPtr& mesh, const CgOptions& cg = {1e-12, 0, Preconditioner::Jacobi});
FeField boundary_corrector(const MeshPtr& mesh, const ScalarFunction& f, const ScalarFunction& g,
                           const CgOptions& cg = {1e-12, 0, Preconditioner::Jacobi});

}  // namespace hcm
