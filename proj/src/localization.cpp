#include "localization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "error.hpp"
#include "parallel.hpp"

namespace hcm {
namespace {

std::string fmt_delta(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", d);
  return buf;
}

void require_delta(double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw Error(ErrorCode::InvalidArgument, "delta must be positive and finite");
}

SubMesh background_selection(const MeshPtr& mesh, const RegionPredicate& pred, const std::string& what) {
  const Mesh& p = *mesh;
  try {
    return extract_submesh_if(mesh, [&](std::size_t t) { return p.tri_region[t] == 0 && pred(p.centroid(t)); });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptySelection) throw Error(ErrorCode::EmptySelection, what + " contains no triangles");
    throw;
  }
}

// Solves the homogeneous or sourced Poisson problem on a background
// submesh with every submesh boundary vertex constrained by spec and injects
// the result into a parent-length vector (zero elsewhere).
RealVector solve_on_selection(const MeshPtr& parent, const SubMesh& sel, const DirichletSpec& spec,
                              const ScalarFunction& f, const CgOptions& cg, std::size_t* free_count) {
  const Mesh& sub = *sel.mesh;
  const auto data = dirichlet_data(sub, spec);
  DirichletSolver ds(assemble_stiffness(sub, Coefficient{}), data.constrained);
  if (free_count) *free_count = ds.free_count();
  const RealVector load = f ? assemble_load(sub, f) : RealVector(sub.vertices.size(), 0.0);
  const RealVector x = ds.solve(load, data.values, cg);
  RealVector out(parent->vertices.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) out[sel.vertex_map[i]] = x[i];
  return out;
}

double max_abs_diff(const RealVector& a, const RealVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

LocalBasis localized_characteristics(const MeshPtr& mesh, const Geometry& geom, double delta, const CgOptions& cg) {
  require_delta(delta);
  const std::size_t M = geom.inclusion_count();
  if (mesh_inclusion_count(*mesh) != M)
    throw Error(ErrorCode::InvalidArgument, "geometry and mesh disagree on the number of inclusions");
  const Mesh& p = *mesh;
  LocalBasis basis;
  basis.delta = delta;
  basis.chi.resize(M);
  basis.regions.resize(M);
  parallel_for(M, [&](std::size_t k) {
    const std::size_t m = k + 1;
    const std::string label = "delta-neighbourhood of inclusion " + std::to_string(m) + " (delta=" + fmt_delta(delta) + ")";
    SubMesh sel = background_selection(mesh, geom.delta_neighborhood(RegionId{m}, delta), label);
    DirichletSpec spec;
    spec.outer([](Point) { return 0.0; })
        .inclusions([](Point) { return 0.0; })
        .inclusion(m, [](Point) { return 1.0; })
        .artificial([](Point) { return 0.0; });
    std::size_t nfree = 0;
    RealVector vals = solve_on_selection(mesh, sel, spec, nullptr, cg, &nfree);
    if (nfree == 0) {
      char msg[200];
      std::snprintf(msg, sizeof msg,
                    "delta=%s is too small: the neighbourhood of inclusion %zu has no interior vertices; use delta >= "
                    "2h (h = %.4g)",
                    fmt_delta(delta).c_str(), m, p.h_target);
      throw Error(ErrorCode::InvalidArgument, msg);
    }
    for (std::size_t t = 0; t < p.triangles.size(); ++t)
      if (p.tri_region[t] == m)
        for (Index v : p.triangles[t]) vals[v] = 1.0;
    basis.chi[k] = FeField(mesh, std::move(vals));
    basis.regions[k] = std::move(sel);
  });
  return basis;
}

FeField localized_boundary_corrector(const MeshPtr& mesh, const Geometry& geom, double delta, const ScalarFunction& f,
                                     const ScalarFunction& g, const CgOptions& cg) {
  require_delta(delta);
  SubMesh sel = background_selection(mesh, geom.boundary_strip(delta), "boundary strip (delta=" + fmt_delta(delta) + ")");
  DirichletSpec spec;
  spec.outer(g).inclusions([](Point) { return 0.0; }).artificial([](Point) { return 0.0; });
  return FeField(mesh, solve_on_selection(mesh, sel, spec, f, cg, nullptr));
}

LocalizedLeadingTerm localized_u0(const MeshPtr& mesh, const Geometry& geom, double delta, const ScalarFunction& f,
                                  const ScalarFunction& g, const LocalizationOptions& opts) {
  LocalizedLeadingTerm out;
  out.delta = delta;
  out.basis = localized_characteristics(mesh, geom, delta, opts.cg);
  out.u00 = localized_boundary_corrector(mesh, geom, delta, f, g, opts.cg);
  const std::size_t M = out.basis.chi.size();

  const CsrMatrix k0 = assemble_region_stiffness(*mesh, 0);
  const RealVector load = assemble_load(*mesh, f);
  std::vector<RealVector> k0_chi(M);
  parallel_for(M, [&](std::size_t k) { k0_chi[k] = k0 * out.basis.chi[k].values; });

  // Supports as vertex ranges let disjoint pairs skip the product.
  std::vector<std::vector<char>> support(M);
  for (std::size_t k = 0; k < M; ++k) {
    support[k].assign(mesh->vertices.size(), 0);
    for (std::size_t v = 0; v < mesh->vertices.size(); ++v)
      support[k][v] = out.basis.chi[k].values[v] != 0.0 || k0_chi[k][v] != 0.0;
  }
  out.a = Eigen::MatrixXd::Zero(M, M);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t l = m; l < M; ++l) {
      bool overlap = false;
      for (std::size_t v = 0; v < mesh->vertices.size() && !overlap; ++v) overlap = support[m][v] && support[l][v];
      if (overlap) out.a(m, l) = out.a(l, m) = dot(out.basis.chi[m].values, k0_chi[l]);
    }
  out.b.resize(M);
  for (std::size_t l = 0; l < M; ++l) {
    out.b[l] = dot(out.basis.chi[l].values, load);
    if (opts.corrector_coupling) out.b[l] -= dot(out.u00.values, k0_chi[l]);
  }
  try {
    out.c = DenseSpdSystem(out.a).solve(out.b);
  } catch (const Error& e) {
    throw Error(ErrorCode::Singular, "truncated coupling matrix at delta=" + fmt_delta(delta) + ": " + e.what());
  }
  RealVector uc(mesh->vertices.size(), 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t v = 0; v < uc.size(); ++v) uc[v] += out.c[m] * out.basis.chi[m].values[v];
  RealVector u0 = out.u00.values;
  for (std::size_t v = 0; v < u0.size(); ++v) u0[v] += uc[v];
  out.uc = FeField(mesh, std::move(uc));
  out.u0 = FeField(mesh, std::move(u0));
  return out;
}

DeltaSweep::DeltaSweep(Expansion& global, Geometry geom, ScalarFunction f, ScalarFunction g, LocalizationOptions opts)
    : global_(global), geom_(std::move(geom)), f_(std::move(f)), g_(std::move(g)), opts_(opts) {}

DeltaRow DeltaSweep::evaluate(double delta) const {
  DeltaRow row;
  row.delta = delta;
  const MeshPtr& mesh = global_.mesh();
  const FeField& u0 = global_.term(0);
  const FeField& u00 = global_.boundary_corrector();
  RealVector uc_vals(u0.values.size());
  for (std::size_t v = 0; v < uc_vals.size(); ++v) uc_vals[v] = u0.values[v] - u00.values[v];
  const FeField uc(mesh, std::move(uc_vals));
  const NormKind kind = global_.options().norm;

  const auto loc = localized_u0(mesh, geom_, delta, f_, g_, opts_);
  row.e_u0 = relative_h1_error(u0, loc.u0, u0, kind);
  row.e_u00 = relative_h1_error(u00, loc.u00, u0, kind);
  row.e_uc = relative_h1_error(uc, loc.uc, u0, kind);
  const auto& chi = global_.basis().chi;
  for (std::size_t k = 0; k < chi.size(); ++k)
    row.chi_max_diff = std::max(row.chi_max_diff, max_abs_diff(chi[k].values, loc.basis.chi[k].values));
  row.ok = true;
  return row;
}

std::vector<DeltaRow> DeltaSweep::run(const std::vector<double>& deltas) const {
  if (deltas.empty()) throw Error(ErrorCode::InvalidArgument, "delta list is empty");
  std::vector<DeltaRow> rows;
  rows.reserve(deltas.size());
  for (double d : deltas) {
    try {
      rows.push_back(evaluate(d));
    } catch (const Error& e) {
      DeltaRow r;
      r.delta = d;
      r.ok = false;
      r.error = e.what();
      r.e_u0 = r.e_u00 = r.e_uc = r.chi_max_diff = NAN;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

}  // namespace hcm
