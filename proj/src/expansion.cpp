#include "expansion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "error.hpp"
#include "log.hpp"
#include "parallel.hpp"

namespace hcm {
namespace {

// Dirichlet problems on the background submesh with every boundary vertex
// (outer and inclusion interfaces) constrained.
class Background {
public:
  explicit Background(const MeshPtr& mesh) : mesh_(mesh) {
    d0_ = extract_submesh(mesh, std::vector<std::size_t>{0});
    const Mesh& sub = *d0_.mesh;
    std::vector<char> constrained(sub.vertices.size(), 0);
    for (const auto& e : sub.boundary_edges) constrained[e.v[0]] = constrained[e.v[1]] = 1;
    solver_ = std::make_unique<DirichletSolver>(assemble_stiffness(sub, Coefficient{}), std::move(constrained));
  }

  const SubMesh& submesh() const { return d0_; }

  // parent_values supplies the boundary data (on constrained background
  // vertices) and is kept as is outside the background; sub_load is the
  // load vector on the submesh, or empty for a homogeneous equation.
  RealVector solve(const RealVector& parent_values, const RealVector& sub_load, const CgOptions& cg) const {
    const std::size_t n = d0_.vertex_map.size();
    RealVector lifting(n);
    for (std::size_t i = 0; i < n; ++i) lifting[i] = parent_values[d0_.vertex_map[i]];
    const RealVector zero = sub_load.empty() ? RealVector(n, 0.0) : RealVector{};
    const RealVector x = solver_->solve(sub_load.empty() ? zero : sub_load, lifting, cg);
    RealVector out = parent_values;
    for (std::size_t i = 0; i < n; ++i) out[d0_.vertex_map[i]] = x[i];
    return out;
  }

private:
  MeshPtr mesh_;
  SubMesh d0_;
  std::unique_ptr<DirichletSolver> solver_;
};

std::vector<std::vector<Index>> inclusion_vertex_sets(const Mesh& mesh, std::size_t M) {
  std::vector<std::vector<char>> mark(M, std::vector<char>(mesh.vertices.size(), 0));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const std::size_t r = mesh.tri_region[t];
    if (r == 0) continue;
    for (Index v : mesh.triangles[t]) mark[r - 1][v] = 1;
  }
  std::vector<std::vector<Index>> sets(M);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
      if (mark[m][v]) sets[m].push_back(static_cast<Index>(v));
  return sets;
}

CharacteristicBasis build_basis(const MeshPtr& mesh, const Background& bg, std::size_t M, const CgOptions& cg) {
  const auto sets = inclusion_vertex_sets(*mesh, M);
  CharacteristicBasis basis;
  basis.mesh = mesh;
  basis.chi.resize(M);
  parallel_for(M, [&](std::size_t k) {
    RealVector vals(mesh->vertices.size(), 0.0);
    for (Index v : sets[k]) vals[v] = 1.0;
    basis.chi[k] = FeField(mesh, bg.solve(vals, {}, cg));
  });
  return basis;
}

FeField build_u00(const MeshPtr& mesh, const Background& bg, const ScalarFunction& f, const ScalarFunction& g,
                  const CgOptions& cg) {
  RealVector vals(mesh->vertices.size(), 0.0);
  for (const auto& e : mesh->boundary_edges)
    if (e.marker.kind == BoundaryMarker::Kind::Outer)
      for (Index v : e.v) vals[v] = g(mesh->vertices[v]);
  const RealVector load = assemble_load(*bg.submesh().mesh, f);
  return FeField(mesh, bg.solve(vals, load, cg));
}

}  // namespace

std::size_t mesh_inclusion_count(const Mesh& mesh) {
  std::size_t M = 0;
  for (auto r : mesh.tri_region) M = std::max(M, r);
  for (const auto& e : mesh.boundary_edges)
    if (e.marker.kind == BoundaryMarker::Kind::Inclusion) M = std::max(M, e.marker.inclusion);
  return M;
}

struct Expansion::Impl {
  MeshPtr mesh;
  ScalarFunction f, g;
  ExpansionOptions opts;
  std::size_t M = 0;
  std::unique_ptr<Background> bg;
  CsrMatrix k0;     // background stiffness on the parent mesh
  RealVector load;  // full load vector
  struct Inclusion {
    SubMesh sub;
    CsrMatrix k;
    RealVector w;
  };
  std::vector<Inclusion> incl;
  CharacteristicBasis basis;
  std::vector<RealVector> k0_chi;
  std::optional<DenseSpdSystem> geom;
  RealVector b;
  FeField u00;
  std::vector<FeField> terms;
  std::vector<RealVector> consts;
  std::vector<double> norms;
  std::vector<double> defects;

  void next_term();
};

Expansion::Expansion(MeshPtr mesh, ScalarFunction f, ScalarFunction g, ExpansionOptions opts)
    : impl_(std::make_unique<Impl>()) {
  if (!mesh) throw Error(ErrorCode::InvalidArgument, "expansion needs a mesh");
  auto& s = *impl_;
  s.mesh = std::move(mesh);
  s.f = f ? std::move(f) : ScalarFunction([](Point) { return 0.0; });
  s.g = g ? std::move(g) : ScalarFunction([](Point) { return 0.0; });
  s.opts = opts;
  s.M = mesh_inclusion_count(*s.mesh);
  s.bg = std::make_unique<Background>(s.mesh);
  s.k0 = assemble_region_stiffness(*s.mesh, 0);
  s.load = assemble_load(*s.mesh, s.f);

  s.incl.resize(s.M);
  parallel_for(s.M, [&](std::size_t k) {
    auto& inc = s.incl[k];
    inc.sub = extract_submesh(s.mesh, std::vector<std::size_t>{k + 1});
    inc.k = assemble_stiffness(*inc.sub.mesh, Coefficient{});
    inc.w = lumped_mass(*inc.sub.mesh);
  });

  s.basis = build_basis(s.mesh, *s.bg, s.M, s.opts.cg);
  s.k0_chi.resize(s.M);
  parallel_for(s.M, [&](std::size_t k) { s.k0_chi[k] = s.k0 * s.basis.chi[k].values; });
  Eigen::MatrixXd a(s.M, s.M);
  for (std::size_t m = 0; m < s.M; ++m)
    for (std::size_t l = m; l < s.M; ++l) a(m, l) = a(l, m) = dot(s.basis.chi[m].values, s.k0_chi[l]);
  s.geom.emplace(std::move(a));

  s.u00 = build_u00(s.mesh, *s.bg, s.f, s.g, s.opts.cg);
  s.b.resize(s.M);
  for (std::size_t l = 0; l < s.M; ++l)
    s.b[l] = dot(s.basis.chi[l].values, s.load) - dot(s.u00.values, s.k0_chi[l]);
  RealVector c = s.geom->solve(s.b);
  RealVector u0 = s.u00.values;
  for (std::size_t m = 0; m < s.M; ++m)
    for (std::size_t v = 0; v < u0.size(); ++v) u0[v] += c[m] * s.basis.chi[m].values[v];
  s.terms.emplace_back(s.mesh, std::move(u0));
  s.consts.push_back(std::move(c));
  s.norms.push_back(field_norm(*s.mesh, s.terms[0].values, s.opts.norm));
  s.defects.push_back(0.0);
}

Expansion::~Expansion() = default;

void Expansion::Impl::next_term() {
  const std::size_t j = terms.size();
  const FeField& prev = terms.back();
  const RealVector k0_prev = k0 * prev.values;
  const double src = (j == 1 || opts.source_in_all_steps) ? 1.0 : 0.0;

  RealVector tilde(mesh->vertices.size(), 0.0);
  std::vector<double> defect(M, 0.0);
  parallel_for(M, [&](std::size_t k) {
    const auto& inc = incl[k];
    const std::size_t n = inc.sub.vertex_map.size();
    RealVector r(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Index p = inc.sub.vertex_map[i];
      r[i] = src * load[p] - k0_prev[p];
    }
    const auto sol = solve_mean_zero(inc.k, r, inc.w, opts.cg, opts.compatibility_warn);
    const double rn = norm2(r);
    defect[k] = rn > 0.0 ? sol.defect / rn : 0.0;
    // Inclusion vertex sets are disjoint, so the writes never collide.
    for (std::size_t i = 0; i < n; ++i) tilde[inc.sub.vertex_map[i]] = sol.x[i];
  });

  RealVector u = bg->solve(tilde, {}, opts.cg);
  RealVector y(M);
  for (std::size_t l = 0; l < M; ++l) y[l] = -dot(u, k0_chi[l]);
  RealVector c = geom->solve(y);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t v = 0; v < u.size(); ++v) u[v] += c[m] * basis.chi[m].values[v];

  terms.emplace_back(mesh, std::move(u));
  consts.push_back(std::move(c));
  norms.push_back(field_norm(*mesh, terms.back().values, opts.norm));
  defects.push_back(defect.empty() ? 0.0 : *std::max_element(defect.begin(), defect.end()));
}

const MeshPtr& Expansion::mesh() const noexcept { return impl_->mesh; }
std::size_t Expansion::inclusion_count() const noexcept { return impl_->M; }
const ExpansionOptions& Expansion::options() const noexcept { return impl_->opts; }
const CharacteristicBasis& Expansion::basis() const { return impl_->basis; }
const FeField& Expansion::boundary_corrector() const { return impl_->u00; }
const DenseSpdSystem& Expansion::geom_system() const { return *impl_->geom; }
const RealVector& Expansion::geom_rhs() const { return impl_->b; }

RealVector Expansion::galerkin_residuals() const {
  const auto& s = *impl_;
  const RealVector k0u = s.k0 * s.terms[0].values;
  RealVector r(s.M);
  for (std::size_t l = 0; l < s.M; ++l) {
    RealVector d(k0u.size());
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = s.load[v] - k0u[v];
    r[l] = dot(s.basis.chi[l].values, d);
  }
  return r;
}

void Expansion::compute_terms(std::size_t j) {
  while (impl_->terms.size() <= j) impl_->next_term();
}

std::size_t Expansion::computed_terms() const noexcept { return impl_->terms.size(); }

const FeField& Expansion::term(std::size_t j) {
  compute_terms(j);
  return impl_->terms[j];
}

const RealVector& Expansion::constants(std::size_t j) {
  compute_terms(j);
  return impl_->consts[j];
}

double Expansion::term_norm(std::size_t j) {
  compute_terms(j);
  return impl_->norms[j];
}

double Expansion::compatibility_defect(std::size_t j) {
  compute_terms(j);
  return impl_->defects[j];
}

FeField Expansion::partial_sum(double eta, std::size_t J) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  compute_terms(J);
  RealVector s = impl_->terms[0].values;
  double scale = 1.0;
  for (std::size_t j = 1; j <= J; ++j) {
    scale /= eta;
    const auto& u = impl_->terms[j].values;
    for (std::size_t v = 0; v < s.size(); ++v) s[v] += scale * u[v];
  }
  return FeField(impl_->mesh, std::move(s));
}

std::size_t Expansion::terms_needed(double eta, double tol, std::size_t max_terms) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  const Mesh& mesh = *impl_->mesh;
  if (term_norm(0) == 0.0 && term_norm(1) == 0.0) return 0;

  RealVector s = impl_->terms[0].values;
  double scale = 1.0;
  double prev_scaled = term_norm(0);
  double ratio = 0.0;
  for (std::size_t J = 1; J <= max_terms; ++J) {
    scale /= eta;
    const auto& u = term(J).values;
    for (std::size_t v = 0; v < s.size(); ++v) s[v] += scale * u[v];
    const double scaled = scale * impl_->norms[J];
    const double sn = field_norm(mesh, s, impl_->opts.norm);
    if (prev_scaled > 0.0) ratio = scaled / prev_scaled;
    prev_scaled = scaled;
    if (scaled == 0.0 || (sn > 0.0 && scaled / sn < tol)) return J;
    // Terms that have grown by many orders cannot come back below tol.
    if (sn > 0.0 && scaled / sn > 1e30) {
      max_terms = J;
      break;
    }
  }
  char msg[200];
  std::snprintf(msg, sizeof msg,
                "expansion did not converge within %zu terms at eta=%.6g (measured term ratio %.4g); eta is likely "
                "below the convergence threshold",
                max_terms, eta, ratio);
  throw Error(ErrorCode::NonConvergentExpansion, msg);
}

DecayFit Expansion::decay_diagnostics(double eta, std::size_t last) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  if (last < 2) throw Error(ErrorCode::InvalidArgument, "decay fit needs at least terms 1 and 2");
  compute_terms(last);
  DecayFit fit;
  fit.first = 1;
  fit.last = last;
  double scale = 1.0;
  std::vector<double> xs, ys;
  for (std::size_t j = 0; j <= last; ++j) {
    const double sn = scale * impl_->norms[j];
    fit.scaled_norms.push_back(sn);
    if (j >= 1 && sn > 0.0) {
      xs.push_back(static_cast<double>(j));
      ys.push_back(std::log(sn));
    }
    scale /= eta;
  }
  if (xs.empty()) {
    fit.exact = true;
    fit.rho = 0.0;
    fit.r2 = 1.0;
    return fit;
  }
  if (xs.size() < 2) {
    fit.rho = 0.0;
    fit.r2 = 1.0;
    return fit;
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  fit.rho = std::exp(slope);
  double ssr = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (my + slope * (xs[i] - mx));
    ssr += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return fit;
}

CharacteristicBasis harmonic_characteristics(const MeshPtr& mesh, const CgOptions& cg) {
  const std::size_t M = mesh_inclusion_count(*mesh);
  if (M == 0) throw Error(ErrorCode::InvalidArgument, "mesh has no inclusions");
  Background bg(mesh);
  return build_basis(mesh, bg, M, cg);
}

FeField boundary_corrector(const MeshPtr& mesh, const ScalarFunction& f, const ScalarFunction& g,
                           const CgOptions& cg) {
  Background bg(mesh);
  return build_u00(mesh, bg, f, g, cg);
}

}  // namespace hcm
