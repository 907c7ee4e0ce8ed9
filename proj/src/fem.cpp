#include "fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "error.hpp"

namespace hcm {
namespace {

// Gradient coefficients of the three hat functions: grad phi_i = (b_i, c_i) / (2A).
struct ElementGeometry {
  double area;
  double b[3];
  double c[3];
};

ElementGeometry element(const Mesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangles[t];
  const Point p[3] = {mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]};
  ElementGeometry e{};
  e.area = 0.5 * cross(p[1] - p[0], p[2] - p[0]);
  for (int i = 0; i < 3; ++i) {
    const Point& q = p[(i + 1) % 3];
    const Point& r = p[(i + 2) % 3];
    e.b[i] = q.y - r.y;
    e.c[i] = r.x - q.x;
  }
  return e;
}

void require_area(const ElementGeometry& e, std::size_t t) {
  if (!(e.area > 0.0))
    throw Error(ErrorCode::MeshInvalid, "triangle " + std::to_string(t) + " has non-positive area; cannot assemble");
}

const char* kind_label(BoundaryMarker::Kind k) {
  switch (k) {
    case BoundaryMarker::Kind::Outer: return "outer";
    case BoundaryMarker::Kind::Inclusion: return "inclusion";
    case BoundaryMarker::Kind::Artificial: return "artificial";
  }
  return "?";
}

int priority(BoundaryMarker::Kind k) {
  switch (k) {
    case BoundaryMarker::Kind::Outer: return 3;
    case BoundaryMarker::Kind::Inclusion: return 2;
    case BoundaryMarker::Kind::Artificial: return 1;
  }
  return 0;
}

void check_length(const Mesh& mesh, std::span<const double> u) {
  if (u.size() != mesh.vertices.size())
    throw Error(ErrorCode::InvalidArgument, "field length " + std::to_string(u.size()) + " does not match vertex count " +
                                                std::to_string(mesh.vertices.size()));
}

}  // namespace

double Polynomial::operator()(Point p) const {
  double s = 0.0;
  for (const auto& t : terms) s += t.coef * std::pow(p.x, t.px) * std::pow(p.y, t.py);
  return s;
}

bool Polynomial::is_zero() const {
  return std::all_of(terms.begin(), terms.end(), [](const Term& t) { return t.coef == 0.0; });
}

FeField::FeField(MeshPtr m, RealVector v) : mesh(std::move(m)), values(std::move(v)) {
  if (!mesh) throw Error(ErrorCode::InvalidArgument, "field without mesh");
  check_length(*mesh, values);
  for (double x : values)
    if (!std::isfinite(x)) throw Error(ErrorCode::Internal, "field contains non-finite values");
}

FeField FeField::zeros(MeshPtr m) {
  const std::size_t n = m->vertices.size();
  return FeField(std::move(m), RealVector(n, 0.0));
}

CsrMatrix assemble_stiffness_weighted(const Mesh& mesh, std::span<const double> tri_weight) {
  if (tri_weight.size() != mesh.triangles.size())
    throw Error(ErrorCode::InvalidArgument, "triangle weight count does not match the mesh");
  TripletBuilder tb(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto e = element(mesh, t);
    require_area(e, t);
    const double w = tri_weight[t];
    if (w == 0.0) continue;
    const auto& tri = mesh.triangles[t];
    const double s = w / (4.0 * e.area);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) tb.add(tri[i], tri[j], s * (e.b[i] * e.b[j] + e.c[i] * e.c[j]));
  }
  // Keep the sparsity pattern of the full mesh so that products with
  // different matrices line up; zero diagonal entries are harmless.
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) tb.add(v, v, 0.0);
  return tb.build();
}

CsrMatrix assemble_stiffness(const Mesh& mesh, const Coefficient& coeff) {
  if (!(coeff.eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "contrast eta must be positive");
  std::vector<double> w(mesh.triangles.size());
  for (std::size_t t = 0; t < w.size(); ++t) w[t] = coeff.value(mesh.tri_region[t]);
  return assemble_stiffness_weighted(mesh, w);
}

CsrMatrix assemble_region_stiffness(const Mesh& mesh, std::size_t region) {
  std::vector<double> w(mesh.triangles.size());
  for (std::size_t t = 0; t < w.size(); ++t) w[t] = mesh.tri_region[t] == region ? 1.0 : 0.0;
  return assemble_stiffness_weighted(mesh, w);
}

namespace {

RealVector load_impl(const Mesh& mesh, const ScalarFunction& f, std::optional<std::size_t> region) {
  RealVector b(mesh.vertices.size(), 0.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (region && mesh.tri_region[t] != *region) continue;
    const auto& tri = mesh.triangles[t];
    const double area = mesh.triangle_area(t);
    const Point p[3] = {mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]};
    // fm[i]: value at the midpoint of the edge opposite vertex i
    double fm[3];
    for (int i = 0; i < 3; ++i) fm[i] = f(0.5 * (p[(i + 1) % 3] + p[(i + 2) % 3]));
    for (int i = 0; i < 3; ++i) b[tri[i]] += area / 6.0 * (fm[(i + 1) % 3] + fm[(i + 2) % 3]);
  }
  return b;
}

}  // namespace

RealVector assemble_load(const Mesh& mesh, const ScalarFunction& f) { return load_impl(mesh, f, std::nullopt); }

RealVector assemble_load(const Mesh& mesh, double f) {
  return load_impl(mesh, [f](Point) { return f; }, std::nullopt);
}

RealVector assemble_region_load(const Mesh& mesh, const ScalarFunction& f, std::size_t region) {
  return load_impl(mesh, f, region);
}

RealVector lumped_mass(const Mesh& mesh) {
  RealVector w(mesh.vertices.size(), 0.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const double a3 = mesh.triangle_area(t) / 3.0;
    for (Index v : mesh.triangles[t]) w[v] += a3;
  }
  return w;
}

DirichletSpec& DirichletSpec::outer(ScalarFunction g) { outer_ = Rule{false, std::move(g)}; return *this; }
DirichletSpec& DirichletSpec::inclusions(ScalarFunction g) { inclusions_ = Rule{false, std::move(g)}; return *this; }
DirichletSpec& DirichletSpec::inclusion(std::size_t m, ScalarFunction g) {
  per_inclusion_[m] = Rule{false, std::move(g)};
  return *this;
}
DirichletSpec& DirichletSpec::artificial(ScalarFunction g) { artificial_ = Rule{false, std::move(g)}; return *this; }
DirichletSpec& DirichletSpec::natural_outer() { outer_ = Rule{true, {}}; return *this; }
DirichletSpec& DirichletSpec::natural_inclusions() { inclusions_ = Rule{true, {}}; return *this; }
DirichletSpec& DirichletSpec::natural_artificial() { artificial_ = Rule{true, {}}; return *this; }

const DirichletSpec::Rule* DirichletSpec::find(const BoundaryMarker& marker) const {
  switch (marker.kind) {
    case BoundaryMarker::Kind::Outer: return outer_ ? &*outer_ : nullptr;
    case BoundaryMarker::Kind::Artificial: return artificial_ ? &*artificial_ : nullptr;
    case BoundaryMarker::Kind::Inclusion: {
      auto it = per_inclusion_.find(marker.inclusion);
      if (it != per_inclusion_.end()) return &it->second;
      return inclusions_ ? &*inclusions_ : nullptr;
    }
  }
  return nullptr;
}

std::optional<double> DirichletSpec::value(const BoundaryMarker& marker, Point p) const {
  const Rule* r = find(marker);
  if (!r) {
    std::string what = std::string("no boundary rule for marker ") + kind_label(marker.kind);
    if (marker.kind == BoundaryMarker::Kind::Inclusion) what += "(" + std::to_string(marker.inclusion) + ")";
    throw Error(ErrorCode::Configuration, what);
  }
  if (r->natural) return std::nullopt;
  return r->g(p);
}

DirichletData dirichlet_data(const Mesh& mesh, const DirichletSpec& spec) {
  DirichletData d;
  d.constrained.assign(mesh.vertices.size(), 0);
  d.values.assign(mesh.vertices.size(), 0.0);
  std::vector<int> prio(mesh.vertices.size(), 0);
  // Interface markers on edges shared by two triangles are interior to this
  // mesh and impose nothing.
  std::unordered_map<std::uint64_t, int> uses;
  auto key = [](Index a, Index b) { return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b); };
  for (const auto& tri : mesh.triangles)
    for (int i = 0; i < 3; ++i) ++uses[key(tri[i], tri[(i + 1) % 3])];
  for (const auto& e : mesh.boundary_edges) {
    if (uses[key(e.v[0], e.v[1])] != 1) continue;
    for (Index v : e.v) {
      const auto val = spec.value(e.marker, mesh.vertices[v]);
      if (!val) continue;
      const int p = priority(e.marker.kind);
      if (p > prio[v]) {
        prio[v] = p;
        d.constrained[v] = 1;
        d.values[v] = *val;
      }
    }
  }
  return d;
}

DirichletSolver::DirichletSolver(const CsrMatrix& a, std::vector<char> constrained)
    : n_(a.n), constrained_(std::move(constrained)) {
  if (constrained_.size() != n_) throw Error(ErrorCode::InvalidArgument, "constraint mask size mismatch");
  constexpr Index kNone = ~Index{0};
  std::vector<Index> reduced(n_, kNone);
  for (std::size_t i = 0; i < n_; ++i)
    if (!constrained_[i]) {
      reduced[i] = static_cast<Index>(free_.size());
      free_.push_back(static_cast<Index>(i));
    }
  a_ff_.n = free_.size();
  a_ff_.row_ptr.assign(free_.size() + 1, 0);
  a_fc_.n = free_.size();
  a_fc_.row_ptr.assign(free_.size() + 1, 0);
  for (std::size_t r = 0; r < free_.size(); ++r) {
    const std::size_t i = free_[r];
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      const std::size_t j = a.col[k];
      if (constrained_[j]) {
        a_fc_.col.push_back(static_cast<std::uint32_t>(j));
        a_fc_.val.push_back(a.val[k]);
      } else {
        a_ff_.col.push_back(reduced[j]);
        a_ff_.val.push_back(a.val[k]);
      }
    }
    a_ff_.row_ptr[r + 1] = a_ff_.col.size();
    a_fc_.row_ptr[r + 1] = a_fc_.col.size();
  }
}

RealVector DirichletSolver::reduced_rhs(std::span<const double> b, std::span<const double> lifting) const {
  if (b.size() != n_ || lifting.size() != n_) throw Error(ErrorCode::InvalidArgument, "Dirichlet solve: size mismatch");
  RealVector rhs(free_.size());
  for (std::size_t r = 0; r < free_.size(); ++r) {
    double s = b[free_[r]];
    for (std::size_t k = a_fc_.row_ptr[r]; k < a_fc_.row_ptr[r + 1]; ++k) s -= a_fc_.val[k] * lifting[a_fc_.col[k]];
    rhs[r] = s;
  }
  return rhs;
}

RealVector DirichletSolver::reconstruct(std::span<const double> x, std::span<const double> lifting) const {
  RealVector u(n_);
  for (std::size_t i = 0; i < n_; ++i) u[i] = constrained_[i] ? lifting[i] : 0.0;
  for (std::size_t r = 0; r < free_.size(); ++r) u[free_[r]] = x[r];
  return u;
}

RealVector DirichletSolver::solve(std::span<const double> b, std::span<const double> lifting,
                                  const CgOptions& opts) const {
  const RealVector rhs = reduced_rhs(b, lifting);
  if (free_.empty()) return reconstruct({}, lifting);
  const auto res = cg_solve(a_ff_, rhs, opts);
  return reconstruct(res.x, lifting);
}

FeField ReducedProblem::reconstruct(std::span<const double> x) const {
  if (x.size() != free.size()) throw Error(ErrorCode::InvalidArgument, "reduced solution has wrong length");
  RealVector u = lifting.values;
  for (std::size_t r = 0; r < free.size(); ++r) u[free[r]] = x[r];
  return FeField(lifting.mesh, std::move(u));
}

ReducedProblem apply_dirichlet(const CsrMatrix& a, std::span<const double> b, const MeshPtr& mesh,
                               const DirichletSpec& spec) {
  const auto data = dirichlet_data(*mesh, spec);
  DirichletSolver ds(a, data.constrained);
  ReducedProblem p;
  p.a = ds.reduced_matrix();
  p.b = ds.reduced_rhs(b, data.values);
  p.free = ds.free_vertices();
  p.lifting = FeField(mesh, data.values);
  return p;
}

FeField solve_poisson(const MeshPtr& mesh, const Coefficient& coeff, const ScalarFunction& f,
                      const DirichletSpec& spec, const CgOptions& opts) {
  const auto data = dirichlet_data(*mesh, spec);
  if (std::none_of(data.constrained.begin(), data.constrained.end(), [](char c) { return c != 0; }))
    throw Error(ErrorCode::Configuration, "solve_poisson needs at least one Dirichlet vertex");
  const CsrMatrix a = assemble_stiffness(*mesh, coeff);
  const RealVector b = assemble_load(*mesh, f);
  DirichletSolver ds(a, data.constrained);
  return FeField(mesh, ds.solve(b, data.values, opts));
}

double l2_norm(const Mesh& mesh, std::span<const double> u) {
  check_length(mesh, u);
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double a = u[tri[0]], b = u[tri[1]], c = u[tri[2]];
    s += mesh.triangle_area(t) / 12.0 * (a * a + b * b + c * c + (a + b + c) * (a + b + c));
  }
  return std::sqrt(std::max(s, 0.0));
}

double h1_seminorm(const Mesh& mesh, std::span<const double> u) {
  check_length(mesh, u);
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto e = element(mesh, t);
    const auto& tri = mesh.triangles[t];
    double gx = 0.0, gy = 0.0;
    for (int i = 0; i < 3; ++i) {
      gx += e.b[i] * u[tri[i]];
      gy += e.c[i] * u[tri[i]];
    }
    s += (gx * gx + gy * gy) / (4.0 * e.area);
  }
  return std::sqrt(s);
}

double h1_norm(const Mesh& mesh, std::span<const double> u) {
  const double l2 = l2_norm(mesh, u), semi = h1_seminorm(mesh, u);
  return std::sqrt(l2 * l2 + semi * semi);
}

double l2_norm(const FeField& u) { return l2_norm(*u.mesh, u.values); }
double h1_seminorm(const FeField& u) { return h1_seminorm(*u.mesh, u.values); }
double h1_norm(const FeField& u) { return h1_norm(*u.mesh, u.values); }

double field_norm(const Mesh& mesh, std::span<const double> u, NormKind kind) {
  return kind == NormKind::H1 ? h1_norm(mesh, u) : h1_seminorm(mesh, u);
}

double relative_h1_error(const FeField& a, const FeField& b, const FeField& ref, NormKind kind) {
  if (a.mesh != b.mesh || a.mesh != ref.mesh)
    if (a.values.size() != b.values.size() || a.values.size() != ref.values.size())
      throw Error(ErrorCode::InvalidArgument, "relative error: fields live on different meshes");
  const double rn = field_norm(*ref.mesh, ref.values, kind);
  if (!(rn > 0.0)) throw Error(ErrorCode::InvalidArgument, "relative error: reference field has zero norm");
  RealVector d(a.values.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values[i] - b.values[i];
  return field_norm(*ref.mesh, d, kind) / rn;
}

FluxData boundary_flux_functional(const Mesh& mesh, std::span<const double> u, const ScalarFunction& f,
                                  std::size_t m) {
  check_length(mesh, u);
  std::vector<char> on_boundary(mesh.vertices.size(), 0);
  bool found = false;
  for (const auto& e : mesh.boundary_edges)
    if (e.marker.kind == BoundaryMarker::Kind::Inclusion && e.marker.inclusion == m) {
      on_boundary[e.v[0]] = on_boundary[e.v[1]] = 1;
      found = true;
    }
  if (!found) throw Error(ErrorCode::InvalidRegion, "mesh has no boundary edges of inclusion " + std::to_string(m));

  RealVector lambda(mesh.vertices.size(), 0.0);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (mesh.tri_region[t] != 0) continue;
    const auto& tri = mesh.triangles[t];
    if (!on_boundary[tri[0]] && !on_boundary[tri[1]] && !on_boundary[tri[2]]) continue;
    const auto e = element(mesh, t);
    double gx = 0.0, gy = 0.0;
    for (int i = 0; i < 3; ++i) {
      gx += e.b[i] * u[tri[i]];
      gy += e.c[i] * u[tri[i]];
    }
    const Point p[3] = {mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]};
    double fm[3];
    for (int i = 0; i < 3; ++i) fm[i] = f ? f(0.5 * (p[(i + 1) % 3] + p[(i + 2) % 3])) : 0.0;
    for (int i = 0; i < 3; ++i) {
      if (!on_boundary[tri[i]]) continue;
      lambda[tri[i]] += (e.b[i] * gx + e.c[i] * gy) / (4.0 * e.area) -
                        e.area / 6.0 * (fm[(i + 1) % 3] + fm[(i + 2) % 3]);
    }
  }
  FluxData out;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
    if (on_boundary[v]) {
      out.vertices.push_back(static_cast<Index>(v));
      out.lambda.push_back(lambda[v]);
      out.total += lambda[v];
    }
  return out;
}

void write_field_csv(const FeField& u, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  std::fprintf(f, "index,x,y,value\n");
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    const Point p = u.mesh->vertices[i];
    std::fprintf(f, "%zu,%.12g,%.12g,%.12g\n", i, p.x, p.y, u.values[i]);
  }
  if (std::fclose(f) != 0) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

void write_field_vtk(const FeField& u, const std::string& name, const std::string& path) {
  write_vtk(*u.mesh, path, {{name, &u.values}});
}

}  // namespace hcm
