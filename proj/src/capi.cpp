#include "hicomsfem/hicomsfem.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <new>
#include <optional>
#include <string>
#include <thread>

#include "error.hpp"
#include "expansion.hpp"
#include "fem.hpp"
#include "geometry.hpp"
#include "layout.hpp"
#include "localization.hpp"
#include "log.hpp"
#include "mesh.hpp"
#include "parallel.hpp"

struct hcm_geometry {
  hcm::Geometry g;
};
struct hcm_mesh {
  hcm::MeshPtr m;
};
struct hcm_problem {
  hcm::Polynomial f, g;
};
struct hcm_field {
  hcm::FeField u;
};
struct hcm_expansion {
  std::unique_ptr<hcm::Expansion> e;
  hcm::Polynomial f, g;
};
struct hcm_localized {
  hcm::LocalizedLeadingTerm t;
};
struct hcm_sweep {
  std::vector<hcm::DeltaRow> rows;
};

namespace {

thread_local std::string last_error;

hcm_status fail(hcm_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

// Runs body and converts exceptions into status codes.
template <typename F>
hcm_status guard(F&& body) {
  try {
    body();
    return HCM_OK;
  } catch (const hcm::Error& e) {
    return fail(static_cast<hcm_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(HCM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HCM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(HCM_ERR_INTERNAL, "unknown error");
  }
}

#define HCM_REQUIRE(cond, what) \
  if (!(cond)) return fail(HCM_ERR_INVALID_ARGUMENT, what)

hcm::Polynomial to_poly(const hcm_term* t, size_t n) {
  hcm::Polynomial p;
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(t[i].coef) || t[i].px < 0 || t[i].py < 0)
      throw hcm::Error(hcm::ErrorCode::InvalidArgument, "polynomial term " + std::to_string(i) + " is invalid");
    p.terms.push_back({t[i].coef, t[i].px, t[i].py});
  }
  return p;
}

hcm::NormKind to_norm(hcm_norm n) { return n == HCM_NORM_H1_SEMINORM ? hcm::NormKind::H1Seminorm : hcm::NormKind::H1; }

hcm_field* wrap(hcm::FeField u) { return new hcm_field{std::move(u)}; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::mutex log_mutex;
std::optional<hcm::log::Sink> default_sink;

}  // namespace

extern "C" {

const char* hcm_version(void) { return HICOMSFEM_VERSION; }

const char* hcm_last_error(void) { return last_error.c_str(); }

const char* hcm_status_name(hcm_status s) {
  switch (s) {
    case HCM_OK: return "ok";
    case HCM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HCM_ERR_DOMAIN_MEMBERSHIP: return "domain membership";
    case HCM_ERR_INVALID_REGION: return "invalid region";
    case HCM_ERR_GEOMETRY_INVALID: return "invalid geometry";
    case HCM_ERR_MESH_GENERATION: return "mesh generation";
    case HCM_ERR_MESH_INVALID: return "invalid mesh";
    case HCM_ERR_PARSE: return "parse error";
    case HCM_ERR_IO: return "i/o error";
    case HCM_ERR_CONFIGURATION: return "configuration";
    case HCM_ERR_NON_CONVERGENCE: return "non-convergence";
    case HCM_ERR_NOT_SPD: return "matrix not spd";
    case HCM_ERR_SINGULAR: return "singular system";
    case HCM_ERR_NON_CONVERGENT_EXPANSION: return "non-convergent expansion";
    case HCM_ERR_EMPTY_SELECTION: return "empty selection";
    case HCM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

hcm_status hcm_set_threads(size_t n) {
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  hcm::set_worker_count(n);
  return HCM_OK;
}

size_t hcm_get_threads(void) { return hcm::worker_count(); }

void hcm_set_log_callback(hcm_log_fn fn, void* user) {
  std::lock_guard lock(log_mutex);
  if (!fn) {
    if (default_sink) hcm::log::set_sink(*default_sink);
    return;
  }
  auto prev = hcm::log::set_sink([fn, user](hcm::log::Level level, const std::string& msg) {
    fn(static_cast<hcm_log_level>(level), msg.c_str(), user);
  });
  if (!default_sink) default_sink = std::move(prev);
}

void hcm_string_free(char* s) { std::free(s); }

// geometry

hcm_status hcm_geometry_from_json(const char* text, hcm_geometry** out) {
  HCM_REQUIRE(text && out, "null argument");
  return guard([&] { *out = new hcm_geometry{hcm::geometry_from_json(text)}; });
}

hcm_status hcm_geometry_load(const char* path, hcm_geometry** out) {
  HCM_REQUIRE(path && out, "null argument");
  return guard([&] { *out = new hcm_geometry{hcm::load_geometry(path)}; });
}

hcm_status hcm_geometry_layout(size_t n, double radius, const char* pattern, uint64_t seed, hcm_geometry** out) {
  HCM_REQUIRE(pattern && out, "null argument");
  return guard([&] {
    *out = new hcm_geometry{hcm::make_layout(n, radius, hcm::parse_layout_pattern(pattern), seed)};
  });
}

hcm_status hcm_geometry_to_json(const hcm_geometry* g, char** out) {
  HCM_REQUIRE(g && out, "null argument");
  return guard([&] { *out = dup_string(hcm::geometry_to_json(g->g)); });
}

hcm_status hcm_geometry_validate(const hcm_geometry* g, hcm_validation* out) {
  HCM_REQUIRE(g && out, "null argument");
  return guard([&] {
    const auto r = g->g.validate();
    *out = {r.ok ? 1 : 0, r.min_separation, r.min_clearance, r.closest_a, r.closest_b};
    if (!r.ok) last_error = r.message;
  });
}

size_t hcm_geometry_inclusion_count(const hcm_geometry* g) { return g ? g->g.inclusion_count() : 0; }
double hcm_geometry_diameter(const hcm_geometry* g) { return g ? g->g.diameter() : NAN; }
void hcm_geometry_free(hcm_geometry* g) { delete g; }

// mesh

hcm_status hcm_mesh_generate(const hcm_geometry* g, double h, double min_angle_deg, hcm_mesh** out) {
  HCM_REQUIRE(g && out, "null argument");
  return guard([&] {
    hcm::MeshOptions opts;
    if (min_angle_deg > 0.0) opts.min_angle_deg = min_angle_deg;
    *out = new hcm_mesh{std::make_shared<const hcm::Mesh>(hcm::generate_mesh(g->g, h, opts))};
  });
}

hcm_status hcm_mesh_load(const char* path, hcm_mesh** out) {
  HCM_REQUIRE(path && out, "null argument");
  return guard([&] { *out = new hcm_mesh{std::make_shared<const hcm::Mesh>(hcm::load_mesh(path))}; });
}

hcm_status hcm_mesh_save(const hcm_mesh* m, const char* path) {
  HCM_REQUIRE(m && path, "null argument");
  return guard([&] { hcm::save_mesh(*m->m, path); });
}

hcm_status hcm_mesh_write_vtk(const hcm_mesh* m, const char* path) {
  HCM_REQUIRE(m && path, "null argument");
  return guard([&] { hcm::write_vtk(*m->m, path); });
}

hcm_status hcm_mesh_stats_get(const hcm_mesh* m, hcm_mesh_stats* out) {
  HCM_REQUIRE(m && out, "null argument");
  return guard([&] {
    const auto& mesh = *m->m;
    const auto q = hcm::mesh_quality(mesh);
    *out = {mesh.vertices.size(), mesh.triangles.size(), mesh.boundary_edges.size(), mesh.region_count(),
            mesh.h_target, q.min_angle_deg, q.max_aspect, q.max_circumradius};
  });
}

void hcm_mesh_free(hcm_mesh* m) { delete m; }

// problem

hcm_status hcm_problem_create(const hcm_term* f, size_t nf, const hcm_term* g, size_t ng, hcm_problem** out) {
  HCM_REQUIRE(out && (f || nf == 0) && (g || ng == 0), "null argument");
  return guard([&] { *out = new hcm_problem{to_poly(f, nf), to_poly(g, ng)}; });
}

void hcm_problem_free(hcm_problem* p) { delete p; }

// fields

size_t hcm_field_size(const hcm_field* u) { return u ? u->u.values.size() : 0; }
const double* hcm_field_values(const hcm_field* u) { return u ? u->u.values.data() : nullptr; }

hcm_status hcm_field_norm(const hcm_field* u, hcm_norm kind, double* out) {
  HCM_REQUIRE(u && out, "null argument");
  return guard([&] { *out = hcm::field_norm(*u->u.mesh, u->u.values, to_norm(kind)); });
}

hcm_status hcm_field_relative_error(const hcm_field* a, const hcm_field* b, const hcm_field* ref, hcm_norm kind,
                                    double* out) {
  HCM_REQUIRE(a && b && ref && out, "null argument");
  return guard([&] { *out = hcm::relative_h1_error(a->u, b->u, ref->u, to_norm(kind)); });
}

hcm_status hcm_field_write_csv(const hcm_field* u, const char* path) {
  HCM_REQUIRE(u && path, "null argument");
  return guard([&] { hcm::write_field_csv(u->u, path); });
}

hcm_status hcm_field_write_vtk(const hcm_field* u, const char* name, const char* path) {
  HCM_REQUIRE(u && name && path, "null argument");
  return guard([&] { hcm::write_field_vtk(u->u, name, path); });
}

void hcm_field_free(hcm_field* u) { delete u; }

hcm_status hcm_solve_fine(const hcm_mesh* m, const hcm_problem* p, double eta, double tol, hcm_field** out,
                          hcm_solve_info* info) {
  HCM_REQUIRE(m && p && out, "null argument");
  HCM_REQUIRE(eta > 0.0 && std::isfinite(eta), "eta must be positive and finite");
  HCM_REQUIRE(tol > 0.0, "tol must be positive");
  return guard([&] {
    const hcm::Mesh& mesh = *m->m;
    hcm::DirichletSpec spec;
    spec.outer(p->g);
    const auto data = hcm::dirichlet_data(mesh, spec);
    hcm::DirichletSolver ds(hcm::assemble_stiffness(mesh, hcm::Coefficient{eta}), data.constrained);
    if (ds.free_count() == mesh.vertices.size())
      throw hcm::Error(hcm::ErrorCode::Configuration, "mesh has no outer boundary vertices");
    const auto load = hcm::assemble_load(mesh, p->f);
    const auto rhs = ds.reduced_rhs(load, data.values);
    hcm::CgResult res;
    // Large contrast slows Jacobi-PCG well beyond the default 20 sqrt(n) cap.
    const std::size_t cap = std::max<std::size_t>(1000, 10 * ds.free_count());
    if (ds.free_count() > 0) res = hcm::cg_solve(ds.reduced_matrix(), rhs, {tol, cap, hcm::Preconditioner::Jacobi});
    *out = wrap(hcm::FeField(m->m, ds.reconstruct(res.x, data.values)));
    if (info) *info = {res.iterations, res.residual, res.rounding_limited ? 1 : 0};
  });
}

// expansion

void hcm_expansion_options_default(hcm_expansion_options* out) {
  if (!out) return;
  const hcm::ExpansionOptions d;
  *out = {d.source_in_all_steps ? 1 : 0, d.cg.tol, HCM_NORM_H1};
}

hcm_status hcm_expansion_create(const hcm_mesh* m, const hcm_problem* p, const hcm_expansion_options* opts,
                                hcm_expansion** out) {
  HCM_REQUIRE(m && p && out, "null argument");
  return guard([&] {
    hcm::ExpansionOptions o;
    if (opts) {
      if (!(opts->cg_tol > 0.0)) throw hcm::Error(hcm::ErrorCode::InvalidArgument, "cg_tol must be positive");
      o.source_in_all_steps = opts->source_in_all_steps != 0;
      o.cg.tol = opts->cg_tol;
      o.norm = to_norm(opts->norm);
    }
    auto h = std::make_unique<hcm_expansion>();
    h->f = p->f;
    h->g = p->g;
    h->e = std::make_unique<hcm::Expansion>(m->m, h->f, h->g, o);
    *out = h.release();
  });
}

size_t hcm_expansion_inclusion_count(const hcm_expansion* e) { return e ? e->e->inclusion_count() : 0; }

hcm_status hcm_expansion_term(hcm_expansion* e, size_t j, hcm_field** out) {
  HCM_REQUIRE(e && out, "null argument");
  return guard([&] { *out = wrap(e->e->term(j)); });
}

hcm_status hcm_expansion_term_norm(hcm_expansion* e, size_t j, double* out) {
  HCM_REQUIRE(e && out, "null argument");
  return guard([&] { *out = e->e->term_norm(j); });
}

hcm_status hcm_expansion_compatibility_defect(hcm_expansion* e, size_t j, double* out) {
  HCM_REQUIRE(e && out, "null argument");
  return guard([&] { *out = e->e->compatibility_defect(j); });
}

hcm_status hcm_expansion_constants(hcm_expansion* e, size_t j, double* buf, size_t len) {
  HCM_REQUIRE(e && (buf || len == 0), "null argument");
  HCM_REQUIRE(len >= e->e->inclusion_count(), "buffer too small");
  return guard([&] {
    const auto& c = e->e->constants(j);
    std::copy(c.begin(), c.end(), buf);
  });
}

hcm_status hcm_expansion_characteristic(hcm_expansion* e, size_t m, hcm_field** out) {
  HCM_REQUIRE(e && out, "null argument");
  HCM_REQUIRE(m >= 1 && m <= e->e->inclusion_count(), "inclusion index out of range");
  return guard([&] { *out = wrap(e->e->basis().chi[m - 1]); });
}

hcm_status hcm_expansion_boundary_corrector(hcm_expansion* e, hcm_field** out) {
  HCM_REQUIRE(e && out, "null argument");
  return guard([&] { *out = wrap(e->e->boundary_corrector()); });
}

hcm_status hcm_expansion_geom_matrix(hcm_expansion* e, double* buf, size_t len) {
  HCM_REQUIRE(e && (buf || len == 0), "null argument");
  const size_t M = e->e->inclusion_count();
  HCM_REQUIRE(len >= M * M, "buffer too small");
  return guard([&] {
    const auto& a = e->e->geom_system().matrix();
    for (size_t i = 0; i < M; ++i)
      for (size_t j = 0; j < M; ++j) buf[i * M + j] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  });
}

hcm_status hcm_expansion_galerkin_residual(hcm_expansion* e, double* max_abs) {
  HCM_REQUIRE(e && max_abs, "null argument");
  return guard([&] {
    double m = 0.0;
    for (double r : e->e->galerkin_residuals()) m = std::max(m, std::abs(r));
    *max_abs = m;
  });
}

hcm_status hcm_expansion_partial_sum(hcm_expansion* e, double eta, size_t J, hcm_field** out) {
  HCM_REQUIRE(e && out, "null argument");
  return guard([&] { *out = wrap(e->e->partial_sum(eta, J)); });
}

hcm_status hcm_expansion_terms_needed(hcm_expansion* e, double eta, double tol, size_t max_terms, size_t* out) {
  HCM_REQUIRE(e && out, "null argument");
  return guard([&] { *out = e->e->terms_needed(eta, tol, max_terms == 0 ? 60 : max_terms); });
}

hcm_status hcm_expansion_decay(hcm_expansion* e, double eta, size_t last, hcm_decay* out) {
  HCM_REQUIRE(e && out, "null argument");
  return guard([&] {
    const auto d = e->e->decay_diagnostics(eta, last);
    *out = {d.exact ? 1 : 0, d.rho, d.r2, d.first, d.last};
  });
}

void hcm_expansion_free(hcm_expansion* e) { delete e; }

// localization

void hcm_localization_options_default(hcm_localization_options* out) {
  if (!out) return;
  const hcm::LocalizationOptions d;
  *out = {d.corrector_coupling ? 1 : 0, d.cg.tol};
}

static hcm::LocalizationOptions to_loc_options(const hcm_localization_options* opts) {
  hcm::LocalizationOptions o;
  if (opts) {
    if (!(opts->cg_tol > 0.0)) throw hcm::Error(hcm::ErrorCode::InvalidArgument, "cg_tol must be positive");
    o.corrector_coupling = opts->corrector_coupling != 0;
    o.cg.tol = opts->cg_tol;
  }
  return o;
}

hcm_status hcm_localized_create(const hcm_mesh* m, const hcm_geometry* g, const hcm_problem* p, double delta,
                                const hcm_localization_options* opts, hcm_localized** out) {
  HCM_REQUIRE(m && g && p && out, "null argument");
  return guard([&] { *out = new hcm_localized{hcm::localized_u0(m->m, g->g, delta, p->f, p->g, to_loc_options(opts))}; });
}

hcm_status hcm_localized_u0(const hcm_localized* l, hcm_field** out) {
  HCM_REQUIRE(l && out, "null argument");
  return guard([&] { *out = wrap(l->t.u0); });
}

hcm_status hcm_localized_u00(const hcm_localized* l, hcm_field** out) {
  HCM_REQUIRE(l && out, "null argument");
  return guard([&] { *out = wrap(l->t.u00); });
}

hcm_status hcm_localized_uc(const hcm_localized* l, hcm_field** out) {
  HCM_REQUIRE(l && out, "null argument");
  return guard([&] { *out = wrap(l->t.uc); });
}

hcm_status hcm_localized_characteristic(const hcm_localized* l, size_t m, hcm_field** out) {
  HCM_REQUIRE(l && out, "null argument");
  HCM_REQUIRE(m >= 1 && m <= l->t.basis.chi.size(), "inclusion index out of range");
  return guard([&] { *out = wrap(l->t.basis.chi[m - 1]); });
}

hcm_status hcm_localized_constants(const hcm_localized* l, double* buf, size_t len) {
  HCM_REQUIRE(l && (buf || len == 0), "null argument");
  HCM_REQUIRE(len >= l->t.c.size(), "buffer too small");
  std::copy(l->t.c.begin(), l->t.c.end(), buf);
  return HCM_OK;
}

hcm_status hcm_localized_matrix(const hcm_localized* l, double* buf, size_t len) {
  HCM_REQUIRE(l && (buf || len == 0), "null argument");
  const size_t M = static_cast<size_t>(l->t.a.rows());
  HCM_REQUIRE(len >= M * M, "buffer too small");
  for (size_t i = 0; i < M; ++i)
    for (size_t j = 0; j < M; ++j) buf[i * M + j] = l->t.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return HCM_OK;
}

void hcm_localized_free(hcm_localized* l) { delete l; }

hcm_status hcm_sweep_delta(hcm_expansion* e, const hcm_geometry* g, const hcm_problem* p, const double* deltas,
                           size_t n, const hcm_localization_options* opts, hcm_sweep** out) {
  HCM_REQUIRE(e && g && p && out && (deltas || n == 0), "null argument");
  return guard([&] {
    hcm::DeltaSweep sweep(*e->e, g->g, p->f, p->g, to_loc_options(opts));
    *out = new hcm_sweep{sweep.run(std::vector<double>(deltas, deltas + n))};
  });
}

size_t hcm_sweep_size(const hcm_sweep* s) { return s ? s->rows.size() : 0; }

hcm_status hcm_sweep_row(const hcm_sweep* s, size_t i, hcm_delta_row* out) {
  HCM_REQUIRE(s && out, "null argument");
  HCM_REQUIRE(i < s->rows.size(), "row index out of range");
  const auto& r = s->rows[i];
  *out = {r.delta, r.ok ? 1 : 0, r.e_u0, r.e_u00, r.e_uc, r.chi_max_diff};
  return HCM_OK;
}

const char* hcm_sweep_row_error(const hcm_sweep* s, size_t i) {
  if (!s || i >= s->rows.size()) return "";
  return s->rows[i].error.c_str();
}

void hcm_sweep_free(hcm_sweep* s) { delete s; }

}  // extern "C"
