#ifndef HICOMSFEM_H
#define HICOMSFEM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define HCM_API __declspec(dllexport)
#else
#define HCM_API __attribute__((visibility("default")))
#endif

/* Every fallible call returns a status; on failure the message is available
   from hcm_last_error() on the same thread until the next failing call. */
typedef enum hcm_status {
  HCM_OK = 0,
  HCM_ERR_INVALID_ARGUMENT = 1,
  HCM_ERR_DOMAIN_MEMBERSHIP = 2,
  HCM_ERR_INVALID_REGION = 3,
  HCM_ERR_GEOMETRY_INVALID = 4,
  HCM_ERR_MESH_GENERATION = 5,
  HCM_ERR_MESH_INVALID = 6,
  HCM_ERR_PARSE = 7,
  HCM_ERR_IO = 8,
  HCM_ERR_CONFIGURATION = 9,
  HCM_ERR_NON_CONVERGENCE = 10,
  HCM_ERR_NOT_SPD = 11,
  HCM_ERR_SINGULAR = 12,
  HCM_ERR_NON_CONVERGENT_EXPANSION = 13,
  HCM_ERR_EMPTY_SELECTION = 14,
  HCM_ERR_INTERNAL = 15
} hcm_status;

typedef enum hcm_norm { HCM_NORM_H1 = 0, HCM_NORM_H1_SEMINORM = 1 } hcm_norm;

typedef enum hcm_log_level { HCM_LOG_DEBUG = 0, HCM_LOG_INFO = 1, HCM_LOG_WARNING = 2, HCM_LOG_ERROR = 3 } hcm_log_level;

typedef struct hcm_geometry hcm_geometry;
typedef struct hcm_mesh hcm_mesh;
typedef struct hcm_problem hcm_problem;
typedef struct hcm_field hcm_field;
typedef struct hcm_expansion hcm_expansion;
typedef struct hcm_localized hcm_localized;
typedef struct hcm_sweep hcm_sweep;

HCM_API const char* hcm_version(void);
HCM_API const char* hcm_last_error(void);
HCM_API const char* hcm_status_name(hcm_status s);
/* 0 selects the hardware concurrency. */
HCM_API hcm_status hcm_set_threads(size_t n);
HCM_API size_t hcm_get_threads(void);
/* Library log messages go to the callback instead of stderr; NULL restores
   the default sink. The callback may be invoked from worker threads. */
typedef void (*hcm_log_fn)(hcm_log_level level, const char* message, void* user);
HCM_API void hcm_set_log_callback(hcm_log_fn fn, void* user);
/* Frees strings returned through char** out-parameters. */
HCM_API void hcm_string_free(char* s);

/* ---- geometry ---- */
typedef struct hcm_validation {
  int ok;
  double min_separation;
  double min_clearance;
  size_t closest_a, closest_b;
} hcm_validation;

HCM_API hcm_status hcm_geometry_from_json(const char* text, hcm_geometry** out);
HCM_API hcm_status hcm_geometry_load(const char* path, hcm_geometry** out);
/* pattern: "rings" or "jittered-grid". */
HCM_API hcm_status hcm_geometry_layout(size_t n, double radius, const char* pattern, uint64_t seed,
                                       hcm_geometry** out);
HCM_API hcm_status hcm_geometry_to_json(const hcm_geometry* g, char** out);
HCM_API hcm_status hcm_geometry_validate(const hcm_geometry* g, hcm_validation* out);
HCM_API size_t hcm_geometry_inclusion_count(const hcm_geometry* g);
HCM_API double hcm_geometry_diameter(const hcm_geometry* g);
HCM_API void hcm_geometry_free(hcm_geometry* g);

/* ---- mesh ---- */
typedef struct hcm_mesh_stats {
  size_t vertices, triangles, boundary_edges, regions;
  double h;
  double min_angle_deg, max_aspect, max_circumradius;
} hcm_mesh_stats;

HCM_API hcm_status hcm_mesh_generate(const hcm_geometry* g, double h, double min_angle_deg, hcm_mesh** out);
HCM_API hcm_status hcm_mesh_load(const char* path, hcm_mesh** out);
HCM_API hcm_status hcm_mesh_save(const hcm_mesh* m, const char* path);
HCM_API hcm_status hcm_mesh_write_vtk(const hcm_mesh* m, const char* path);
HCM_API hcm_status hcm_mesh_stats_get(const hcm_mesh* m, hcm_mesh_stats* out);
HCM_API void hcm_mesh_free(hcm_mesh* m);

/* ---- problem data: f and g as polynomials sum coef * x^px * y^py ---- */
typedef struct hcm_term {
  double coef;
  int px, py;
} hcm_term;

HCM_API hcm_status hcm_problem_create(const hcm_term* f, size_t nf, const hcm_term* g, size_t ng, hcm_problem** out);
HCM_API void hcm_problem_free(hcm_problem* p);

/* ---- fields ---- */
HCM_API size_t hcm_field_size(const hcm_field* u);
HCM_API const double* hcm_field_values(const hcm_field* u);
HCM_API hcm_status hcm_field_norm(const hcm_field* u, hcm_norm kind, double* out);
/* ||a - b|| / ||ref||; all three on the same mesh. */
HCM_API hcm_status hcm_field_relative_error(const hcm_field* a, const hcm_field* b, const hcm_field* ref,
                                            hcm_norm kind, double* out);
HCM_API hcm_status hcm_field_write_csv(const hcm_field* u, const char* path);
HCM_API hcm_status hcm_field_write_vtk(const hcm_field* u, const char* name, const char* path);
HCM_API void hcm_field_free(hcm_field* u);

typedef struct hcm_solve_info {
  size_t iterations;
  double residual;
  int rounding_limited;
} hcm_solve_info;

/* Direct fine-scale solve with kappa = 1 in the background and eta in the
   inclusions, u = g on the outer boundary. info may be NULL. */
HCM_API hcm_status hcm_solve_fine(const hcm_mesh* m, const hcm_problem* p, double eta, double tol, hcm_field** out,
                                  hcm_solve_info* info);

/* ---- expansion ---- */
typedef struct hcm_expansion_options {
  int source_in_all_steps;
  double cg_tol;
  hcm_norm norm;
} hcm_expansion_options;

typedef struct hcm_decay {
  int exact;
  double rho;
  double r2;
  size_t first, last;
} hcm_decay;

HCM_API void hcm_expansion_options_default(hcm_expansion_options* out);
/* opts may be NULL for defaults. */
HCM_API hcm_status hcm_expansion_create(const hcm_mesh* m, const hcm_problem* p, const hcm_expansion_options* opts,
                                        hcm_expansion** out);
HCM_API size_t hcm_expansion_inclusion_count(const hcm_expansion* e);
HCM_API hcm_status hcm_expansion_term(hcm_expansion* e, size_t j, hcm_field** out);
HCM_API hcm_status hcm_expansion_term_norm(hcm_expansion* e, size_t j, double* out);
HCM_API hcm_status hcm_expansion_compatibility_defect(hcm_expansion* e, size_t j, double* out);
/* c_j into buf[0..M). */
HCM_API hcm_status hcm_expansion_constants(hcm_expansion* e, size_t j, double* buf, size_t len);
HCM_API hcm_status hcm_expansion_characteristic(hcm_expansion* e, size_t m, hcm_field** out);
HCM_API hcm_status hcm_expansion_boundary_corrector(hcm_expansion* e, hcm_field** out);
/* Row-major M x M coupling matrix. */
HCM_API hcm_status hcm_expansion_geom_matrix(hcm_expansion* e, double* buf, size_t len);
HCM_API hcm_status hcm_expansion_galerkin_residual(hcm_expansion* e, double* max_abs);
HCM_API hcm_status hcm_expansion_partial_sum(hcm_expansion* e, double eta, size_t J, hcm_field** out);
/* On HCM_ERR_NON_CONVERGENT_EXPANSION the message carries the last term ratio. */
HCM_API hcm_status hcm_expansion_terms_needed(hcm_expansion* e, double eta, double tol, size_t max_terms,
                                              size_t* out);
HCM_API hcm_status hcm_expansion_decay(hcm_expansion* e, double eta, size_t last, hcm_decay* out);
HCM_API void hcm_expansion_free(hcm_expansion* e);

/* ---- localization ---- */
typedef struct hcm_localization_options {
  int corrector_coupling;
  double cg_tol;
} hcm_localization_options;

typedef struct hcm_delta_row {
  double delta;
  int ok;
  double e_u0, e_u00, e_uc;
  double chi_max_diff;
} hcm_delta_row;

HCM_API void hcm_localization_options_default(hcm_localization_options* out);
HCM_API hcm_status hcm_localized_create(const hcm_mesh* m, const hcm_geometry* g, const hcm_problem* p, double delta,
                                        const hcm_localization_options* opts, hcm_localized** out);
HCM_API hcm_status hcm_localized_u0(const hcm_localized* l, hcm_field** out);
HCM_API hcm_status hcm_localized_u00(const hcm_localized* l, hcm_field** out);
HCM_API hcm_status hcm_localized_uc(const hcm_localized* l, hcm_field** out);
HCM_API hcm_status hcm_localized_characteristic(const hcm_localized* l, size_t m, hcm_field** out);
HCM_API hcm_status hcm_localized_constants(const hcm_localized* l, double* buf, size_t len);
/* Row-major truncated coupling matrix. */
HCM_API hcm_status hcm_localized_matrix(const hcm_localized* l, double* buf, size_t len);
HCM_API void hcm_localized_free(hcm_localized* l);

/* One row per delta; failing deltas give rows with ok = 0 and a message. */
HCM_API hcm_status hcm_sweep_delta(hcm_expansion* e, const hcm_geometry* g, const hcm_problem* p,
                                   const double* deltas, size_t n, const hcm_localization_options* opts,
                                   hcm_sweep** out);
HCM_API size_t hcm_sweep_size(const hcm_sweep* s);
HCM_API hcm_status hcm_sweep_row(const hcm_sweep* s, size_t i, hcm_delta_row* out);
/* Empty string for rows that succeeded; owned by the sweep. */
HCM_API const char* hcm_sweep_row_error(const hcm_sweep* s, size_t i);
HCM_API void hcm_sweep_free(hcm_sweep* s);

#ifdef __cplusplus
}
#endif

#endif
