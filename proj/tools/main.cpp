// hicomsfem command-line driver. Links only against the C API.

#include <hicomsfem/hicomsfem.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

struct Failure : std::runtime_error {
  hcm_status status;
  Failure(hcm_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(hcm_status s, const std::string& context) {
  if (s != HCM_OK) throw Failure(s, context + ": " + hcm_last_error());
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Geometry = std::unique_ptr<hcm_geometry, Deleter<hcm_geometry, hcm_geometry_free>>;
using Mesh = std::unique_ptr<hcm_mesh, Deleter<hcm_mesh, hcm_mesh_free>>;
using Problem = std::unique_ptr<hcm_problem, Deleter<hcm_problem, hcm_problem_free>>;
using Field = std::unique_ptr<hcm_field, Deleter<hcm_field, hcm_field_free>>;
using Expansion = std::unique_ptr<hcm_expansion, Deleter<hcm_expansion, hcm_expansion_free>>;
using Localized = std::unique_ptr<hcm_localized, Deleter<hcm_localized, hcm_localized_free>>;
using Sweep = std::unique_ptr<hcm_sweep, Deleter<hcm_sweep, hcm_sweep_free>>;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// ---- configuration ----

struct Config {
  json geometry = {{"layout", {{"n", 36}, {"radius", 0.07}, {"pattern", "rings"}}}};
  double h = 0.02;
  double min_angle = 20.0;
  std::string mesh_file;
  json f = 1.0;
  json g = json::array({json::array({1.0, 1, 0}), json::array({1.0, 0, 2})});
  std::vector<double> eta{3, 6, 10, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
  std::vector<double> delta{0.001, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double tol = 1e-8;
  std::size_t max_terms = 60;
  std::size_t terms = 2;
  std::size_t fit_terms = 6;
  bool source_in_all_steps = false;
  std::string norm = "h1";
  double cg_tol = 1e-12;
  bool corrector_coupling = true;
  bool write_fields = true;
  std::string output = "out";
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  fs::path base_dir = ".";

  // Parameters that determine results; output location and threads excluded.
  json effective() const {
    return {{"schema_version", kSchemaVersion},
            {"geometry", geometry},
            {"mesh", mesh_file.empty() ? json{{"h", h}, {"min_angle", min_angle}} : json{{"file", mesh_file}}},
            {"problem", {{"f", f}, {"g", g}}},
            {"eta", eta},
            {"delta", delta},
            {"tol", tol},
            {"max_terms", max_terms},
            {"terms", terms},
            {"fit_terms", fit_terms},
            {"expansion", {{"source_in_all_steps", source_in_all_steps}, {"norm", norm}, {"cg_tol", cg_tol}}},
            {"localization", {{"corrector_coupling", corrector_coupling}}},
            {"write_fields", write_fields},
            {"seed", seed}};
  }
};

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw UsageError(where + " must be an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw UsageError("unknown key '" + k + "' in " + where);
}

template <typename T>
T get_as(const json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw UsageError(what + " has the wrong type");
  }
}

double positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw UsageError(what + " must be positive and finite");
  return v;
}

std::vector<double> positive_list(const json& j, const std::string& what) {
  auto v = get_as<std::vector<double>>(j, what);
  for (double x : v) positive(x, what + " entry");
  return v;
}

void check_poly(const json& p, const std::string& what) {
  if (p.is_number()) return;
  if (!p.is_array()) throw UsageError(what + " must be a number or a list of [coef, px, py]");
  for (const auto& t : p)
    if (!t.is_array() || t.size() != 3 || !t[0].is_number() || !t[1].is_number_unsigned() ||
        !t[2].is_number_unsigned())
      throw UsageError(what + " terms must be [coef, px, py] with non-negative integer powers");
}

std::vector<hcm_term> to_terms(const json& p) {
  if (p.is_number()) return {{p.get<double>(), 0, 0}};
  std::vector<hcm_term> out;
  for (const auto& t : p) out.push_back({t[0].get<double>(), t[1].get<int>(), t[2].get<int>()});
  return out;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  reject_unknown(j,
                 {"schema_version", "geometry", "mesh", "problem", "eta", "delta", "tol", "max_terms", "terms",
                  "fit_terms", "expansion", "localization", "write_fields", "output", "seed", "threads"},
                 "config");
  if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion)
    throw UsageError("config must set schema_version to " + std::to_string(kSchemaVersion));
  Config c;
  c.base_dir = fs::path(path).parent_path();
  if (j.contains("geometry")) {
    const json& gj = j["geometry"];
    reject_unknown(gj, {"file", "inline", "layout"}, "geometry");
    if (gj.size() != 1) throw UsageError("geometry needs exactly one of file, inline, layout");
    if (gj.contains("layout")) reject_unknown(gj["layout"], {"n", "radius", "pattern", "seed"}, "geometry.layout");
    if (gj.contains("file")) {
      fs::path p = get_as<std::string>(gj["file"], "geometry.file");
      if (p.is_relative()) p = c.base_dir / p;
      if (!fs::exists(p)) throw UsageError("geometry file " + p.string() + " does not exist");
      c.geometry = {{"file", p.lexically_normal().string()}};
    } else {
      c.geometry = gj;
    }
  }
  if (j.contains("mesh")) {
    const json& mj = j["mesh"];
    reject_unknown(mj, {"h", "min_angle", "file"}, "mesh");
    if (mj.contains("h")) c.h = positive(get_as<double>(mj["h"], "mesh.h"), "mesh.h");
    if (mj.contains("min_angle")) c.min_angle = positive(get_as<double>(mj["min_angle"], "mesh.min_angle"), "mesh.min_angle");
    if (mj.contains("file")) {
      fs::path p = get_as<std::string>(mj["file"], "mesh.file");
      if (p.is_relative()) p = c.base_dir / p;
      if (!fs::exists(p)) throw UsageError("mesh file " + p.string() + " does not exist");
      c.mesh_file = p.lexically_normal().string();
    }
  }
  if (j.contains("problem")) {
    const json& pj = j["problem"];
    reject_unknown(pj, {"f", "g"}, "problem");
    if (pj.contains("f")) check_poly(c.f = pj["f"], "problem.f");
    if (pj.contains("g")) check_poly(c.g = pj["g"], "problem.g");
  }
  if (j.contains("eta")) c.eta = positive_list(j["eta"], "eta");
  if (j.contains("delta")) c.delta = positive_list(j["delta"], "delta");
  if (j.contains("tol")) c.tol = positive(get_as<double>(j["tol"], "tol"), "tol");
  if (j.contains("max_terms")) c.max_terms = get_as<std::size_t>(j["max_terms"], "max_terms");
  if (j.contains("terms")) c.terms = get_as<std::size_t>(j["terms"], "terms");
  if (j.contains("fit_terms")) c.fit_terms = get_as<std::size_t>(j["fit_terms"], "fit_terms");
  if (j.contains("expansion")) {
    const json& ej = j["expansion"];
    reject_unknown(ej, {"source_in_all_steps", "norm", "cg_tol"}, "expansion");
    if (ej.contains("source_in_all_steps"))
      c.source_in_all_steps = get_as<bool>(ej["source_in_all_steps"], "expansion.source_in_all_steps");
    if (ej.contains("norm")) c.norm = get_as<std::string>(ej["norm"], "expansion.norm");
    if (ej.contains("cg_tol")) c.cg_tol = positive(get_as<double>(ej["cg_tol"], "expansion.cg_tol"), "expansion.cg_tol");
  }
  if (j.contains("localization")) {
    const json& lj = j["localization"];
    reject_unknown(lj, {"corrector_coupling"}, "localization");
    if (lj.contains("corrector_coupling"))
      c.corrector_coupling = get_as<bool>(lj["corrector_coupling"], "localization.corrector_coupling");
  }
  if (j.contains("write_fields")) c.write_fields = get_as<bool>(j["write_fields"], "write_fields");
  if (j.contains("output")) {
    fs::path p = get_as<std::string>(j["output"], "output");
    c.output = (p.is_relative() ? c.base_dir / p : p).lexically_normal().string();
  }
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("threads")) c.threads = get_as<std::size_t>(j["threads"], "threads");
  return c;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size()) throw UsageError(what + ": cannot parse '" + tok + "'");
    out.push_back(positive(v, what + " entry"));
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- run context ----

class Run {
public:
  Run(std::string command, Config cfg) : command_(std::move(command)), cfg_(std::move(cfg)), out_(cfg_.output) {
    fs::create_directories(out_);
    hcm_set_log_callback(&Run::on_log, this);
  }
  ~Run() { hcm_set_log_callback(nullptr, nullptr); }

  const Config& cfg() const { return cfg_; }

  fs::path path(const std::string& name) const { return out_ / name; }

  // Registers an artifact; returns its path.
  std::string artifact(const std::string& name) {
    artifacts_.push_back(name);
    return path(name).string();
  }

  template <typename F>
  auto phase(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Stop {
      Run* run;
      std::string name;
      std::chrono::steady_clock::time_point t0;
      ~Stop() {
        run->timings_[name] =
            run->timings_.value(name, 0.0) +
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
    } stop{this, name, t0};
    return body();
  }

  void note_row_error(json row) { row_errors_.push_back(std::move(row)); }
  void set_mesh(const hcm_mesh* m) {
    hcm_mesh_stats s;
    check(hcm_mesh_stats_get(m, &s), "mesh statistics");
    mesh_stats_ = {{"vertices", s.vertices},         {"triangles", s.triangles},
                   {"boundary_edges", s.boundary_edges}, {"regions", s.regions},
                   {"h", s.h},                       {"min_angle_deg", s.min_angle_deg},
                   {"max_aspect", s.max_aspect},     {"max_circumradius", s.max_circumradius}};
  }
  void extra(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write_csv(const std::string& name, const std::string& header, const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(artifact(name), std::ios::binary);
    if (!f) throw Failure(HCM_ERR_IO, "cannot write " + path(name).string());
    f << header << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
      f << '\n';
    }
    if (!f) throw Failure(HCM_ERR_IO, "write failed for " + path(name).string());
  }

  void write_field(const hcm_field* u, const std::string& stem, const std::string& name) {
    if (!cfg_.write_fields) return;
    check(hcm_field_write_vtk(u, name.c_str(), artifact(stem + ".vtk").c_str()), "writing " + stem + ".vtk");
    check(hcm_field_write_csv(u, artifact(stem + ".csv").c_str()), "writing " + stem + ".csv");
  }

  void finish(const std::string& error = {}) {
    const json eff = cfg_.effective();
    json m = {{"command", command_},
              {"version", hcm_version()},
              {"config_hash", hex64(fnv1a(eff.dump()))},
              {"config", eff},
              {"threads", hcm_get_threads()},
              {"status", error.empty() ? "ok" : "failed"},
              {"timings_s", timings_},
              {"warnings", warnings_}};
    if (!error.empty()) m["error"] = error;
    if (!mesh_stats_.is_null()) m["mesh"] = mesh_stats_;
    if (!row_errors_.empty()) m["row_errors"] = row_errors_;
    for (auto& [k, v] : extra_.items()) m[k] = v;
    artifacts_.push_back("manifest.json");
    m["artifacts"] = artifacts_;
    std::ofstream f(path("manifest.json"), std::ios::binary);
    f << m.dump(2) << '\n';
  }

private:
  static void on_log(hcm_log_level level, const char* msg, void* user) {
    auto* self = static_cast<Run*>(user);
    if (level < HCM_LOG_WARNING) return;
    std::lock_guard lock(self->log_mutex_);
    self->warnings_.push_back(msg);
    std::cerr << (level == HCM_LOG_ERROR ? "error: " : "warning: ") << msg << '\n';
  }

  std::string command_;
  Config cfg_;
  fs::path out_;
  std::vector<std::string> artifacts_;
  json timings_ = json::object();
  json mesh_stats_;
  json row_errors_ = json::array();
  json extra_ = json::object();
  std::vector<std::string> warnings_;
  std::mutex log_mutex_;
};

// ---- shared pipeline pieces ----

Geometry build_geometry(Run& run) {
  const json& gj = run.cfg().geometry;
  hcm_geometry* g = nullptr;
  run.phase("geometry", [&] {
    if (gj.contains("file")) {
      check(hcm_geometry_load(gj["file"].get<std::string>().c_str(), &g), "loading geometry");
    } else if (gj.contains("inline")) {
      check(hcm_geometry_from_json(gj["inline"].dump().c_str(), &g), "inline geometry");
    } else {
      const json& l = gj["layout"];
      const auto n = get_as<std::size_t>(l.value("n", json(36)), "geometry.layout.n");
      const double r = positive(get_as<double>(l.value("radius", json(0.07)), "geometry.layout.radius"), "radius");
      const auto pattern = get_as<std::string>(l.value("pattern", json("rings")), "geometry.layout.pattern");
      const auto seed = l.contains("seed") ? get_as<std::uint64_t>(l["seed"], "geometry.layout.seed") : run.cfg().seed;
      check(hcm_geometry_layout(n, r, pattern.c_str(), seed, &g), "layout");
    }
  });
  Geometry out(g);
  hcm_validation v;
  check(hcm_geometry_validate(out.get(), &v), "geometry validation");
  if (!v.ok) throw Failure(HCM_ERR_GEOMETRY_INVALID, std::string("geometry is invalid: ") + hcm_last_error());
  run.extra("geometry", {{"inclusions", hcm_geometry_inclusion_count(out.get())},
                         {"min_separation", std::isfinite(v.min_separation) ? json(v.min_separation) : json()},
                         {"min_clearance", std::isfinite(v.min_clearance) ? json(v.min_clearance) : json()}});
  return out;
}

Mesh build_mesh(Run& run, const hcm_geometry* g) {
  hcm_mesh* m = nullptr;
  run.phase("mesh", [&] {
    if (!run.cfg().mesh_file.empty())
      check(hcm_mesh_load(run.cfg().mesh_file.c_str(), &m), "loading mesh");
    else
      check(hcm_mesh_generate(g, run.cfg().h, run.cfg().min_angle, &m), "mesh generation");
  });
  Mesh out(m);
  run.set_mesh(out.get());
  return out;
}

Problem build_problem(const Config& c) {
  const auto f = to_terms(c.f);
  const auto g = to_terms(c.g);
  hcm_problem* p = nullptr;
  check(hcm_problem_create(f.data(), f.size(), g.data(), g.size(), &p), "problem data");
  return Problem(p);
}

hcm_norm norm_of(const Config& c) {
  if (c.norm == "h1") return HCM_NORM_H1;
  if (c.norm == "h1-seminorm") return HCM_NORM_H1_SEMINORM;
  throw UsageError("expansion.norm must be h1 or h1-seminorm");
}

Expansion build_expansion(Run& run, const hcm_mesh* m, const hcm_problem* p) {
  hcm_expansion_options o;
  hcm_expansion_options_default(&o);
  o.source_in_all_steps = run.cfg().source_in_all_steps ? 1 : 0;
  o.cg_tol = run.cfg().cg_tol;
  o.norm = norm_of(run.cfg());
  hcm_expansion* e = nullptr;
  check(hcm_expansion_create(m, p, &o, &e), "expansion");
  return Expansion(e);
}

hcm_localization_options loc_options(const Config& c) {
  hcm_localization_options o;
  hcm_localization_options_default(&o);
  o.corrector_coupling = c.corrector_coupling ? 1 : 0;
  o.cg_tol = c.cg_tol;
  return o;
}

std::string idx(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%02zu", i);
  return buf;
}

// ---- commands ----

void cmd_layout(Run& run) {
  auto g = build_geometry(run);
  char* text = nullptr;
  check(hcm_geometry_to_json(g.get(), &text), "geometry serialization");
  std::ofstream f(run.artifact("geometry.json"), std::ios::binary);
  f << text << '\n';
  hcm_string_free(text);
}

void cmd_mesh(Run& run) {
  auto g = build_geometry(run);
  auto m = build_mesh(run, g.get());
  run.phase("write", [&] {
    check(hcm_mesh_save(m.get(), run.artifact("mesh.txt").c_str()), "saving mesh");
    check(hcm_mesh_write_vtk(m.get(), run.artifact("mesh.vtk").c_str()), "writing mesh.vtk");
  });
}

void cmd_solve_fine(Run& run) {
  auto g = build_geometry(run);
  auto m = build_mesh(run, g.get());
  auto p = build_problem(run.cfg());
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < run.cfg().eta.size(); ++k) {
    const double eta = run.cfg().eta[k];
    hcm_field* u = nullptr;
    hcm_solve_info info{};
    run.phase("fine_solve", [&] { check(hcm_solve_fine(m.get(), p.get(), eta, run.cfg().cg_tol, &u, &info), "fine solve at eta=" + fmt(eta)); });
    Field field(u);
    double nrm = 0.0;
    check(hcm_field_norm(field.get(), norm_of(run.cfg()), &nrm), "norm");
    rows.push_back({fmt(eta), std::to_string(info.iterations), fmt(info.residual), std::to_string(info.rounding_limited), fmt(nrm)});
    run.phase("write", [&] { run.write_field(field.get(), "fine_" + idx(k), "u_eta"); });
  }
  run.write_csv("fine.csv", "eta,iterations,residual,rounding_limited,norm", rows);
}

void cmd_expand(Run& run) {
  auto g = build_geometry(run);
  auto m = build_mesh(run, g.get());
  auto p = build_problem(run.cfg());
  auto e = run.phase("expansion", [&] { return build_expansion(run, m.get(), p.get()); });
  const std::size_t J = run.cfg().terms;
  const std::size_t M = hcm_expansion_inclusion_count(e.get());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::vector<double>> consts(J + 1, std::vector<double>(M));
  run.phase("terms", [&] {
    for (std::size_t j = 0; j <= J; ++j) {
      double nrm = 0.0, defect = 0.0;
      check(hcm_expansion_term_norm(e.get(), j, &nrm), "term " + std::to_string(j));
      check(hcm_expansion_compatibility_defect(e.get(), j, &defect), "term " + std::to_string(j));
      check(hcm_expansion_constants(e.get(), j, consts[j].data(), M), "constants");
      rows.push_back({std::to_string(j), fmt(nrm), fmt(defect)});
    }
  });
  double galerkin = 0.0;
  check(hcm_expansion_galerkin_residual(e.get(), &galerkin), "galerkin residual");
  run.extra("galerkin_residual_max", galerkin);
  run.write_csv("terms.csv", "j,term_norm,compatibility_defect", rows);
  std::vector<std::vector<std::string>> crows;
  std::string header = "inclusion";
  for (std::size_t j = 0; j <= J; ++j) header += ",c_" + std::to_string(j);
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<std::string> r{std::to_string(i + 1)};
    for (std::size_t j = 0; j <= J; ++j) r.push_back(fmt(consts[j][i]));
    crows.push_back(std::move(r));
  }
  run.write_csv("constants.csv", header, crows);
  run.phase("write", [&] {
    for (std::size_t j = 0; j <= J; ++j) {
      hcm_field* u = nullptr;
      check(hcm_expansion_term(e.get(), j, &u), "term");
      Field f(u);
      run.write_field(f.get(), "term_" + idx(j), "u_" + std::to_string(j));
    }
    for (std::size_t k = 0; k < run.cfg().eta.size(); ++k) {
      hcm_field* u = nullptr;
      check(hcm_expansion_partial_sum(e.get(), run.cfg().eta[k], J, &u), "partial sum");
      Field f(u);
      run.write_field(f.get(), "sum_" + idx(k), "S_J");
    }
  });
}

void cmd_sweep_eta(Run& run) {
  const auto& etas = run.cfg().eta;
  for (std::size_t k = 1; k < etas.size(); ++k)
    if (!(etas[k - 1] < etas[k])) throw UsageError("eta list must be sorted ascending for sweep-eta");
  if (etas.empty()) throw UsageError("eta list is empty");
  auto g = build_geometry(run);
  auto m = build_mesh(run, g.get());
  auto p = build_problem(run.cfg());
  auto e = run.phase("expansion", [&] { return build_expansion(run, m.get(), p.get()); });
  std::vector<std::vector<std::string>> rows, drows;
  run.phase("sweep", [&] {
    for (double eta : etas) {
      size_t n = 0;
      const hcm_status s = hcm_expansion_terms_needed(e.get(), eta, run.cfg().tol, run.cfg().max_terms, &n);
      if (s == HCM_OK) {
        rows.push_back({fmt(eta), std::to_string(n)});
      } else if (s == HCM_ERR_NON_CONVERGENT_EXPANSION) {
        rows.push_back({fmt(eta), "nonconvergent"});
        run.note_row_error({{"eta", eta}, {"error", hcm_last_error()}});
      } else {
        check(s, "terms_needed at eta=" + fmt(eta));
      }
      hcm_decay d{};
      const hcm_status ds = hcm_expansion_decay(e.get(), eta, run.cfg().fit_terms, &d);
      if (ds == HCM_OK)
        drows.push_back({fmt(eta), fmt(d.rho), fmt(d.r2), std::to_string(d.first), std::to_string(d.last), std::to_string(d.exact)});
      else {
        drows.push_back({fmt(eta), "nan", "nan", "0", "0", "0"});
        run.note_row_error({{"eta", eta}, {"error", hcm_last_error()}});
      }
    }
  });
  run.write_csv("sweep_eta.csv", "eta,terms_needed", rows);
  run.write_csv("decay.csv", "eta,rho,r2,first,last,exact", drows);
}

std::vector<hcm_delta_row> run_sweep(Run& run, hcm_expansion* e, const hcm_geometry* g, const hcm_problem* p,
                                     std::vector<std::string>* errors) {
  const auto& deltas = run.cfg().delta;
  if (deltas.empty()) throw UsageError("delta list is empty");
  const auto opts = loc_options(run.cfg());
  hcm_sweep* s = nullptr;
  run.phase("sweep", [&] { check(hcm_sweep_delta(e, g, p, deltas.data(), deltas.size(), &opts, &s), "delta sweep"); });
  Sweep sweep(s);
  std::vector<hcm_delta_row> rows(hcm_sweep_size(s));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(hcm_sweep_row(s, i, &rows[i]), "sweep row");
    errors->push_back(hcm_sweep_row_error(s, i));
    if (!rows[i].ok) run.note_row_error({{"delta", rows[i].delta}, {"error", errors->back()}});
  }
  return rows;
}

void cmd_sweep_delta(Run& run) {
  if (run.cfg().delta.empty()) throw UsageError("delta list is empty");
  auto g = build_geometry(run);
  auto m = build_mesh(run, g.get());
  auto p = build_problem(run.cfg());
  auto e = run.phase("expansion", [&] { return build_expansion(run, m.get(), p.get()); });
  run.phase("expansion", [&] {
    double n = 0.0;
    check(hcm_expansion_term_norm(e.get(), 0, &n), "leading term");
  });
  std::vector<std::string> errors;
  const auto rows = run_sweep(run, e.get(), g.get(), p.get(), &errors);
  std::vector<std::vector<std::string>> out, chi;
  for (const auto& r : rows) {
    out.push_back({fmt(r.delta), fmt(r.e_u0), fmt(r.e_u00), fmt(r.e_uc)});
    chi.push_back({fmt(r.delta), fmt(r.chi_max_diff)});
  }
  run.write_csv("sweep_delta.csv", "delta,e_u0,e_u00,e_uc", out);
  run.write_csv("chi_diff.csv", "delta,chi_max_diff", chi);
}

void cmd_localize(Run& run) {
  if (run.cfg().delta.empty()) throw UsageError("delta list is empty");
  auto g = build_geometry(run);
  auto m = build_mesh(run, g.get());
  auto p = build_problem(run.cfg());
  const auto opts = loc_options(run.cfg());
  auto e = run.phase("expansion", [&] { return build_expansion(run, m.get(), p.get()); });
  std::vector<std::string> errors;
  const auto rows = run_sweep(run, e.get(), g.get(), p.get(), &errors);
  std::vector<std::vector<std::string>> out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    out.push_back({fmt(r.delta), fmt(r.e_u0), fmt(r.e_u00), fmt(r.e_uc), fmt(r.chi_max_diff)});
    if (!r.ok) continue;
    hcm_localized* l = nullptr;
    run.phase("localize", [&] { check(hcm_localized_create(m.get(), g.get(), p.get(), r.delta, &opts, &l), "localized u0"); });
    Localized loc(l);
    run.phase("write", [&] {
      hcm_field* u = nullptr;
      check(hcm_localized_u0(loc.get(), &u), "u0");
      Field f(u);
      run.write_field(f.get(), "u0_delta_" + idx(k), "u0_delta");
    });
  }
  run.write_csv("localize.csv", "delta,e_u0,e_u00,e_uc,chi_max_diff", out);
}

void cmd_compare(Run& run) {
  if (run.cfg().eta.empty()) throw UsageError("eta list is empty");
  auto g = build_geometry(run);
  auto m = build_mesh(run, g.get());
  auto p = build_problem(run.cfg());
  const hcm_norm kind = norm_of(run.cfg());
  auto e = run.phase("expansion", [&] { return build_expansion(run, m.get(), p.get()); });
  std::vector<std::vector<std::string>> rows;
  json fine_info = json::array();
  for (std::size_t k = 0; k < run.cfg().eta.size(); ++k) {
    const double eta = run.cfg().eta[k];
    hcm_field* u = nullptr;
    hcm_solve_info info{};
    run.phase("fine_solve", [&] { check(hcm_solve_fine(m.get(), p.get(), eta, run.cfg().cg_tol, &u, &info), "fine solve at eta=" + fmt(eta)); });
    Field fine(u);
    fine_info.push_back({{"eta", eta}, {"iterations", info.iterations}, {"residual", info.residual},
                         {"rounding_limited", info.rounding_limited != 0}});
    run.phase("compare", [&] {
      for (std::size_t J = 0; J <= run.cfg().terms; ++J) {
        hcm_field* s = nullptr;
        check(hcm_expansion_partial_sum(e.get(), eta, J, &s), "partial sum");
        Field sum(s);
        double err = 0.0;
        check(hcm_field_relative_error(fine.get(), sum.get(), fine.get(), kind, &err), "remainder");
        rows.push_back({fmt(eta), std::to_string(J), fmt(err)});
        if (J == run.cfg().terms) run.write_field(sum.get(), "sum_" + idx(k), "S_J");
      }
    });
    run.write_field(fine.get(), "fine_" + idx(k), "u_eta");
  }
  run.extra("fine_solves", fine_info);
  run.write_csv("compare.csv", "eta,J,remainder", rows);
}

int exit_code(hcm_status s) { return s == HCM_OK ? 0 : 10 + static_cast<int>(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"High-contrast multiscale FEM driver"};
  app.set_help_flag("--help", "Print help");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(hcm_version()));

  std::string config_path, out_dir, eta_list, delta_list, pattern = "rings";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, n, terms;
  std::optional<double> h, tol, radius;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Layout seed");
  app.add_option("--threads", threads, "Worker threads (fallback: HICOMSFEM_THREADS)");
  app.add_option("--h", h, "Target mesh size");
  app.add_option("--eta", eta_list, "Comma-separated contrast values");
  app.add_option("--delta", delta_list, "Comma-separated localization radii");
  app.add_option("--tol", tol, "Term-size tolerance for sweep-eta");
  app.add_option("--terms", terms, "Number of correction terms J");
  app.add_option("--n", n, "Number of inclusions (layout)");
  app.add_option("--radius", radius, "Inclusion radius (layout)");
  app.add_option("--pattern", pattern, "Layout pattern: rings or jittered-grid");

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(Run&);
  };
  const std::vector<Command> commands{
      {"layout", "Generate an inclusion layout", cmd_layout},
      {"mesh", "Generate and save a mesh", cmd_mesh},
      {"solve-fine", "Direct fine-scale solve for each eta", cmd_solve_fine},
      {"expand", "Compute expansion terms and partial sums", cmd_expand},
      {"localize", "Localized leading terms for each delta", cmd_localize},
      {"sweep-eta", "Terms needed versus eta", cmd_sweep_eta},
      {"sweep-delta", "Localization error versus delta", cmd_sweep_delta},
      {"compare", "Expansion remainder against the fine solve", cmd_compare},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) subs.push_back(app.add_subcommand(c.name, c.help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help prints and succeeds; every other parse problem is a usage error.
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  std::size_t which = 0;
  for (; which < subs.size(); ++which)
    if (subs[which]->parsed()) break;

  std::unique_ptr<Run> run;
  try {
    Config cfg = config_path.empty() ? Config{} : load_config(config_path);
    if (!out_dir.empty()) cfg.output = out_dir;
    if (seed) cfg.seed = *seed;
    if (h) cfg.h = positive(*h, "--h"), cfg.mesh_file.clear();
    if (!eta_list.empty()) cfg.eta = parse_list(eta_list, "--eta");
    if (!delta_list.empty()) cfg.delta = parse_list(delta_list, "--delta");
    if (tol) cfg.tol = positive(*tol, "--tol");
    if (terms) cfg.terms = *terms;
    if (n || radius || app.count("--pattern")) {
      json l = cfg.geometry.contains("layout") ? cfg.geometry["layout"] : json::object();
      if (n) l["n"] = *n;
      if (radius) l["radius"] = positive(*radius, "--radius");
      if (app.count("--pattern")) l["pattern"] = pattern;
      cfg.geometry = {{"layout", l}};
    }
    if (seed && cfg.geometry.contains("layout")) cfg.geometry["layout"].erase("seed");
    if (threads) cfg.threads = *threads;
    norm_of(cfg);

    // Thread count: flag, then config, then environment, then 1.
    std::size_t nthreads = cfg.threads;
    if (nthreads == 0)
      if (const char* env = std::getenv("HICOMSFEM_THREADS")) nthreads = std::strtoull(env, nullptr, 10);
    hcm_set_threads(nthreads == 0 ? 1 : nthreads);

    run = std::make_unique<Run>(commands[which].name, cfg);
    commands[which].fn(*run);
    run->finish();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (run) run->finish(e.what());
    return 2;
  } catch (const Failure& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (run) run->finish(e.what());
    return exit_code(e.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (run) run->finish(e.what());
    return 1;
  }
}
