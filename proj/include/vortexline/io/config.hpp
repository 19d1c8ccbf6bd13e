#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vortexline/chaos.hpp"

namespace vortexline::io {

using nlohmann::json;

inline std::vector<ModeInput> demo_modes() {
  const double a = 1.0 / std::sqrt(3.0);
  return {{Complex(a, 0.0), {0, 0, 0}}, {Complex(a, 0.0), {1, 0, 1}}, {Complex(a, 0.0), {0, 1, 2}}};
}

struct WavefunctionConfig {
  Vec3 omega = demo_omega();
  std::vector<ModeInput> modes = demo_modes();
};

struct NodalConfig {
  double ds = 0.02;
  double node_tol_rel = 1e-12;
  int scan_resolution = 9;
  std::size_t max_points = 20000;
  std::optional<Vec3> seed;  // trace only the line through this point
};

struct TrajectoryConfig {
  Vec3 x0{-0.7, -1.1, 1.3};
  double t_start = 0.0;
  double t_end = 20.0;
  double sample_dt = 0.05;
};

struct ChaosConfig {
  double t0 = 0.05;
  int substeps = 5;
  double line_dt = 0.1;
  double threshold_factor = 3.0;
  std::optional<double> jump_threshold;
  std::optional<double> window;
  double far_distance = 1.0;
  Vec3 xi0 = Vec3::UnitX();
  DeviationMode mode = DeviationMode::variational;
};

struct FieldConfig {
  std::array<int, 3> resolution{21, 21, 21};
};

struct XLineConfig {
  double x_tol_rel = 1e-10;
  double fd_step = 1e-6;
  double max_radius = 4.0;
};

struct ManifoldConfig {
  double eps_rel = 1e-5;
  double arc_budget_rel = 50.0;
  double domain_rel = 3.0;
  int stride = 25;               // every stride-th X-line entry
  std::size_t max_polyline = 400;
};

struct HopfConfig {
  double t_start = 3.0;
  double t_end = 5.0;
  int steps = 40;
  double cycle_search = 0.2;     // limit-cycle search radius in units of 1/|f3|^(1/2)
};

struct RunConfig {
  WavefunctionConfig wavefunction;
  double time = 4.0;
  Box box;
  NodalConfig nodal;
  IntegratorOptions integrator;
  TrajectoryConfig trajectory;
  ChaosConfig chaos;
  FieldConfig field;
  XLineConfig xline;
  ManifoldConfig manifolds;
  HopfConfig hopf;
  int threads = 0;
  std::string output_dir = "out";

  WavefunctionSpec spec() const { return WavefunctionSpec(wavefunction.modes, wavefunction.omega); }
  NodalOptions nodal_options() const {
    NodalOptions o;
    o.ds = nodal.ds;
    o.node_tol_rel = nodal.node_tol_rel;
    o.max_points = nodal.max_points;
    o.box = box;
    return o;
  }
  XPointOptions xpoint_options() const {
    XPointOptions o;
    o.x_tol_rel = xline.x_tol_rel;
    o.fd_step = xline.fd_step;
    o.max_radius = xline.max_radius;
    return o;
  }
  ManifoldOptions manifold_options() const {
    ManifoldOptions o;
    o.eps_rel = manifolds.eps_rel;
    o.arc_budget_rel = manifolds.arc_budget_rel;
    o.domain_rel = manifolds.domain_rel;
    o.max_polyline = manifolds.max_polyline;
    return o;
  }
  ChaosOptions chaos_options(unsigned nthreads) const {
    ChaosOptions o;
    o.integrator = integrator;
    o.t0 = chaos.t0;
    o.substeps = chaos.substeps;
    o.xi0 = chaos.xi0;
    o.mode = chaos.mode;
    o.distance.nodal = nodal_options();
    o.distance.xpoint = xpoint_options();
    o.distance.line_dt = chaos.line_dt;
    o.distance.scan_resolution = nodal.scan_resolution;
    o.distance.threads = nthreads;
    o.correlation.threshold_factor = chaos.threshold_factor;
    o.correlation.jump_threshold = chaos.jump_threshold;
    o.correlation.window = chaos.window;
    o.correlation.far_distance = chaos.far_distance;
    return o;
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw Error(ErrorCode::ConfigError, where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ConfigError, where + "." + key + ": wrong type");
  }
}

inline Vec3 to_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ConfigError, where + ": expected 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::ConfigError, where + ": expected 3 numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline void read_vec3(const json& j, const char* key, Vec3& out, const std::string& where) {
  if (j.contains(key)) out = to_vec3(j.at(key), where + "." + key);
}

inline json from_vec3(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace detail

/// Parses and validates a configuration. Unknown keys are rejected; absent
/// keys keep their defaults. The default wavefunction is the three-mode
/// demo superposition.
inline RunConfig parse_config(const json& j) {
  using namespace detail;
  RunConfig c;
  check_keys(j, "config", {"wavefunction", "time", "box", "nodal", "integrator", "trajectory", "chaos", "field",
                           "xline", "manifolds", "hopf", "threads", "output"});
  if (j.contains("wavefunction")) {
    const json& w = j["wavefunction"];
    check_keys(w, "wavefunction", {"omega", "modes"});
    read_vec3(w, "omega", c.wavefunction.omega, "wavefunction");
    if (w.contains("modes")) {
      if (!w["modes"].is_array()) throw Error(ErrorCode::ConfigError, "wavefunction.modes: expected an array");
      c.wavefunction.modes.clear();
      for (const json& m : w["modes"]) {
        check_keys(m, "wavefunction.modes[]", {"re", "im", "n1", "n2", "n3"});
        ModeInput mi;
        double re = 0.0, im = 0.0;
        read(m, "re", re, "mode");
        read(m, "im", im, "mode");
        mi.coeff = Complex(re, im);
        read(m, "n1", mi.qnums.n1, "mode");
        read(m, "n2", mi.qnums.n2, "mode");
        read(m, "n3", mi.qnums.n3, "mode");
        c.wavefunction.modes.push_back(mi);
      }
    }
  }
  if (c.wavefunction.modes.empty()) throw Error(ErrorCode::ConfigError, "wavefunction.modes: at least one mode required");
  read(j, "time", c.time, "config");
  if (j.contains("box")) {
    check_keys(j["box"], "box", {"lo", "hi"});
    read_vec3(j["box"], "lo", c.box.lo, "box");
    read_vec3(j["box"], "hi", c.box.hi, "box");
  }
  if (j.contains("nodal")) {
    const json& n = j["nodal"];
    check_keys(n, "nodal", {"ds", "node_tol_rel", "scan_resolution", "max_points", "seed"});
    read(n, "ds", c.nodal.ds, "nodal");
    read(n, "node_tol_rel", c.nodal.node_tol_rel, "nodal");
    read(n, "scan_resolution", c.nodal.scan_resolution, "nodal");
    read(n, "max_points", c.nodal.max_points, "nodal");
    if (n.contains("seed") && !n["seed"].is_null()) c.nodal.seed = to_vec3(n["seed"], "nodal.seed");
  }
  if (j.contains("integrator")) {
    const json& n = j["integrator"];
    check_keys(n, "integrator", {"abs_tol", "rel_tol", "max_step", "min_step", "node_guard", "max_steps"});
    read(n, "abs_tol", c.integrator.abs_tol, "integrator");
    read(n, "rel_tol", c.integrator.rel_tol, "integrator");
    read(n, "max_step", c.integrator.max_step, "integrator");
    read(n, "min_step", c.integrator.min_step, "integrator");
    read(n, "node_guard", c.integrator.node_guard, "integrator");
    read(n, "max_steps", c.integrator.max_steps, "integrator");
  }
  if (j.contains("trajectory")) {
    const json& n = j["trajectory"];
    check_keys(n, "trajectory", {"x0", "t_start", "t_end", "sample_dt"});
    read_vec3(n, "x0", c.trajectory.x0, "trajectory");
    read(n, "t_start", c.trajectory.t_start, "trajectory");
    read(n, "t_end", c.trajectory.t_end, "trajectory");
    read(n, "sample_dt", c.trajectory.sample_dt, "trajectory");
  }
  if (j.contains("chaos")) {
    const json& n = j["chaos"];
    check_keys(n, "chaos", {"t0", "substeps", "line_dt", "threshold_factor", "jump_threshold", "window",
                            "far_distance", "xi0", "mode"});
    read(n, "t0", c.chaos.t0, "chaos");
    read(n, "substeps", c.chaos.substeps, "chaos");
    read(n, "line_dt", c.chaos.line_dt, "chaos");
    read(n, "threshold_factor", c.chaos.threshold_factor, "chaos");
    if (n.contains("jump_threshold") && !n["jump_threshold"].is_null()) {
      double v = 0.0;
      read(n, "jump_threshold", v, "chaos");
      c.chaos.jump_threshold = v;
    }
    if (n.contains("window") && !n["window"].is_null()) {
      double v = 0.0;
      read(n, "window", v, "chaos");
      c.chaos.window = v;
    }
    read(n, "far_distance", c.chaos.far_distance, "chaos");
    read_vec3(n, "xi0", c.chaos.xi0, "chaos");
    if (n.contains("mode")) {
      std::string m;
      read(n, "mode", m, "chaos");
      if (m == "variational") c.chaos.mode = DeviationMode::variational;
      else if (m == "finite_separation") c.chaos.mode = DeviationMode::finite_separation;
      else throw Error(ErrorCode::ConfigError, "chaos.mode: expected variational or finite_separation");
    }
  }
  if (j.contains("field")) {
    check_keys(j["field"], "field", {"resolution"});
    const json& r = j["field"].value("resolution", json());
    if (r.is_number_integer()) c.field.resolution = {r.get<int>(), r.get<int>(), r.get<int>()};
    else if (r.is_array() && r.size() == 3) c.field.resolution = r.get<std::array<int, 3>>();
    else if (!r.is_null()) throw Error(ErrorCode::ConfigError, "field.resolution: expected an integer or 3 integers");
  }
  if (j.contains("xline")) {
    const json& n = j["xline"];
    check_keys(n, "xline", {"x_tol_rel", "fd_step", "max_radius"});
    read(n, "x_tol_rel", c.xline.x_tol_rel, "xline");
    read(n, "fd_step", c.xline.fd_step, "xline");
    read(n, "max_radius", c.xline.max_radius, "xline");
  }
  if (j.contains("manifolds")) {
    const json& n = j["manifolds"];
    check_keys(n, "manifolds", {"eps_rel", "arc_budget_rel", "domain_rel", "stride", "max_polyline"});
    read(n, "eps_rel", c.manifolds.eps_rel, "manifolds");
    read(n, "arc_budget_rel", c.manifolds.arc_budget_rel, "manifolds");
    read(n, "domain_rel", c.manifolds.domain_rel, "manifolds");
    read(n, "stride", c.manifolds.stride, "manifolds");
    read(n, "max_polyline", c.manifolds.max_polyline, "manifolds");
  }
  if (j.contains("hopf")) {
    const json& n = j["hopf"];
    check_keys(n, "hopf", {"t_start", "t_end", "steps", "cycle_search"});
    read(n, "t_start", c.hopf.t_start, "hopf");
    read(n, "t_end", c.hopf.t_end, "hopf");
    read(n, "steps", c.hopf.steps, "hopf");
    read(n, "cycle_search", c.hopf.cycle_search, "hopf");
  }
  read(j, "threads", c.threads, "config");
  if (j.contains("output")) {
    check_keys(j["output"], "output", {"dir"});
    read(j["output"], "dir", c.output_dir, "output");
  }

  // Validation.
  for (int i = 0; i < 3; ++i) {
    if (!(c.wavefunction.omega[i] > 0.0)) throw Error(ErrorCode::ConfigError, "wavefunction.omega must be positive");
    if (!(c.box.hi[i] > c.box.lo[i])) throw Error(ErrorCode::ConfigError, "box.hi must exceed box.lo");
    if (c.field.resolution[i] < 1) throw Error(ErrorCode::ConfigError, "field.resolution must be >= 1");
  }
  for (const auto& m : c.wavefunction.modes)
    if (m.qnums.n1 < 0 || m.qnums.n2 < 0 || m.qnums.n3 < 0) throw Error(ErrorCode::ConfigError, "quantum numbers must be >= 0");
  if (!(c.nodal.ds > 0.0)) throw Error(ErrorCode::ConfigError, "nodal.ds must be positive");
  if (c.nodal.scan_resolution < 2) throw Error(ErrorCode::ConfigError, "nodal.scan_resolution must be >= 2");
  if (!(c.trajectory.sample_dt > 0.0)) throw Error(ErrorCode::ConfigError, "trajectory.sample_dt must be positive");
  if (!(c.chaos.t0 > 0.0) || c.chaos.substeps < 1 || !(c.chaos.line_dt > 0.0))
    throw Error(ErrorCode::ConfigError, "chaos.t0, chaos.substeps and chaos.line_dt must be positive");
  if (!(c.chaos.xi0.norm() > 0.0)) throw Error(ErrorCode::ConfigError, "chaos.xi0 must be nonzero");
  if (c.manifolds.stride < 1 || c.manifolds.max_polyline < 2)
    throw Error(ErrorCode::ConfigError, "manifolds.stride >= 1 and manifolds.max_polyline >= 2 required");
  if (c.hopf.steps < 1 || !(c.hopf.t_end > c.hopf.t_start))
    throw Error(ErrorCode::ConfigError, "hopf.steps >= 1 and hopf.t_end > hopf.t_start required");
  if (c.threads < 0) throw Error(ErrorCode::ConfigError, "threads must be >= 0");
  if (!(c.integrator.abs_tol > 0.0) || !(c.integrator.rel_tol > 0.0))
    throw Error(ErrorCode::ConfigError, "integrator tolerances must be positive");
  return c;
}

/// Full serialisation: every field, defaults included.
inline json to_json(const RunConfig& c) {
  using detail::from_vec3;
  json modes = json::array();
  for (const auto& m : c.wavefunction.modes)
    modes.push_back({{"re", m.coeff.real()}, {"im", m.coeff.imag()}, {"n1", m.qnums.n1}, {"n2", m.qnums.n2}, {"n3", m.qnums.n3}});
  json nodal = {{"ds", c.nodal.ds},
                {"node_tol_rel", c.nodal.node_tol_rel},
                {"scan_resolution", c.nodal.scan_resolution},
                {"max_points", c.nodal.max_points}};
  if (c.nodal.seed) nodal["seed"] = from_vec3(*c.nodal.seed);
  json chaos = {{"t0", c.chaos.t0},
                {"substeps", c.chaos.substeps},
                {"line_dt", c.chaos.line_dt},
                {"threshold_factor", c.chaos.threshold_factor},
                {"far_distance", c.chaos.far_distance},
                {"xi0", from_vec3(c.chaos.xi0)},
                {"mode", c.chaos.mode == DeviationMode::variational ? "variational" : "finite_separation"}};
  if (c.chaos.jump_threshold) chaos["jump_threshold"] = *c.chaos.jump_threshold;
  if (c.chaos.window) chaos["window"] = *c.chaos.window;
  return {
      {"wavefunction", {{"omega", from_vec3(c.wavefunction.omega)}, {"modes", modes}}},
      {"time", c.time},
      {"box", {{"lo", from_vec3(c.box.lo)}, {"hi", from_vec3(c.box.hi)}}},
      {"nodal", nodal},
      {"integrator",
       {{"abs_tol", c.integrator.abs_tol},
        {"rel_tol", c.integrator.rel_tol},
        {"max_step", c.integrator.max_step},
        {"min_step", c.integrator.min_step},
        {"node_guard", c.integrator.node_guard},
        {"max_steps", c.integrator.max_steps}}},
      {"trajectory",
       {{"x0", from_vec3(c.trajectory.x0)},
        {"t_start", c.trajectory.t_start},
        {"t_end", c.trajectory.t_end},
        {"sample_dt", c.trajectory.sample_dt}}},
      {"chaos", chaos},
      {"field", {{"resolution", c.field.resolution}}},
      {"xline", {{"x_tol_rel", c.xline.x_tol_rel}, {"fd_step", c.xline.fd_step}, {"max_radius", c.xline.max_radius}}},
      {"manifolds",
       {{"eps_rel", c.manifolds.eps_rel},
        {"arc_budget_rel", c.manifolds.arc_budget_rel},
        {"domain_rel", c.manifolds.domain_rel},
        {"stride", c.manifolds.stride},
        {"max_polyline", c.manifolds.max_polyline}}},
      {"hopf",
       {{"t_start", c.hopf.t_start},
        {"t_end", c.hopf.t_end},
        {"steps", c.hopf.steps},
        {"cycle_search", c.hopf.cycle_search}}},
      {"threads", c.threads},
      {"output", {{"dir", c.output_dir}}},
  };
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
  return parse_config(j);
}

/// 64-bit FNV-1a of the canonical serialisation.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace vortexline::io
