#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vortexline/chaos.hpp"
#include "vortexline/io/config.hpp"
#include "vortexline/io/output.hpp"
#include "vortexline/parallel.hpp"
#include "vortexline/vortex.hpp"
#include "vortexline/xstruct.hpp"

#ifndef VORTEXLINE_VERSION
#define VORTEXLINE_VERSION "0.0.0"
#endif

namespace vortexline::cli {

using nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode : int { kSuccess = 0, kFailure = 1, kPartial = 2 };

/// Run record written next to the outputs. Holds wall-clock times, so it is
/// the one file that differs between otherwise identical runs.
struct Manifest {
  std::string command;
  std::string config_hash;
  json stats = json::object();
  std::vector<std::string> warnings;
  std::string started;
  std::string finished;
  int exit_code = 0;

  json to_json() const {
    return {{"command", command},       {"config_hash", config_hash}, {"tool_version", VORTEXLINE_VERSION},
            {"started", started},       {"finished", finished},       {"stats", stats},
            {"warnings", warnings},     {"exit_code", exit_code}};
  }
};

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Context {
  io::RunConfig config;
  WavefunctionSpec spec;
  fs::path out;
  unsigned threads = 1;
  Manifest manifest;

  explicit Context(const io::RunConfig& c)
      : config(c), spec(c.spec()), out(c.output_dir), threads(resolve_threads(c.threads)) {}
  void warn(std::string w) { manifest.warnings.push_back(std::move(w)); }
};

namespace detail {

inline json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

// Finite numbers as numbers, the rest as null, so the JSON stays valid.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Lines at the configured time: the one through the seed, or all lines found
// by the grid scan.
inline std::vector<NodalLine> lines_at(Context& ctx, double t) {
  const NodalOptions no = ctx.config.nodal_options();
  if (ctx.config.nodal.seed) {
    NodalPoint start;
    start.r0 = *ctx.config.nodal.seed;
    return {trace_nodal_line(ctx.spec, t, start, no)};
  }
  return trace_all_lines(ctx.spec, t, no, ctx.config.nodal.scan_resolution);
}

inline void note_line_ends(Context& ctx, const std::vector<NodalLine>& lines, bool& partial) {
  for (std::size_t k = 0; k < lines.size(); ++k)
    for (LineEnd e : {lines[k].head_end, lines[k].tail_end})
      if (e == LineEnd::degenerate || e == LineEnd::no_convergence || e == LineEnd::too_long) {
        ctx.warn("line " + std::to_string(k) + " ended: " + to_string(e));
        partial = true;
      }
}

inline std::vector<XLine> xlines_for(Context& ctx, const std::vector<NodalLine>& lines) {
  std::vector<XLine> xl(lines.size());
  const XPointOptions xo = ctx.config.xpoint_options();
  parallel_for(lines.size(), ctx.threads, [&](std::size_t k) { xl[k] = build_xline(ctx.spec, lines[k], xo); });
  return xl;
}

}  // namespace detail

/// |Psi|^2, phase and Bohmian velocity on a regular grid over the box.
inline int cmd_field(Context& ctx) {
  const auto& c = ctx.config;
  const double t = c.time;
  const auto res = c.field.resolution;
  auto axis = [&](int k, int i) {
    if (res[k] == 1) return 0.5 * (c.box.lo[k] + c.box.hi[k]);
    return c.box.lo[k] + (c.box.hi[k] - c.box.lo[k]) * i / (res[k] - 1);
  };
  const std::size_t n = static_cast<std::size_t>(res[0]) * res[1] * res[2];
  struct Row {
    Vec3 x;
    double rho, phase;
    Vec3 v;
  };
  std::vector<Row> rows(n);
  parallel_for(n, ctx.threads, [&](std::size_t idx) {
    const int k = static_cast<int>(idx % res[2]);
    const int j = static_cast<int>((idx / res[2]) % res[1]);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(res[2]) * res[1]));
    Row& r = rows[idx];
    r.x = Vec3(axis(0, i), axis(1, j), axis(2, k));
    const FieldSample f = eval_field(ctx.spec, r.x, t, Basis::full);
    r.rho = std::norm(f.psi);
    r.phase = std::arg(f.psi);
    const CurrentSample cs = current_density(ctx.spec, r.x, t, Basis::polynomial, false);
    r.v = cs.density > kNodeDensityFloor ? Vec3(cs.current / cs.density)
                                         : Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  });
  io::CsvWriter csv({"x", "y", "z", "rho", "phase", "vx", "vy", "vz"});
  std::size_t singular = 0;
  for (const Row& r : rows) {
    if (!r.v.allFinite()) ++singular;
    csv.cell(r.x[0]).cell(r.x[1]).cell(r.x[2]).cell(r.rho).cell(r.phase).cell(r.v[0]).cell(r.v[1]).cell(r.v[2]);
    csv.end_row();
  }
  csv.save(ctx.out / "field.csv");
  ctx.manifest.stats["field"] = {{"rows", csv.rows()}, {"singular_points", singular}, {"t", t}};
  if (singular) ctx.warn(std::to_string(singular) + " grid points on a node: velocity written as nan");
  return kSuccess;
}

/// Nodal lines at the configured time, one CSV per line plus a summary.
inline int cmd_nodal(Context& ctx) {
  const double t = ctx.config.time;
  const auto lines = detail::lines_at(ctx, t);
  bool partial = false;
  detail::note_line_ends(ctx, lines, partial);
  json summary = json::array();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& l = lines[k];
    io::CsvWriter csv({"s", "x", "y", "z", "tx", "ty", "tz", "nx", "ny", "nz", "bx", "by", "bz", "V0x", "V0y",
                       "V0z", "curvature_radius", "frame"});
    for (const auto& p : l.points) {
      csv.cell(p.s);
      for (const Vec3* v : {&p.r0, &p.frame.tangent, &p.frame.normal, &p.frame.binormal, &p.V0})
        csv.cell((*v)[0]).cell((*v)[1]).cell((*v)[2]);
      csv.cell(p.curvature_radius ? *p.curvature_radius : std::numeric_limits<double>::infinity());
      csv.cell(to_string(p.frame.kind));
      csv.end_row();
    }
    csv.save(ctx.out / ("nodal_" + std::to_string(k) + ".csv"));
    summary.push_back({{"index", k},
                       {"points", l.points.size()},
                       {"length", l.length()},
                       {"closed", l.closed},
                       {"head_end", to_string(l.head_end)},
                       {"tail_end", to_string(l.tail_end)}});
  }
  io::write_json(ctx.out / "nodal.json", {{"t", t}, {"ds", ctx.config.nodal.ds}, {"lines", summary}});
  ctx.manifest.stats["nodal"] = {{"lines", lines.size()}};
  if (lines.empty()) ctx.warn("no nodal line found in the box");
  return partial ? kPartial : kSuccess;
}

/// Per-node complex data: rotation, averaged cubic term, node speed, fast-node
/// margin and sign changes of <f3> to the next node.
inline int cmd_npxpc(Context& ctx) {
  const double t = ctx.config.time;
  const auto lines = detail::lines_at(ctx, t);
  bool partial = false;
  detail::note_line_ends(ctx, lines, partial);
  json summary = json::array();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& l = lines[k];
    const std::size_t n = l.points.size();
    struct Row {
      double A = NAN, f3 = NAN, Vu = NAN, Vv = NAN, vfast = NAN;
      std::string type = "error";
    };
    std::vector<Row> rows(n);
    parallel_for(n, ctx.threads, [&](std::size_t i) {
      try {
        const auto e = local_expansion(ctx.spec, l.points[i]);
        const auto c = flow_coefficients(e);
        rows[i].A = c.A;
        rows[i].Vu = e.Vu;
        rows[i].Vv = e.Vv;
        rows[i].vfast = vfast_diagnostic(e);
        const auto sp = classify_spiral(c);
        rows[i].f3 = sp.f3_avg;
        rows[i].type = to_string(sp.node_type);
      } catch (const Error&) {
      }
    });
    std::vector<std::pair<double, double>> scan;
    for (std::size_t i = 0; i < n; ++i) scan.emplace_back(l.points[i].s, rows[i].f3);
    const auto events = detect_hopf(scan, HopfKind::space);
    std::vector<int> flag(n, 0);
    for (const auto& ev : events)
      for (std::size_t i = 0; i < n; ++i)
        if (l.points[i].s == ev.param_lo) flag[i] = 1;
    io::CsvWriter csv({"s", "A", "f3", "Vu", "Vv", "vfast_ratio", "hopf_flag", "node_type"});
    std::size_t failed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].type == "error") ++failed;
      csv.cell(l.points[i].s).cell(rows[i].A).cell(rows[i].f3).cell(rows[i].Vu).cell(rows[i].Vv);
      csv.cell(rows[i].vfast).cell(flag[i]).cell(rows[i].type);
      csv.end_row();
    }
    csv.save(ctx.out / ("npxpc_" + std::to_string(k) + ".csv"));
    if (failed) {
      partial = true;
      ctx.warn("line " + std::to_string(k) + ": " + std::to_string(failed) + " nodes without expansion data");
    }
    summary.push_back({{"index", k}, {"nodes", n}, {"hopf_events", events.size()}, {"failed", failed}});
  }
  ctx.manifest.stats["npxpc"] = summary;
  return partial ? kPartial : kSuccess;
}

/// X-point of every node; gaps are nodes where no X-point converged.
inline int cmd_xline(Context& ctx) {
  const double t = ctx.config.time;
  const auto lines = detail::lines_at(ctx, t);
  bool partial = false;
  detail::note_line_ends(ctx, lines, partial);
  const auto xls = detail::xlines_for(ctx, lines);
  json summary = json::array();
  std::size_t nodes = 0, gaps = 0;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& xl = xls[k];
    io::CsvWriter csv({"s", "x", "y", "z", "u", "v", "w", "lam1", "lam2", "lam3", "dX", "residual", "asymmetry", "seed"});
    for (const auto& e : xl.entries) {
      const auto& x = e.xpoint;
      csv.cell(e.s).cell(x.world[0]).cell(x.world[1]).cell(x.world[2]);
      csv.cell(x.uvw[0]).cell(x.uvw[1]).cell(x.uvw[2]);
      csv.cell(x.eigenvalues[0]).cell(x.eigenvalues[1]).cell(x.eigenvalues[2]);
      csv.cell(x.d_X).cell(x.residual).cell(x.asymmetry).cell(x.seed);
      csv.end_row();
    }
    csv.save(ctx.out / ("xline_" + std::to_string(k) + ".csv"));
    std::vector<double> gap_s;
    for (std::size_t i : xl.gaps) gap_s.push_back(lines[k].points[i].s);
    nodes += lines[k].points.size();
    gaps += xl.gaps.size();
    summary.push_back({{"index", k},
                       {"nodes", lines[k].points.size()},
                       {"xpoints", xl.entries.size()},
                       {"gaps", xl.gaps.size()},
                       {"gap_s", gap_s},
                       {"jumps", xl.jumps.size()},
                       {"gap_fraction", xl.gap_fraction(lines[k].points.size())}});
    if (!xl.gaps.empty()) {
      partial = true;
      ctx.warn("line " + std::to_string(k) + ": " + std::to_string(xl.gaps.size()) + " nodes without X-point");
    }
  }
  const double frac = nodes ? static_cast<double>(gaps) / static_cast<double>(nodes) : 0.0;
  io::write_json(ctx.out / "xline.json", {{"t", t}, {"lines", summary}, {"gap_fraction", frac}});
  ctx.manifest.stats["xline"] = {{"nodes", nodes}, {"gaps", gaps}, {"gap_fraction", frac}};
  return partial ? kPartial : kSuccess;
}

/// Four branches of the stable and unstable manifolds at every stride-th
/// X-point.
inline int cmd_manifolds(Context& ctx) {
  const double t = ctx.config.time;
  const auto lines = detail::lines_at(ctx, t);
  bool partial = false;
  detail::note_line_ends(ctx, lines, partial);
  const auto xls = detail::xlines_for(ctx, lines);
  const ManifoldOptions mo = ctx.config.manifold_options();
  struct Job {
    std::size_t line, entry;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < lines.size(); ++k)
    for (std::size_t i = 0; i < xls[k].entries.size(); i += static_cast<std::size_t>(ctx.config.manifolds.stride))
      jobs.push_back({k, i});
  std::vector<json> results(jobs.size());
  std::vector<int> accounted(jobs.size(), 0);
  parallel_for(jobs.size(), ctx.threads, [&](std::size_t j) {
    const auto& e = xls[jobs[j].line].entries[jobs[j].entry];
    const auto& p = lines[jobs[j].line].points[e.node_index];
    json rec = {{"line", jobs[j].line}, {"node_index", e.node_index}, {"s", e.s},
                {"xpoint", detail::vec_json(e.xpoint.world)}, {"dX", e.xpoint.d_X}};
    if (!e.xpoint.hyperbolic) {
      rec["error"] = "X-point not hyperbolic";
      results[j] = rec;
      return;
    }
    const auto brs = manifold_branches(ctx.spec, e.xpoint, p, mo);
    json arr = json::array();
    int node_region = 0, left = 0;
    for (const auto& b : brs) {
      json poly = json::array();
      for (const Vec3& q : b.polyline) poly.push_back(detail::vec_json(q));
      arr.push_back({{"kind", to_string(b.kind)},
                     {"side", b.side},
                     {"termination", to_string(b.termination)},
                     {"winding", b.winding},
                     {"arc_length", b.arc_length},
                     {"polyline", poly}});
      node_region += b.node_region();
      left += b.termination == BranchEnd::left_domain;
    }
    rec["branches"] = arr;
    accounted[j] = node_region == 1 && left == 3;
    rec["accounting_ok"] = static_cast<bool>(accounted[j]);
    results[j] = rec;
  });
  std::size_t ok = 0;
  json all = json::array();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    ok += accounted[j];
    all.push_back(results[j]);
  }
  io::write_json(ctx.out / "manifolds.json", {{"t", t}, {"xpoints", all}});
  ctx.manifest.stats["manifolds"] = {{"xpoints", jobs.size()}, {"one_node_region_three_leave", ok}};
  for (const auto& x : xls)
    if (!x.gaps.empty()) partial = true;
  if (ok < jobs.size()) {
    ctx.warn(std::to_string(jobs.size() - ok) + " X-points without the one-in/three-out branch pattern");
    partial = true;
  }
  return partial ? kPartial : kSuccess;
}

namespace detail {

inline io::CsvWriter trajectory_csv(const ChaosRun& run) {
  io::CsvWriter csv({"t", "x", "y", "z", "alpha", "chi", "min_dist_xline"});
  const auto& s = run.trajectory.samples;
  const auto& rep = run.report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < s.size(); ++i) {
    csv.cell(s[i].t).cell(s[i].x[0]).cell(s[i].x[1]).cell(s[i].x[2]);
    if (i == 0) {
      csv.cell(nan).cell(nan);
      csv.cell(!run.fine.empty() && run.fine.front().d ? *run.fine.front().d : nan);
    } else {
      csv.cell(rep.series.alphas[i - 1]).cell(rep.series.chi[i - 1]);
      csv.cell(rep.distance[i - 1] ? *rep.distance[i - 1] : nan);
    }
    csv.end_row();
  }
  return csv;
}

inline void note_distance_gaps(Context& ctx, const ChaosRun& run, bool& partial) {
  std::size_t lost = 0, topo = 0;
  for (const auto& d : run.fine) {
    lost += !d.d;
    topo += d.topology_change;
  }
  if (lost) {
    ctx.warn(std::to_string(lost) + " distance samples without a nodal line or X-point");
    partial = true;
  }
  if (topo) ctx.warn(std::to_string(topo) + " distance samples at a change of nearest line branch");
}

}  // namespace detail

/// Trajectory with stretching numbers and distance to the X-line, sampled at
/// trajectory.sample_dt.
inline int cmd_trajectory(Context& ctx) {
  const auto& c = ctx.config;
  ChaosOptions o = c.chaos_options(ctx.threads);
  o.t0 = c.trajectory.sample_dt;
  const ChaosRun run = run_chaos(ctx.spec, c.trajectory.x0, c.trajectory.t_start, c.trajectory.t_end, o);
  detail::trajectory_csv(run).save(ctx.out / "trajectory.csv");
  bool partial = false;
  detail::note_distance_gaps(ctx, run, partial);
  const auto& st = run.trajectory.stats;
  ctx.manifest.stats["trajectory"] = {{"samples", run.trajectory.samples.size()},
                                      {"steps", st.steps},
                                      {"rejected", st.rejected},
                                      {"min_abs_psi", st.min_abs_psi}};
  return partial ? kPartial : kSuccess;
}

/// Stretching-number jumps correlated with close approaches to the X-line.
inline int cmd_chaos(Context& ctx) {
  const auto& c = ctx.config;
  const ChaosRun run =
      run_chaos(ctx.spec, c.trajectory.x0, c.trajectory.t_start, c.trajectory.t_end, c.chaos_options(ctx.threads));
  const auto& rep = run.report;
  json alphas = json::array(), chi = json::array(), dist = json::array(), times = json::array();
  for (std::size_t k = 0; k < rep.series.alphas.size(); ++k) {
    times.push_back(rep.series.times[k]);
    alphas.push_back(rep.series.alphas[k]);
    chi.push_back(rep.series.chi[k]);
    dist.push_back(rep.distance[k] ? json(*rep.distance[k]) : json(nullptr));
  }
  json events = json::array();
  for (const auto& e : rep.events)
    events.push_back({{"t_jump", e.t_jump},
                      {"alpha_peak", e.alpha_peak},
                      {"t_min_dist", e.matched ? json(e.t_min_dist) : json(nullptr)},
                      {"d_min", e.matched ? json(e.d_min) : json(nullptr)},
                      {"d_at_jump", detail::num(e.d_at_jump)},
                      {"matched", e.matched}});
  const auto& s = rep.summary;
  json report = {
      {"trajectory", {{"x0", detail::vec_json(c.trajectory.x0)}, {"t_start", c.trajectory.t_start},
                      {"t_end", c.trajectory.t_end}}},
      {"t0", rep.series.t0},
      {"times", times},
      {"alphas", alphas},
      {"chi", chi},
      {"dist", dist},
      {"events", events},
      {"summary",
       {{"jumps", s.jumps},
        {"matched", s.matched},
        {"fraction_matched", s.fraction_matched},
        {"max_d_at_jump", s.max_d_at_jump},
        {"jumps_beyond_far_distance", s.far_jumps},
        {"far_distance", c.chaos.far_distance},
        {"threshold", s.threshold},
        {"window", s.window},
        {"chi_final", rep.series.chi.empty() ? json(nullptr) : json(rep.series.chi.back())}}}};
  io::write_json(ctx.out / "chaos.json", report);

  io::CsvWriter csv({"t", "alpha", "log10_abs_alpha", "d"});
  for (std::size_t k = 0; k < rep.series.alphas.size(); ++k) {
    const double a = rep.series.alphas[k];
    csv.cell(rep.series.times[k]).cell(a).cell(std::log10(std::abs(a)));
    csv.cell(rep.distance[k] ? *rep.distance[k] : std::numeric_limits<double>::quiet_NaN());
    csv.end_row();
  }
  csv.save(ctx.out / "chaos.csv");
  detail::trajectory_csv(run).save(ctx.out / "trajectory.csv");
  bool partial = false;
  detail::note_distance_gaps(ctx, run, partial);
  ctx.manifest.stats["chaos"] = report["summary"];
  return partial ? kPartial : kSuccess;
}

namespace detail {

// Carries a node to time t inside the F-plane it had at time p.t.
inline std::optional<NodalPoint> follow_node(const WavefunctionSpec& spec, const NodalPoint& p, double t,
                                             int max_iter) {
  const auto r = vortexline::detail::correct_in_plane(spec, t, p.r0, p.frame.tangent, p.r0, max_iter);
  if (!r) return std::nullopt;
  NodalPoint q;
  q.r0 = *r;
  q.t = t;
  Vec3 tan = nodal_tangent(spec, *r, t);
  if (tan.dot(p.frame.tangent) < 0.0) tan = -tan;
  q.frame = fixed_frame(tan);
  try {
    q.V0 = nodal_velocity(spec, q);
  } catch (const Error&) {
    return std::nullopt;
  }
  return q;
}

inline double node_f3(const WavefunctionSpec& spec, const NodalPoint& p) {
  try {
    return f3_average(flow_coefficients(local_expansion(spec, p)));
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline json cycle_json(const WavefunctionSpec& spec, const NodalPoint& p, double radius) {
  try {
    const auto c = flow_coefficients(local_expansion(spec, p));
    const auto lc = detect_limit_cycle(planar_quadratic_flow(c), radius);
    if (!lc) return nullptr;
    return {{"s", p.s}, {"t", p.t}, {"radius", lc->radius}, {"map_slope", lc->map_slope},
            {"stable", lc->stable}, {"period", lc->period}};
  } catch (const Error&) {
    return nullptr;
  }
}

}  // namespace detail

/// Sign changes of <f3> along every line at the configured time (space
/// events) and along one node followed in time (time events), with the
/// limit cycles found next to each event.
inline int cmd_hopf_scan(Context& ctx) {
  const auto& c = ctx.config;
  const double radius = c.hopf.cycle_search;
  const auto lines = detail::lines_at(ctx, c.time);
  bool partial = false;
  io::CsvWriter csv({"kind", "line", "param", "f3"});
  json space = json::array();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto& l = lines[k];
    std::vector<std::pair<double, double>> scan(l.points.size());
    parallel_for(l.points.size(), ctx.threads, [&](std::size_t i) {
      scan[i] = {l.points[i].s, detail::node_f3(ctx.spec, l.points[i])};
    });
    for (const auto& [s, f] : scan) {
      csv.cell("space").cell(k).cell(s).cell(f);
      csv.end_row();
    }
    for (const auto& ev : detect_hopf(scan, HopfKind::space)) {
      json cycles = json::array();
      for (const auto& p : l.points)
        if (p.s == ev.param_lo || p.s == ev.param_hi) {
          const json cy = detail::cycle_json(ctx.spec, p, radius);
          if (!cy.is_null()) cycles.push_back(cy);
        }
      space.push_back({{"line", k}, {"s_lo", ev.param_lo}, {"s_hi", ev.param_hi}, {"root", ev.root},
                       {"limit_cycles", cycles}});
    }
  }

  // Time scan of one node: the seed's node, else the middle node of line 0.
  json time_events = json::array();
  json tracked = nullptr;
  std::optional<NodalPoint> start;
  try {
    NodalOptions no = c.nodal_options();
    if (c.nodal.seed) {
      start = find_nodal_point(ctx.spec, c.hopf.t_start, *c.nodal.seed, no);
    } else {
      const auto l0 = trace_all_lines(ctx.spec, c.hopf.t_start, no, c.nodal.scan_resolution);
      if (!l0.empty() && !l0.front().points.empty()) start = l0.front().points[l0.front().points.size() / 2];
    }
  } catch (const Error& e) {
    ctx.warn(std::string("time scan: no start node: ") + e.what());
  }
  if (start) {
    start->V0 = nodal_velocity(ctx.spec, *start);
    std::vector<std::pair<double, double>> scan;
    std::vector<NodalPoint> nodes{*start};
    scan.emplace_back(start->t, detail::node_f3(ctx.spec, *start));
    const double dt = (c.hopf.t_end - c.hopf.t_start) / c.hopf.steps;
    for (int i = 1; i <= c.hopf.steps; ++i) {
      const auto q = detail::follow_node(ctx.spec, nodes.back(), c.hopf.t_start + i * dt, c.nodal_options().max_iter);
      if (!q) {
        ctx.warn("time scan: node lost at t = " + io::fmt17(c.hopf.t_start + i * dt));
        partial = true;
        break;
      }
      nodes.push_back(*q);
      scan.emplace_back(q->t, detail::node_f3(ctx.spec, *q));
    }
    for (std::size_t i = 0; i < scan.size(); ++i) {
      csv.cell("time").cell(-1).cell(scan[i].first).cell(scan[i].second);
      csv.end_row();
    }
    for (const auto& ev : detect_hopf(scan, HopfKind::time)) {
      // Refine the root with the node carried from the bracket's lower end.
      const NodalPoint* lo = nullptr;
      for (const auto& n : nodes)
        if (n.t == ev.param_lo) lo = &n;
      double root = ev.root;
      if (lo) {
        const auto refine = [&](double t) {
          const auto q = detail::follow_node(ctx.spec, *lo, t, 60);
          return q ? detail::node_f3(ctx.spec, *q) : std::numeric_limits<double>::quiet_NaN();
        };
        const auto refined = detect_hopf({{ev.param_lo, refine(ev.param_lo)}, {ev.param_hi, refine(ev.param_hi)}},
                                         HopfKind::time, refine, 1e-10);
        if (!refined.empty()) root = refined.front().root;
      }
      json cycles = json::array();
      for (const auto& n : nodes)
        if (n.t == ev.param_lo || n.t == ev.param_hi) {
          const json cy = detail::cycle_json(ctx.spec, n, radius);
          if (!cy.is_null()) cycles.push_back(cy);
        }
      time_events.push_back({{"t_lo", ev.param_lo}, {"t_hi", ev.param_hi}, {"root", root}, {"limit_cycles", cycles}});
    }
    tracked = {{"r0", detail::vec_json(start->r0)}, {"t_start", c.hopf.t_start}, {"samples", scan.size()}};
  } else {
    partial = true;
  }
  csv.save(ctx.out / "hopf_scan.csv");
  io::write_json(ctx.out / "hopf.json",
                 {{"t", c.time}, {"space_events", space}, {"time_events", time_events}, {"tracked_node", tracked}});
  ctx.manifest.stats["hopf"] = {{"space_events", space.size()}, {"time_events", time_events.size()}};
  return partial ? kPartial : kSuccess;
}

inline const std::map<std::string, std::function<int(Context&)>>& commands() {
  static const std::map<std::string, std::function<int(Context&)>> table = {
      {"field", cmd_field},           {"nodal", cmd_nodal},         {"npxpc", cmd_npxpc},
      {"xline", cmd_xline},           {"manifolds", cmd_manifolds}, {"trajectory", cmd_trajectory},
      {"chaos", cmd_chaos},           {"hopf-scan", cmd_hopf_scan}};
  return table;
}

/// Runs one subcommand and writes manifest.json. Errors are reported on
/// stderr and in the manifest; the return value is the process exit code.
inline int run(const std::string& command, const io::RunConfig& config, std::ostream& err) {
  Context ctx(config);
  ctx.manifest.command = command;
  ctx.manifest.config_hash = io::config_hash(config);
  ctx.manifest.started = utc_now();
  int code = kFailure;
  const auto it = commands().find(command);
  if (it == commands().end()) {
    err << "unknown command: " << command << "\n";
    return kFailure;
  }
  try {
    fs::create_directories(ctx.out);
    io::write_json(ctx.out / "config.json", io::to_json(config));
    code = it->second(ctx);
  } catch (const Error& e) {
    err << command << ": " << e.what() << "\n";
    ctx.warn(e.what());
    code = kFailure;
  } catch (const std::exception& e) {
    err << command << ": " << e.what() << "\n";
    ctx.warn(e.what());
    code = kFailure;
  }
  ctx.manifest.exit_code = code;
  ctx.manifest.finished = utc_now();
  try {
    io::write_json(ctx.out / "manifest.json", ctx.manifest.to_json());
  } catch (const std::exception& e) {
    err << "cannot write manifest: " << e.what() << "\n";
    return kFailure;
  }
  return code;
}

}  // namespace vortexline::cli
