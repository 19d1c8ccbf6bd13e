#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "vortexline/dynamics.hpp"
#include "vortexline/parallel.hpp"
#include "vortexline/xstruct.hpp"

namespace vortexline {

struct DeviationSeries {
  double t0 = 0.0;
  std::vector<double> times;   // kappa * t0, kappa = 1..n
  std::vector<double> alphas;
  std::vector<double> chi;
};

/// alpha_k = ln(xi_{k+1} / xi_k) from pre-renormalisation lengths; the
/// deviation is unit length after each renormalisation so this is ln(stretch).
inline DeviationSeries stretching_numbers(const Trajectory& traj) {
  DeviationSeries s;
  s.t0 = traj.sample_dt;
  if (traj.samples.empty()) return s;
  const double t_start = traj.samples.front().t;
  double sum = 0.0;
  for (std::size_t k = 1; k < traj.samples.size(); ++k) {
    const double a = std::log(traj.samples[k].stretch);
    sum += a;
    s.times.push_back(traj.samples[k].t);
    s.alphas.push_back(a);
    s.chi.push_back(sum / (traj.samples[k].t - t_start));
  }
  return s;
}

/// Same series from raw deviation lengths xi_0, xi_1, ... sampled every t0.
inline DeviationSeries stretching_numbers(const std::vector<double>& lengths, double t0) {
  DeviationSeries s;
  s.t0 = t0;
  double sum = 0.0;
  for (std::size_t k = 1; k < lengths.size(); ++k) {
    const double a = std::log(lengths[k] / lengths[k - 1]);
    sum += a;
    s.times.push_back(k * t0);
    s.alphas.push_back(a);
    s.chi.push_back(sum / (k * t0));
  }
  return s;
}

/// chi after kappa steps (kappa >= 1).
inline double finite_time_lcn(const DeviationSeries& s, std::size_t kappa) {
  if (kappa < 1 || kappa > s.alphas.size())
    throw Error(ErrorCode::InvalidInput, "kappa out of range");
  double sum = 0.0;
  for (std::size_t i = 0; i < kappa; ++i) sum += s.alphas[i];
  return sum / (static_cast<double>(kappa) * s.t0);
}

struct DistanceSample {
  double t = 0.0;
  std::optional<double> d;  // empty: line lost
  Vec3 node = Vec3::Zero();
  Vec3 xpoint = Vec3::Zero();
  bool topology_change = false;  // nearest node jumped discontinuously
};

struct DistanceOptions {
  NodalOptions nodal;
  XPointOptions xpoint;
  double line_dt = 0.1;      // snapshot spacing for nodal-line tracing
  int scan_resolution = 9;   // grid used to seed each snapshot
  double jump_factor = 10.0;  // node displacement > jump_factor * max(|dx| + |V0| dt, ds) flags topology change
  unsigned threads = 1;
};

/// Nodal lines traced at a fixed time.
struct LineSnapshot {
  double t = 0.0;
  std::vector<NodalLine> lines;
};

inline std::vector<LineSnapshot> line_snapshots(const WavefunctionSpec& spec, double t_start, double t_end,
                                                const DistanceOptions& o = {}) {
  const auto times = detail::sample_times(t_start, t_end, o.line_dt);
  std::vector<LineSnapshot> snaps(times.size());
  parallel_for(times.size(), o.threads, [&](std::size_t i) {
    snaps[i].t = times[i];
    snaps[i].lines = trace_all_lines(spec, times[i], o.nodal, o.scan_resolution);
  });
  return snaps;
}

namespace detail {

inline const LineSnapshot* nearest_snapshot(const std::vector<LineSnapshot>& snaps, double t) {
  const LineSnapshot* best = nullptr;
  for (const auto& s : snaps)
    if (!best || std::abs(s.t - t) < std::abs(best->t - t)) best = &s;
  return best;
}

// Nearest polyline point of the snapshot, carried to time t and to the foot
// of x by in-plane corrections ((x - r) orthogonal to the tangent).
inline std::optional<NodalPoint> project_to_nodes(const WavefunctionSpec& spec, const Vec3& x, double t,
                                                  const LineSnapshot& snap, const DistanceOptions& o) {
  std::optional<Vec3> start;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& line : snap.lines)
    for (const auto& q : line.points) {
      const double d = (q.r0 - x).norm();
      if (d < best) {
        best = d;
        start = q.r0;
      }
    }
  if (!start) return std::nullopt;
  Vec3 r = *start;
  // Move the snapshot point to time t within its own F-plane first.
  {
    const auto c = correct_in_plane(spec, t, r, nodal_tangent(spec, r, snap.t), r, o.nodal.max_iter);
    if (!c) return std::nullopt;
    r = *c;
  }
  for (int it = 0; it < 20; ++it) {
    const auto c = correct_in_plane(spec, t, r, nodal_tangent(spec, r, t), x, o.nodal.max_iter);
    if (!c || (*c - r).norm() > 0.5) break;  // foot outside the local branch: keep the last point
    const bool done = (*c - r).norm() < 1e-12 * (1.0 + c->norm());
    r = *c;
    if (done) break;
  }
  NodalPoint p;
  p.r0 = r;
  p.t = t;
  p.frame = fixed_frame(nodal_tangent(spec, r, t));
  try {
    p.V0 = nodal_velocity(spec, p);
  } catch (const Error&) {
    return std::nullopt;
  }
  return p;
}

}  // namespace detail

/// Distance from each trajectory sample to the X-point in the F-plane of the
/// nearest node. Approximate by construction: the node is the foot point on
/// the nearest snapshot line carried to the sample time, and the X-point is
/// that of the frozen co-moving flow there.
inline std::vector<DistanceSample> distance_to_xline(const WavefunctionSpec& spec, const Trajectory& traj,
                                                     const std::vector<LineSnapshot>& snaps,
                                                     const DistanceOptions& o = {}) {
  const std::size_t n = traj.samples.size();
  std::vector<DistanceSample> out(n);
  std::vector<std::optional<NodalPoint>> nodes(n);
  parallel_for(n, o.threads, [&](std::size_t i) {
    const auto& s = traj.samples[i];
    out[i].t = s.t;
    if (const LineSnapshot* snap = detail::nearest_snapshot(snaps, s.t))
      nodes[i] = detail::project_to_nodes(spec, s.x, s.t, *snap, o);
  });
  // X-points sequentially: each Newton is seeded from the previous sample.
  std::optional<Vec3> prev_world;
  for (std::size_t i = 0; i < n; ++i) {
    if (!nodes[i]) {
      prev_world.reset();
      continue;
    }
    const NodalPoint& p = *nodes[i];
    out[i].node = p.r0;
    if (i > 0 && nodes[i - 1]) {
      // Expected node displacement: trajectory motion plus the node's own.
      const double dt = std::abs(traj.samples[i].t - traj.samples[i - 1].t);
      const double dx = (traj.samples[i].x - traj.samples[i - 1].x).norm() + p.V0.norm() * dt;
      const double dn = (p.r0 - nodes[i - 1]->r0).norm();
      out[i].topology_change = dn > o.jump_factor * std::max(dx, o.nodal.ds);
    }
    std::optional<Vec3> hint;
    if (prev_world && !out[i].topology_change) hint = p.frame.to_local(*prev_world - p.r0);
    try {
      const XPoint xp = compute_xpoint(spec, p, hint, o.xpoint);
      out[i].xpoint = xp.world;
      out[i].d = (traj.samples[i].x - xp.world).norm();
      prev_world = xp.world;
    } catch (const Error&) {
      prev_world.reset();
    }
  }
  return out;
}

inline std::vector<DistanceSample> distance_to_xline(const WavefunctionSpec& spec, const Trajectory& traj,
                                                     const DistanceOptions& o = {}) {
  if (traj.samples.empty()) return {};
  const auto snaps = line_snapshots(spec, traj.samples.front().t, traj.samples.back().t, o);
  return distance_to_xline(spec, traj, snaps, o);
}

struct EncounterEvent {
  double t_jump = 0.0;
  double alpha_peak = 0.0;
  double t_min_dist = 0.0;
  double d_min = 0.0;
  double d_at_jump = 0.0;
  bool matched = false;
};

struct ChaosSummary {
  std::size_t jumps = 0;
  std::size_t matched = 0;
  double fraction_matched = 1.0;
  double max_d_at_jump = 0.0;
  std::size_t far_jumps = 0;  // jumps with d > far_distance
  double threshold = 0.0;
  double window = 0.0;
};

struct ChaosReport {
  DeviationSeries series;
  std::vector<std::optional<double>> distance;  // aligned with series.times
  std::vector<EncounterEvent> events;
  ChaosSummary summary;
};

struct CorrelationOptions {
  std::optional<double> jump_threshold;  // default: threshold_factor * median |alpha|
  double threshold_factor = 3.0;
  std::optional<double> window;          // default: 2 t0
  double far_distance = 1.0;
};

inline double median_abs(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  std::vector<double> a(v.size());
  std::transform(v.begin(), v.end(), a.begin(), [](double x) { return std::abs(x); });
  const std::size_t m = a.size() / 2;
  std::nth_element(a.begin(), a.begin() + m, a.end());
  if (a.size() % 2) return a[m];
  const double hi = a[m];
  return 0.5 * (hi + *std::max_element(a.begin(), a.begin() + m));
}

/// Jumps are local maxima of |alpha| above the threshold; each is matched to
/// the nearest local minimum of d within the window.
inline ChaosReport correlate_events(const DeviationSeries& series,
                                    const std::vector<std::optional<double>>& dist,
                                    const CorrelationOptions& o = {}) {
  if (dist.size() != series.alphas.size())
    throw Error(ErrorCode::InvalidInput, "distance series not aligned with stretching numbers");
  ChaosReport r;
  r.series = series;
  r.distance = dist;
  const std::size_t n = series.alphas.size();
  const double thr = o.jump_threshold ? *o.jump_threshold : o.threshold_factor * median_abs(series.alphas);
  const double window = o.window ? *o.window : 2.0 * series.t0;
  r.summary.threshold = thr;
  r.summary.window = window;

  std::vector<std::size_t> dmins;
  for (std::size_t i = 0; i < n; ++i) {
    if (!dist[i]) continue;
    const bool left = i == 0 || !dist[i - 1] || *dist[i] <= *dist[i - 1];
    const bool right = i + 1 == n || !dist[i + 1] || *dist[i] <= *dist[i + 1];
    if (left && right) dmins.push_back(i);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(series.alphas[i]);
    if (!(a > thr)) continue;
    if (i > 0 && std::abs(series.alphas[i - 1]) > a) continue;
    if (i + 1 < n && std::abs(series.alphas[i + 1]) >= a) continue;
    EncounterEvent ev;
    ev.t_jump = series.times[i];
    ev.alpha_peak = series.alphas[i];
    ev.d_at_jump = dist[i] ? *dist[i] : std::numeric_limits<double>::quiet_NaN();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j : dmins) {
      const double dt = std::abs(series.times[j] - ev.t_jump);
      if (dt <= window + 1e-12 * window && dt < best) {
        best = dt;
        ev.t_min_dist = series.times[j];
        ev.d_min = *dist[j];
        ev.matched = true;
      }
    }
    r.events.push_back(ev);
  }

  auto& s = r.summary;
  s.jumps = r.events.size();
  for (const auto& ev : r.events) {
    if (ev.matched) ++s.matched;
    if (!std::isnan(ev.d_at_jump)) s.max_d_at_jump = std::max(s.max_d_at_jump, ev.d_at_jump);
    if (std::isnan(ev.d_at_jump) || ev.d_at_jump > o.far_distance) ++s.far_jumps;
  }
  s.fraction_matched = s.jumps ? static_cast<double>(s.matched) / static_cast<double>(s.jumps) : 1.0;
  return r;
}

/// Distances aligned with series.times (sample 0 is the initial point and has
/// no stretching number).
inline std::vector<std::optional<double>> align_distance(const std::vector<DistanceSample>& d) {
  std::vector<std::optional<double>> out;
  for (std::size_t i = 1; i < d.size(); ++i) out.push_back(d[i].d);
  return out;
}

/// Minimum distance over each stretching interval (t_{k-1}, t_k] from a finer
/// distance series. Empty when no fine sample in the interval has a distance.
inline std::vector<std::optional<double>> interval_minimum(const DeviationSeries& series,
                                                           const std::vector<DistanceSample>& fine) {
  std::vector<std::optional<double>> out(series.times.size());
  const double eps = 1e-9 * series.t0;
  std::size_t j = 0;
  for (std::size_t k = 0; k < series.times.size(); ++k) {
    const double hi = series.times[k];
    const double lo = hi - series.t0;
    while (j < fine.size() && fine[j].t <= lo + eps) ++j;
    for (std::size_t m = j; m < fine.size() && fine[m].t <= hi + eps; ++m)
      if (fine[m].d && (!out[k] || *fine[m].d < *out[k])) out[k] = fine[m].d;
  }
  return out;
}

struct ChaosOptions {
  IntegratorOptions integrator;   // sample_dt is overridden by t0
  double t0 = 0.05;
  int substeps = 5;               // distance samples per stretching interval
  Vec3 xi0 = Vec3::UnitX();
  DeviationMode mode = DeviationMode::variational;
  DistanceOptions distance;
  CorrelationOptions correlation;
};

struct ChaosRun {
  Trajectory trajectory;               // sampled every t0, with deviations
  std::vector<DistanceSample> fine;    // distance at t0 / substeps
  ChaosReport report;
};

/// Stretching numbers, distance to the X-line and their correlation for one
/// trajectory.
inline ChaosRun run_chaos(const WavefunctionSpec& spec, const Vec3& x0, double t_start, double t_end,
                          const ChaosOptions& o = {}) {
  if (!(o.t0 > 0.0) || o.substeps < 1) throw Error(ErrorCode::InvalidInput, "t0 and substeps must be positive");
  ChaosRun run;
  IntegratorOptions io = o.integrator;
  io.sample_dt = o.t0;
  run.trajectory = integrate_with_deviation(spec, x0, o.xi0.normalized(), t_start, t_end, io, o.mode);
  const DeviationSeries series = stretching_numbers(run.trajectory);
  IntegratorOptions fo = o.integrator;
  fo.sample_dt = o.t0 / o.substeps;
  const Trajectory fine = integrate_trajectory(spec, x0, t_start, t_end, fo);
  const auto snaps = line_snapshots(spec, t_start, t_end, o.distance);
  run.fine = distance_to_xline(spec, fine, snaps, o.distance);
  run.report = correlate_events(series, interval_minimum(series, run.fine), o.correlation);
  return run;
}

}  // namespace vortexline
