#pragma once

// Nodal points and nodal lines: the zero set Psi_R = Psi_I = 0 at fixed time.
//
// All root finding works on the polynomial part phi (Psi = exp(sigma) phi),
// which has the same zero set and gradients parallel to those of Psi there.

#include "vortexline/wavefield.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace vortexline {

enum class FrameKind { frenet, euler, fixed };

inline const char* to_string(FrameKind k) {
  switch (k) {
    case FrameKind::frenet: return "frenet";
    case FrameKind::euler: return "euler";
    case FrameKind::fixed: return "fixed";
  }
  return "?";
}

/// Local right-handed frame (normal, binormal, tangent) = (u, v, w) axes.
struct Frame {
  Vec3 tangent = Vec3::UnitZ();
  Vec3 normal = Vec3::UnitX();
  Vec3 binormal = Vec3::UnitY();
  FrameKind kind = FrameKind::fixed;

  /// Rows n, b, t: uvw = rotation() * (x - r0).
  Mat3 rotation() const {
    Mat3 r;
    r.row(0) = normal.transpose();
    r.row(1) = binormal.transpose();
    r.row(2) = tangent.transpose();
    return r;
  }
  Vec3 to_local(const Vec3& dx) const { return rotation() * dx; }
  Vec3 to_world(const Vec3& uvw) const { return rotation().transpose() * uvw; }
};

/// Frame with w along `t` and u, v from the Euler-angle construction
/// phi_m = atan2(t_y, t_x), theta_m = acos(t_z).
inline Frame euler_frame(const Vec3& t) {
  const Vec3 tn = t.normalized();
  const double phi = std::atan2(tn.y(), tn.x());
  const double theta = std::acos(std::clamp(tn.z(), -1.0, 1.0));
  Frame f;
  f.normal = Vec3(std::sin(phi), -std::cos(phi), 0.0);
  f.binormal = Vec3(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta));
  f.tangent = Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
  f.kind = FrameKind::euler;
  return f;
}

/// Any right-handed completion of `t`.
inline Frame fixed_frame(const Vec3& t) {
  Frame f;
  f.tangent = t.normalized();
  f.normal = any_orthogonal(f.tangent);
  f.binormal = f.tangent.cross(f.normal);
  f.kind = FrameKind::fixed;
  return f;
}

struct NodalPoint {
  Vec3 r0 = Vec3::Zero();
  double t = 0.0;
  double s = 0.0;
  Frame frame;
  Vec3 V0 = Vec3::Zero();
  std::optional<double> curvature_radius;  // nullopt: infinite (straight)
};

enum class LineEnd { closed, box_exit, degenerate, no_convergence, too_long };

inline const char* to_string(LineEnd e) {
  switch (e) {
    case LineEnd::closed: return "closed";
    case LineEnd::box_exit: return "box_exit";
    case LineEnd::degenerate: return "degenerate";
    case LineEnd::no_convergence: return "no_convergence";
    case LineEnd::too_long: return "too_long";
  }
  return "?";
}

/// Nodal line at fixed time, ordered by signed arclength s (s = 0 at the
/// start point of the trace).
struct NodalLine {
  std::vector<NodalPoint> points;
  double t = 0.0;
  double ds = 0.0;
  bool closed = false;
  LineEnd head_end = LineEnd::box_exit;  // end with the smallest s
  LineEnd tail_end = LineEnd::box_exit;

  double length() const {
    if (points.size() < 2) return 0.0;
    double len = points.back().s - points.front().s;
    if (closed) len += (points.front().r0 - points.back().r0).norm();
    return len;
  }
};

struct NodalOptions {
  double node_tol_rel = 1e-12;  // |Psi| < node_tol_rel * field_scale
  int max_iter = 60;
  double max_travel = 1.0;      // maximum distance from the seed
  double degenerate_tol = 1e-10;  // |grad R x grad I| / (|grad R| |grad I|)
  Box box;
  double ds = 0.02;
  std::size_t max_points = 20000;
  double curvature_floor = 1e-6;   // below: straight for frame/R0 purposes
  double curvature_zero = 1e-12;   // below: no usable normal at all
};

namespace detail {

struct NodeResidual {
  Eigen::Vector2d f;
  Eigen::Matrix<double, 2, 3> jac;
  Complex phi;
};

inline NodeResidual node_residual(const WavefunctionSpec& spec, const Vec3& x, double t) {
  const FieldSample s = eval_polynomial_part(spec, x, t);
  NodeResidual r;
  r.phi = s.psi;
  r.f << s.psi.real(), s.psi.imag();
  r.jac.row(0) = s.grad.real().transpose();
  r.jac.row(1) = s.grad.imag().transpose();
  return r;
}

inline double cross_ratio(const Eigen::Matrix<double, 2, 3>& jac) {
  const Vec3 gr = jac.row(0).transpose();
  const Vec3 gi = jac.row(1).transpose();
  const double den = gr.norm() * gi.norm();
  return den > 0.0 ? gr.cross(gi).norm() / den : 0.0;
}

// Newton on {phi_R = 0, phi_I = 0, plane(x) = 0} where plane is
// normal . (x - anchor) = 0; converged when the step is at round-off level.
inline std::optional<Vec3> correct_in_plane(const WavefunctionSpec& spec, double t, Vec3 x,
                                            const Vec3& normal, const Vec3& anchor, int max_iter) {
  for (int it = 0; it < max_iter; ++it) {
    const NodeResidual r = node_residual(spec, x, t);
    Mat3 m;
    m.row(0) = r.jac.row(0);
    m.row(1) = r.jac.row(1);
    m.row(2) = normal.transpose();
    Vec3 rhs(-r.f[0], -r.f[1], -normal.dot(x - anchor));
    Eigen::FullPivLU<Mat3> lu(m);
    if (!lu.isInvertible()) return std::nullopt;
    const Vec3 dx = lu.solve(rhs);
    x += dx;
    if (!x.allFinite()) return std::nullopt;
    if (dx.norm() <= 1e-14 * (1.0 + x.norm())) return x;
  }
  const NodeResidual r = node_residual(spec, x, t);
  const double g = r.jac.norm();
  if (g > 0.0 && r.f.norm() / g < 1e-12) return x;
  return std::nullopt;
}

}  // namespace detail

inline double node_tolerance(const WavefunctionSpec& spec, double t, const NodalOptions& opts) {
  return opts.node_tol_rel * field_scale(spec, t);
}

/// Unit tangent grad(phi_R) x grad(phi_I) at a node (orthogonal to both
/// gradients, hence to the F-plane).
inline Vec3 nodal_tangent(const WavefunctionSpec& spec, const Vec3& x, double t) {
  const auto r = detail::node_residual(spec, x, t);
  const Vec3 c = Vec3(r.jac.row(0).transpose()).cross(Vec3(r.jac.row(1).transpose()));
  if (c.norm() == 0.0) throw Error(ErrorCode::DegenerateNode, "parallel phase gradients");
  return c.normalized();
}

/// Gauss-Newton with minimal-norm updates on the underdetermined system
/// (Psi_R, Psi_I) = 0. The returned point carries position, time and the
/// tangent in frame.tangent (fixed completion); velocity and curvature are
/// left unset.
inline NodalPoint find_nodal_point(const WavefunctionSpec& spec, double t, const Vec3& seed,
                                   const NodalOptions& opts = {}) {
  if (!opts.box.contains(seed)) throw Error(ErrorCode::InvalidInput, "seed outside search box");
  Vec3 x = seed;
  bool converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    const auto r = detail::node_residual(spec, x, t);
    const Eigen::Matrix2d jjt = r.jac * r.jac.transpose();
    const double det = jjt.determinant();
    if (!(std::abs(det) > 1e-300) || !(std::abs(det) > 1e-24 * jjt.squaredNorm()))
      throw Error(ErrorCode::NoConvergence, "rank-deficient Jacobian while seeking node");
    const Vec3 dx = -r.jac.transpose() * jjt.inverse() * r.f;
    x += dx;
    if (!x.allFinite() || (x - seed).norm() > opts.max_travel)
      throw Error(ErrorCode::NoConvergence, "node search left the seed neighbourhood");
    if (dx.norm() <= 1e-14 * (1.0 + x.norm())) {
      converged = true;
      break;
    }
  }
  const auto r = detail::node_residual(spec, x, t);
  const double gnorm = r.jac.norm();
  if (!converged && !(gnorm > 0.0 && r.f.norm() / gnorm < 1e-12))
    throw Error(ErrorCode::NoConvergence, "node search did not converge");
  const double abs_psi = std::abs(r.phi) * std::exp(spec.log_envelope(x));
  if (!(abs_psi < node_tolerance(spec, t, opts)))
    throw Error(ErrorCode::NoConvergence, "converged point exceeds node tolerance");
  if (detail::cross_ratio(r.jac) < opts.degenerate_tol)
    throw Error(ErrorCode::DegenerateNode, "phase gradients parallel at node");

  NodalPoint p;
  p.r0 = x;
  p.t = t;
  p.frame = fixed_frame(nodal_tangent(spec, x, t));
  return p;
}

/// Node velocity V0 from differentiating the node conditions in time,
///   grad(Psi_R).V0 = -d_t Psi_R,  grad(Psi_I).V0 = -d_t Psi_I,  t.V0 = 0,
/// i.e. the velocity of the intersection of the moving line with the F-plane.
inline Vec3 nodal_velocity(const WavefunctionSpec& spec, const NodalPoint& p) {
  const FieldSample s = eval_polynomial_part(spec, p.r0, p.t);
  const Vec3 gr = s.grad.real(), gi = s.grad.imag();
  const Vec3& tan = p.frame.tangent;
  Mat3 m;
  m.row(0) = gr.transpose();
  m.row(1) = gi.transpose();
  m.row(2) = tan.transpose();
  const double scale = gr.norm() * gi.norm();
  if (!(std::abs(m.determinant()) > 1e-12 * scale))
    throw Error(ErrorCode::SingularSystem, "node velocity system is rank deficient");
  const Vec3 rhs(-s.dpsi_dt.real(), -s.dpsi_dt.imag(), 0.0);
  return m.fullPivLu().solve(rhs);
}

/// dt/ds at point i from tangent differences (tangential part removed).
inline Vec3 curvature_vector(const NodalLine& line, std::size_t i) {
  const auto& pts = line.points;
  const std::size_t n = pts.size();
  if (n < 2) return Vec3::Zero();
  std::size_t a = i, b = i;
  double span = 0.0;
  if (i > 0 && i + 1 < n) {
    a = i - 1;
    b = i + 1;
    span = pts[b].s - pts[a].s;
  } else if (line.closed && n >= 3) {
    a = i == 0 ? n - 1 : i - 1;
    b = i + 1 == n ? 0 : i + 1;
    span = (pts[i].r0 - pts[a].r0).norm() + (pts[b].r0 - pts[i].r0).norm();
  } else if (i == 0) {
    b = 1;
    span = pts[1].s - pts[0].s;
  } else {
    a = n - 2;
    span = pts[n - 1].s - pts[n - 2].s;
  }
  if (!(span > 0.0)) return Vec3::Zero();
  const Vec3& t = pts[i].frame.tangent;
  Vec3 k = (pts[b].frame.tangent - pts[a].frame.tangent) / span;
  return k - k.dot(t) * t;
}

/// Frame at point i: Frenet where the curvature is usable, the Euler-angle
/// frame on straight stretches, Frenet again if the tangent is along z, and
/// a flagged fixed completion if both are singular.
inline Frame point_frame(const NodalLine& line, std::size_t i, const NodalOptions& opts = {}) {
  const Vec3 t = line.points[i].frame.tangent.normalized();
  const Vec3 k = curvature_vector(line, i);
  const double kn = k.norm();
  const bool along_z = std::hypot(t.x(), t.y()) < 1e-9;
  if (kn >= opts.curvature_floor || (along_z && kn > opts.curvature_zero)) {
    Frame f;
    f.tangent = t;
    f.normal = k / kn;
    f.binormal = t.cross(f.normal);
    f.kind = FrameKind::frenet;
    return f;
  }
  if (!along_z) return euler_frame(t);
  return fixed_frame(t);
}

namespace detail {

// Index i with s_i <= s <= s_{i+1} (clamped).
inline std::size_t bracket(const NodalLine& line, double s) {
  const auto& pts = line.points;
  auto it = std::upper_bound(pts.begin(), pts.end(), s,
                             [](double v, const NodalPoint& p) { return v < p.s; });
  std::size_t i = it == pts.begin() ? 0 : static_cast<std::size_t>(it - pts.begin()) - 1;
  return std::min(i, pts.size() >= 2 ? pts.size() - 2 : 0);
}

}  // namespace detail

/// Frame at arclength s, interpolated between the bracketing point frames and
/// re-orthonormalised.
inline Frame frenet_frame(const NodalLine& line, double s, const NodalOptions& opts = {}) {
  const auto& pts = line.points;
  if (pts.empty()) throw Error(ErrorCode::InvalidInput, "empty nodal line");
  if (pts.size() == 1) return point_frame(line, 0, opts);
  if (s < pts.front().s - 1e-12 || s > pts.back().s + 1e-12)
    throw Error(ErrorCode::InvalidInput, "arclength outside line range");
  const std::size_t i = detail::bracket(line, s);
  const double span = pts[i + 1].s - pts[i].s;
  const double a = span > 0.0 ? std::clamp((s - pts[i].s) / span, 0.0, 1.0) : 0.0;
  const Frame f0 = point_frame(line, i, opts);
  const Frame f1 = point_frame(line, i + 1, opts);
  const Frame& near = a < 0.5 ? f0 : f1;
  if (a == 0.0) return f0;
  if (a == 1.0) return f1;
  Frame f;
  f.kind = near.kind;
  f.tangent = ((1.0 - a) * f0.tangent + a * f1.tangent).normalized();
  Vec3 n = (f0.kind == f1.kind && f0.normal.dot(f1.normal) > 0.0)
               ? Vec3((1.0 - a) * f0.normal + a * f1.normal)
               : near.normal;
  n -= n.dot(f.tangent) * f.tangent;
  f.normal = n.normalized();
  f.binormal = f.tangent.cross(f.normal);
  return f;
}

/// Radius of curvature 1/|dt/ds|; nullopt ("infinite") below the floor.
inline std::optional<double> curvature_radius(const NodalLine& line, double s,
                                              const NodalOptions& opts = {}) {
  const auto& pts = line.points;
  if (pts.size() < 3) return std::nullopt;
  const std::size_t i = detail::bracket(line, s);
  const double span = pts[i + 1].s - pts[i].s;
  const double a = span > 0.0 ? std::clamp((s - pts[i].s) / span, 0.0, 1.0) : 0.0;
  const double k = (1.0 - a) * curvature_vector(line, i).norm() + a * curvature_vector(line, i + 1).norm();
  if (k < opts.curvature_floor) return std::nullopt;
  return 1.0 / k;
}

/// Fill frames, node velocities and curvature radii of every point.
inline void annotate_line(const WavefunctionSpec& spec, NodalLine& line, const NodalOptions& opts = {}) {
  std::vector<Frame> frames(line.points.size());
  for (std::size_t i = 0; i < line.points.size(); ++i) frames[i] = point_frame(line, i, opts);
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    auto& p = line.points[i];
    const double k = curvature_vector(line, i).norm();
    p.curvature_radius = k >= opts.curvature_floor ? std::optional<double>(1.0 / k) : std::nullopt;
    p.frame = frames[i];
    p.V0 = nodal_velocity(spec, p);
  }
}

/// Predictor-corrector continuation of the nodal line through `start`.
/// Predictor: step ds along the unit tangent; corrector: Newton restricted
/// to the plane normal to the tangent through the predicted point. Traces
/// both directions unless the line closes.
inline NodalLine trace_nodal_line(const WavefunctionSpec& spec, double t, const NodalPoint& start,
                                  const NodalOptions& opts = {}) {
  const double ds = opts.ds;
  if (!(ds > 0.0)) throw Error(ErrorCode::InvalidInput, "ds must be positive");
  const NodalPoint origin = find_nodal_point(spec, t, start.r0, opts);
  const double tol = node_tolerance(spec, t, opts);

  NodalLine line;
  line.t = t;
  line.ds = ds;

  struct Walk {
    std::vector<Vec3> pos;
    std::vector<Vec3> tan;
    LineEnd end = LineEnd::box_exit;
    bool closed = false;
  };

  auto walk = [&](double sign, std::size_t budget) {
    Walk w;
    Vec3 x = origin.r0;
    Vec3 tan = sign * origin.frame.tangent;
    double travelled = 0.0;
    while (true) {
      if (w.pos.size() >= budget) {
        w.end = LineEnd::too_long;
        return w;
      }
      std::optional<Vec3> next;
      for (const double frac : {1.0, 0.75, 0.5}) {
        const Vec3 pred = x + frac * ds * tan;
        auto c = detail::correct_in_plane(spec, t, pred, tan, pred, opts.max_iter);
        if (!c) continue;
        const double step = (*c - x).norm();
        if (step < 0.5 * ds || step > 1.5 * ds) continue;
        next = c;
        break;
      }
      if (!next) {
        w.end = LineEnd::no_convergence;
        return w;
      }
      const auto r = detail::node_residual(spec, *next, t);
      if (detail::cross_ratio(r.jac) < opts.degenerate_tol) {
        w.end = LineEnd::degenerate;
        return w;
      }
      if (!(std::abs(r.phi) * std::exp(spec.log_envelope(*next)) < tol)) {
        w.end = LineEnd::no_convergence;
        return w;
      }
      Vec3 nt = nodal_tangent(spec, *next, t);
      if (nt.dot(tan) < 0.0) nt = -nt;
      if (!opts.box.contains(*next)) {
        // close the line on the box face it crosses
        int axis = -1;
        double frac = 2.0, face = 0.0;
        for (int k = 0; k < 3; ++k) {
          for (const double v : {opts.box.lo[k], opts.box.hi[k]}) {
            const double d = (*next)[k] - x[k];
            if (d == 0.0) continue;
            const double f = (v - x[k]) / d;
            if (f >= 0.0 && f <= 1.0 && f < frac) {
              frac = f;
              axis = k;
              face = v;
            }
          }
        }
        if (axis >= 0) {
          Vec3 anchor = x + frac * (*next - x);
          anchor[axis] = face;
          auto c = detail::correct_in_plane(spec, t, anchor, Vec3::Unit(axis), anchor, opts.max_iter);
          if (c) {
            (*c)[axis] = face;
            const double step = (*c - x).norm();
            if (opts.box.contains(*c) && step > 1e-6 * ds && step < 1.5 * ds) {
              Vec3 ct = nodal_tangent(spec, *c, t);
              if (ct.dot(tan) < 0.0) ct = -ct;
              w.pos.push_back(*c);
              w.tan.push_back(ct);
            }
          }
        }
        w.end = LineEnd::box_exit;
        return w;
      }
      travelled += (*next - x).norm();
      if (travelled > 3.0 * ds && (*next - origin.r0).norm() <= 0.5 * ds + 1e-12) {
        w.closed = true;
        w.end = LineEnd::closed;
        return w;
      }
      w.pos.push_back(*next);
      w.tan.push_back(nt);
      x = *next;
      tan = nt;
    }
  };

  const std::size_t budget = opts.max_points > 1 ? opts.max_points - 1 : 0;
  Walk fwd = walk(1.0, budget);
  Walk bwd;
  if (!fwd.closed) bwd = walk(-1.0, budget > fwd.pos.size() ? budget - fwd.pos.size() : 0);
  line.closed = fwd.closed;

  std::vector<Vec3> pos, tan;
  for (std::size_t k = bwd.pos.size(); k-- > 0;) {
    pos.push_back(bwd.pos[k]);
    tan.push_back(-bwd.tan[k]);
  }
  const std::size_t origin_index = pos.size();
  pos.push_back(origin.r0);
  tan.push_back(origin.frame.tangent);
  for (std::size_t k = 0; k < fwd.pos.size(); ++k) {
    pos.push_back(fwd.pos[k]);
    tan.push_back(fwd.tan[k]);
  }

  std::vector<double> s(pos.size(), 0.0);
  for (std::size_t k = origin_index + 1; k < pos.size(); ++k) s[k] = s[k - 1] + (pos[k] - pos[k - 1]).norm();
  for (std::size_t k = origin_index; k-- > 0;) s[k] = s[k + 1] - (pos[k + 1] - pos[k]).norm();

  line.points.resize(pos.size());
  for (std::size_t k = 0; k < pos.size(); ++k) {
    auto& p = line.points[k];
    p.r0 = pos[k];
    p.t = t;
    p.s = s[k];
    p.frame = fixed_frame(tan[k]);
  }
  line.tail_end = fwd.end;
  line.head_end = fwd.closed ? LineEnd::closed : bwd.end;
  annotate_line(spec, line, opts);
  return line;
}

/// Nodes found by Gauss-Newton from every point of a regular grid over the
/// box, merged when closer than `merge_radius`. Deterministic order.
inline std::vector<Vec3> scan_nodes(const WavefunctionSpec& spec, double t, const NodalOptions& opts,
                                    int resolution, double merge_radius) {
  std::vector<Vec3> found;
  const Vec3 step = (opts.box.hi - opts.box.lo) / std::max(1, resolution - 1);
  NodalOptions local = opts;
  local.max_travel = 1.5 * step.norm();
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j)
      for (int k = 0; k < resolution; ++k) {
        const Vec3 seed = opts.box.lo + Vec3(i * step.x(), j * step.y(), k * step.z());
        try {
          const NodalPoint p = find_nodal_point(spec, t, seed, local);
          if (!opts.box.contains(p.r0)) continue;
          const bool dup = std::any_of(found.begin(), found.end(),
                                       [&](const Vec3& q) { return (q - p.r0).norm() < merge_radius; });
          if (!dup) found.push_back(p.r0);
        } catch (const Error&) {
        }
      }
  return found;
}

/// Distance from x to the polyline of `line`.
inline double distance_to_polyline(const NodalLine& line, const Vec3& x) {
  const auto& pts = line.points;
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  double best = (pts.front().r0 - x).norm();
  const std::size_t nseg = line.closed ? pts.size() : pts.size() - 1;
  for (std::size_t i = 0; i < nseg; ++i) {
    const Vec3& a = pts[i].r0;
    const Vec3& b = pts[(i + 1) % pts.size()].r0;
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double u = len2 > 0.0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (a + u * ab - x).norm());
  }
  return best;
}

/// Every nodal line reachable from the grid scan, each traced once.
inline std::vector<NodalLine> trace_all_lines(const WavefunctionSpec& spec, double t,
                                              const NodalOptions& opts, int scan_resolution) {
  std::vector<NodalLine> lines;
  const auto seeds = scan_nodes(spec, t, opts, scan_resolution, 0.5 * opts.ds);
  for (const Vec3& seed : seeds) {
    const bool covered = std::any_of(lines.begin(), lines.end(), [&](const NodalLine& l) {
      return distance_to_polyline(l, seed) < 2.0 * opts.ds;
    });
    if (covered) continue;
    try {
      NodalPoint start;
      start.r0 = seed;
      lines.push_back(trace_nodal_line(spec, t, start, opts));
    } catch (const Error&) {
    }
  }
  return lines;
}

}  // namespace vortexline
