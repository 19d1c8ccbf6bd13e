#pragma once

// Frozen co-moving flow of the exact field, X-points and their line along a
// nodal line, manifold branches, and curvilinear tube coordinates.

#include "vortexline/dynamics.hpp"
#include "vortexline/vortex.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace vortexline {

/// Regularised co-moving velocity N - G V0 at local coordinates q around the
/// node, with time frozen at p.t; components along (u, v, w).
inline Vec3 frozen_comoving_flow(const WavefunctionSpec& spec, const NodalPoint& p, const Vec3& q) {
  const Vec3 x = p.r0 + p.frame.to_world(q);
  const CurrentSample c = current_density(spec, x, p.t, Basis::polynomial, false);
  return p.frame.to_local(c.current - c.density * p.V0);
}

/// Unregularised frozen co-moving velocity (v - V0) in local coordinates.
inline Vec3 frozen_comoving_velocity(const WavefunctionSpec& spec, const NodalPoint& p, const Vec3& q) {
  const Vec3 x = p.r0 + p.frame.to_world(q);
  const CurrentSample c = current_density(spec, x, p.t, Basis::polynomial, false);
  if (!(c.density > kNodeDensityFloor)) throw Error(ErrorCode::NodeSingularity, "on the node");
  return p.frame.to_local(c.current / c.density - p.V0);
}

/// First approximant of the X-point from the quadratic coefficients. The
/// v component is written as A s^2 / (s^2 A_X), which stays finite at s = 0.
inline Vec3 xpoint_first_approx(const FlowCoefficients& c, double Vu, double Vv, double rel_tol = 1e-12) {
  if (Vv == 0.0) throw Error(ErrorCode::DegenerateApproximant, "Vv = 0");
  const double s = -Vu / Vv;
  const double cden = c.C101 + s * c.C011;
  const double cscale = std::abs(c.C101) + std::abs(s * c.C011);
  if (!(std::abs(cden) > rel_tol * cscale) || cden == 0.0)
    throw Error(ErrorCode::DegenerateApproximant, "C101 + s C011 vanishes");
  const double C = -(c.C200 + c.C020 * s * s + c.C110 * s) / cden;
  const double bx = c.B020 * s * s + c.B110 * s + c.B200 + c.B002 * C * C + c.B101 * C;
  const double bscale = std::abs(c.B020 * s * s) + std::abs(c.B110 * s) + std::abs(c.B200) +
                        std::abs(c.B002 * C * C) + std::abs(c.B101 * C);
  if (!(std::abs(bx) > rel_tol * bscale) || bx == 0.0)
    throw Error(ErrorCode::DegenerateApproximant, "B_X vanishes");
  const double u = -c.A / bx;
  const double ax_s2 = c.A020 * s * s + (c.A110 + c.A011 * C) * s + c.A200 + c.A002 * C * C;
  double v = 0.0;
  if (s != 0.0) {
    const double ascale = std::abs(c.A020 * s * s) + std::abs((c.A110 + c.A011 * C) * s) +
                          std::abs(c.A200) + std::abs(c.A002 * C * C);
    if (!(std::abs(ax_s2) > rel_tol * ascale) || ax_s2 == 0.0)
      throw Error(ErrorCode::DegenerateApproximant, "A_X vanishes");
    v = c.A * s * s / ax_s2;
  }
  return {u, v, C * u};
}

struct XPointOptions {
  double x_tol_rel = 1e-10;   // residual < x_tol_rel * |grad phi|^2 at the node
  double fd_step = 1e-6;      // central-difference step for the Jacobian
  int max_iter = 60;
  double max_radius = 4.0;    // Newton iterates beyond this distance fail
  double node_reject = 1e-6;  // |q| below this (relative to the seed) counts as the node
};

struct XPoint {
  Vec3 uvw = Vec3::Zero();
  Vec3 world = Vec3::Zero();
  double residual = 0.0;
  double x_tol = 0.0;
  Vec3 eigenvalues = Vec3::Zero();  // lam1 > 0 (unstable), lam2 < 0 (stable), lam3 remaining
  bool hyperbolic = false;
  bool complex_pair = false;
  Vec3 eig_unstable = Vec3::UnitX();  // local coordinates
  Vec3 eig_stable = Vec3::UnitY();
  Mat3 jacobian = Mat3::Zero();
  double asymmetry = 0.0;  // |J - J^T| / |J|
  double d_X = 0.0;
  int iterations = 0;
  int seed = 0;  // 0 neighbour hint, 1 first approximant, 2 grid fallback
};

inline double xpoint_tolerance(const WavefunctionSpec& spec, const NodalPoint& p, const XPointOptions& o) {
  const FieldSample f = eval_polynomial_part(spec, p.r0, p.t);
  return o.x_tol_rel * f.grad.squaredNorm();
}

inline Mat3 frozen_flow_jacobian(const WavefunctionSpec& spec, const NodalPoint& p, const Vec3& q, double h) {
  Mat3 J;
  for (int k = 0; k < 3; ++k) {
    Vec3 dq = Vec3::Zero();
    dq[k] = h;
    J.col(k) = (frozen_comoving_flow(spec, p, q + dq) - frozen_comoving_flow(spec, p, q - dq)) / (2.0 * h);
  }
  return J;
}

namespace detail {

inline void fill_eigen_data(XPoint& xp) {
  Eigen::EigenSolver<Mat3> es(xp.jacobian);
  const auto ev = es.eigenvalues();
  const auto vecs = es.eigenvectors();
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(ev[a]) > std::abs(ev[b]); });
  // Among the two dominant eigenvalues: lam1 the larger real part.
  int i1 = idx[0], i2 = idx[1];
  if (ev[i1].real() < ev[i2].real()) std::swap(i1, i2);
  xp.eigenvalues = Vec3(ev[i1].real(), ev[i2].real(), ev[idx[2]].real());
  const double scale = std::abs(ev[idx[0]]);
  xp.complex_pair = std::abs(ev[i1].imag()) > 1e-9 * scale || std::abs(ev[i2].imag()) > 1e-9 * scale;
  xp.hyperbolic = !xp.complex_pair && xp.eigenvalues[0] > 0.0 && xp.eigenvalues[1] < 0.0;
  xp.eig_unstable = vecs.col(i1).real().normalized();
  xp.eig_stable = vecs.col(i2).real().normalized();
  const double jn = xp.jacobian.norm();
  xp.asymmetry = jn > 0.0 ? (xp.jacobian - xp.jacobian.transpose()).norm() / jn : 0.0;
}

}  // namespace detail

/// Damped Newton on the frozen co-moving flow from a seed in local coordinates.
inline XPoint refine_xpoint(const WavefunctionSpec& spec, const NodalPoint& p, const Vec3& seed,
                            const XPointOptions& o = {}) {
  XPoint xp;
  xp.x_tol = xpoint_tolerance(spec, p, o);
  Vec3 q = seed;
  Vec3 f = frozen_comoving_flow(spec, p, q);
  bool converged = f.norm() < xp.x_tol;
  int it = 0;
  for (; it < o.max_iter && !converged; ++it) {
    const Mat3 J = frozen_flow_jacobian(spec, p, q, o.fd_step);
    Eigen::FullPivLU<Mat3> lu(J);
    if (!lu.isInvertible()) throw Error(ErrorCode::NoConvergence, "singular Jacobian in X-point search");
    const Vec3 dq = -lu.solve(f);
    double lambda = 1.0;
    Vec3 q_new = q + dq, f_new = frozen_comoving_flow(spec, p, q_new);
    while (f_new.norm() > f.norm() && lambda > 1e-4) {
      lambda *= 0.5;
      q_new = q + lambda * dq;
      f_new = frozen_comoving_flow(spec, p, q_new);
    }
    q = q_new;
    f = f_new;
    if (!q.allFinite() || q.norm() > o.max_radius)
      throw Error(ErrorCode::NoConvergence, "X-point search diverged");
    converged = f.norm() < xp.x_tol;
  }
  if (!converged) throw Error(ErrorCode::NoConvergence, "X-point residual above tolerance");
  if (q.norm() <= o.node_reject * std::max(seed.norm(), 1e-300) || q.norm() < 1e-9)
    throw Error(ErrorCode::ConvergedToNode, "Newton returned to the node");
  {
    // The regularised flow vanishes on the whole nodal line; a root with
    // |phi| / |grad phi| tiny compared with |q| lies on (another part of) it.
    const FieldSample fs = eval_polynomial_part(spec, p.r0 + p.frame.to_world(q), p.t);
    const double gn = std::sqrt(fs.grad.squaredNorm());
    if (!(gn > 0.0) || std::abs(fs.psi) / gn < 1e-3 * q.norm())
      throw Error(ErrorCode::ConvergedToNode, "Newton converged onto the nodal line");
  }
  xp.uvw = q;
  xp.world = p.r0 + p.frame.to_world(q);
  xp.residual = f.norm();
  xp.d_X = q.norm();
  xp.iterations = it;
  xp.jacobian = frozen_flow_jacobian(spec, p, q, o.fd_step);
  detail::fill_eigen_data(xp);
  return xp;
}

/// Best grid point of |v - V0| over a disc of the F-plane (w = 0), away from
/// the node. Fallback seed when the approximant is degenerate.
inline Vec3 grid_seed(const WavefunctionSpec& spec, const NodalPoint& p, double radius, int n = 41) {
  Vec3 best = Vec3(radius / 2, 0, 0);
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec3 q(radius * (2.0 * i / (n - 1) - 1.0), radius * (2.0 * j / (n - 1) - 1.0), 0.0);
      if (q.norm() < 0.05 * radius || q.norm() > radius) continue;
      const Vec3 x = p.r0 + p.frame.to_world(q);
      const CurrentSample c = current_density(spec, x, p.t, Basis::polynomial, false);
      if (!(c.density > kNodeDensityFloor)) continue;
      const double val = (c.current / c.density - p.V0).norm();
      if (val < best_val) {
        best_val = val;
        best = q;
      }
    }
  return best;
}

/// X-point of a single node: first approximant, then grid fallback.
inline XPoint compute_xpoint(const WavefunctionSpec& spec, const NodalPoint& p,
                             const std::optional<Vec3>& hint = std::nullopt, const XPointOptions& o = {}) {
  std::vector<std::pair<Vec3, int>> seeds;
  if (hint) seeds.emplace_back(*hint, 0);
  try {
    const auto e = local_expansion(spec, p);
    seeds.emplace_back(xpoint_first_approx(flow_coefficients(e), e.Vu, e.Vv), 1);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::DegenerateApproximant) throw;
  }
  seeds.emplace_back(grid_seed(spec, p, 1.0), 2);
  std::optional<Error> last;
  for (const auto& [s, kind] : seeds) {
    if (!s.allFinite() || s.norm() > o.max_radius) continue;
    try {
      XPoint xp = refine_xpoint(spec, p, s, o);
      xp.seed = kind;
      return xp;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NoConvergence && err.code() != ErrorCode::ConvergedToNode) throw;
      last = err;
    }
  }
  if (last) throw *last;
  throw Error(ErrorCode::NoConvergence, "no usable X-point seed");
}

struct XLineEntry {
  std::size_t node_index = 0;
  double s = 0.0;
  XPoint xpoint;
};

struct XLine {
  std::vector<XLineEntry> entries;     // converged nodes, in line order
  std::vector<std::size_t> gaps;       // node indices without an X-point
  std::vector<std::size_t> jumps;      // entry indices whose step from the previous exceeds 5 ds
  double gap_fraction(std::size_t nodes) const {
    return nodes ? static_cast<double>(gaps.size()) / static_cast<double>(nodes) : 0.0;
  }
};

/// X-point for every node of the line; each Newton is seeded with the
/// neighbour's solution mapped into the current frame, falling back to the
/// approximant and a grid seed. Failures are recorded as gaps.
inline XLine build_xline(const WavefunctionSpec& spec, const NodalLine& line, const XPointOptions& o = {}) {
  XLine xl;
  std::optional<Vec3> prev_world;
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    const NodalPoint& p = line.points[i];
    std::optional<Vec3> hint;
    if (prev_world) hint = p.frame.to_local(*prev_world - p.r0);
    try {
      XPoint xp = compute_xpoint(spec, p, hint, o);
      if (prev_world && (xp.world - *prev_world).norm() > 5.0 * line.ds) xl.jumps.push_back(xl.entries.size());
      prev_world = xp.world;
      xl.entries.push_back({i, p.s, xp});
    } catch (const Error&) {
      xl.gaps.push_back(i);
      prev_world.reset();
    }
  }
  return xl;
}

enum class ManifoldKind { stable, unstable };
enum class BranchEnd { spirals_to_node, limit_cycle, left_domain, step_limit };

inline const char* to_string(ManifoldKind k) { return k == ManifoldKind::stable ? "stable" : "unstable"; }
inline const char* to_string(BranchEnd e) {
  switch (e) {
    case BranchEnd::spirals_to_node: return "spirals_to_node";
    case BranchEnd::limit_cycle: return "limit_cycle";
    case BranchEnd::left_domain: return "left_domain";
    case BranchEnd::step_limit: return "step_limit";
  }
  return "?";
}

struct ManifoldBranch {
  ManifoldKind kind = ManifoldKind::unstable;
  int side = 1;
  std::vector<Vec3> polyline;      // world coordinates
  BranchEnd termination = BranchEnd::step_limit;
  double winding = 0.0;            // accumulated angle around the node axis (radians)
  std::vector<double> turn_radii;  // distance to the node axis at each full turn
  double arc_length = 0.0;
  bool node_region() const {
    return termination == BranchEnd::spirals_to_node || termination == BranchEnd::limit_cycle;
  }
};

struct ManifoldOptions {
  double eps_rel = 1e-5;      // seed offset in units of d_X
  double arc_budget_rel = 50.0;
  double domain_rel = 3.0;    // ball radius around the node in units of d_X
  double min_turns = 2.0;
  double cycle_ratio = 0.25;  // last/first 1/R^2 increment below this: limit cycle
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  std::size_t max_polyline = 4000;
};

/// One branch of W^S or W^U of the frozen flow, traced in arclength so the
/// budget is geometric. Node-region branches are those that wind at least
/// min_turns times around the node axis inside the domain ball.
inline ManifoldBranch trace_branch(const WavefunctionSpec& spec, const XPoint& xp, const NodalPoint& p,
                                   ManifoldKind kind, int side, const ManifoldOptions& o = {}) {
  ManifoldBranch br;
  br.kind = kind;
  br.side = side;
  const double dX = xp.d_X;
  const double eps = o.eps_rel * dX;
  const double budget = o.arc_budget_rel * dX;
  const double domain = o.domain_rel * dX;
  const Vec3 dir = kind == ManifoldKind::unstable ? xp.eig_unstable : xp.eig_stable;
  const double sgn = kind == ManifoldKind::unstable ? 1.0 : -1.0;

  auto rhs = [&](double, const OdeState<4>& y, OdeState<4>& dy) {
    const Vec3 q = y.head<3>();
    const Vec3 f = sgn * frozen_comoving_flow(spec, p, q);
    const double fn = f.norm();
    if (!(fn > 0.0)) return false;
    const Vec3 d = f / fn;
    dy.head<3>() = d;
    const double r2 = q[0] * q[0] + q[1] * q[1];
    dy[3] = r2 > 0.0 ? (q[0] * d[1] - q[1] * d[0]) / r2 : 0.0;
    return true;
  };
  StepControl ctl;
  ctl.abs_tol = o.abs_tol * std::max(dX, 1e-300);
  ctl.rel_tol = o.rel_tol;
  ctl.max_step = 0.02 * dX;
  ctl.min_step = 1e-14 * dX;
  DormandPrince<4> dp(ctl);
  OdeState<4> y;
  y.head<3>() = xp.uvw + side * eps * dir;
  y[3] = 0.0;
  const double theta0 = 0.0;
  double next_turn = 2.0 * kPi;
  double s = 0.0;
  br.polyline.push_back(p.r0 + p.frame.to_world(y.head<3>()));
  const double sample_ds = budget / static_cast<double>(o.max_polyline);
  double last_sample = 0.0;
  bool stop = false;
  auto observer = [&](double, const OdeState<4>&, double sn, const OdeState<4>& yn) {
    const Vec3 q = yn.head<3>();
    if (sn - last_sample >= sample_ds) {
      br.polyline.push_back(p.r0 + p.frame.to_world(q));
      last_sample = sn;
    }
    while (std::abs(yn[3] - theta0) >= next_turn) {
      br.turn_radii.push_back(std::hypot(q[0], q[1]));
      next_turn += 2.0 * kPi;
    }
    if (q.norm() > domain) {
      br.termination = BranchEnd::left_domain;
      stop = true;
      return false;
    }
    return true;
  };
  try {
    dp.advance(rhs, s, y, budget, observer);
  } catch (const Error&) {
    // Landing on a zero of the flow (the node) ends the branch there.
  }
  br.polyline.push_back(p.r0 + p.frame.to_world(y.head<3>()));
  br.arc_length = s;
  br.winding = y[3];
  const double turns = std::abs(br.winding) / (2.0 * kPi);
  if (!stop) {
    if (turns >= o.min_turns && br.turn_radii.size() >= 2) {
      const auto& rr = br.turn_radii;
      const std::size_t n = rr.size();
      const double first = 1.0 / (rr[1] * rr[1]) - 1.0 / (rr[0] * rr[0]);
      const double last = 1.0 / (rr[n - 1] * rr[n - 1]) - 1.0 / (rr[n - 2] * rr[n - 2]);
      const bool converging = n >= 3 && std::abs(last) < o.cycle_ratio * std::abs(first);
      br.termination = converging ? BranchEnd::limit_cycle : BranchEnd::spirals_to_node;
    } else if (turns >= o.min_turns) {
      br.termination = BranchEnd::spirals_to_node;
    } else {
      br.termination = BranchEnd::step_limit;
    }
  } else if (turns >= o.min_turns) {
    // Wound around the node before leaving: still not a node-region branch.
    br.termination = BranchEnd::left_domain;
  }
  return br;
}

inline std::vector<ManifoldBranch> manifold_branches(const WavefunctionSpec& spec, const XPoint& xp,
                                                     const NodalPoint& p, const ManifoldOptions& o = {}) {
  if (!xp.hyperbolic) throw Error(ErrorCode::InvalidInput, "X-point is not hyperbolic");
  std::vector<ManifoldBranch> out;
  for (ManifoldKind kind : {ManifoldKind::unstable, ManifoldKind::stable})
    for (int side : {1, -1}) out.push_back(trace_branch(spec, xp, p, kind, side, o));
  return out;
}

/// Arc of the frozen flow from local point q0: either the unregularised
/// velocity (v - V0) integrated for `duration` in t, or the regularised one
/// integrated in tau until it has the same arclength as `match_length`
/// (> 0). Returned as `samples` + 1 local-coordinate points, equally spaced
/// in the integration variable; `arclength` receives the integrated length.
inline std::vector<Vec3> frozen_flow_arc(const WavefunctionSpec& spec, const NodalPoint& p, const Vec3& q0,
                                         bool regularized, double duration, double match_length,
                                         double tol = 1e-13, int samples = 200, double* arclength = nullptr) {
  if (samples < 1) throw Error(ErrorCode::InvalidInput, "samples must be positive");
  StepControl ctl;
  ctl.abs_tol = tol;
  ctl.rel_tol = tol;
  DormandPrince<4> dp(ctl);
  auto rhs = [&](double, const OdeState<4>& y, OdeState<4>& dy) {
    const Vec3 q = y.head<3>();
    Vec3 f;
    if (regularized) {
      f = frozen_comoving_flow(spec, p, q);
    } else {
      const Vec3 x = p.r0 + p.frame.to_world(q);
      const CurrentSample c = current_density(spec, x, p.t, Basis::polynomial, false);
      if (!(c.density > kNodeDensityFloor)) return false;
      f = p.frame.to_local(c.current / c.density - p.V0);
    }
    dy.head<3>() = f;
    dy[3] = f.norm();
    return true;
  };
  std::vector<Vec3> pts{q0};
  OdeState<4> y;
  y.head<3>() = q0;
  y[3] = 0.0;
  double t = 0.0;
  if (!regularized) {
    const double dt = duration / samples;
    for (int k = 1; k <= samples; ++k) {
      dp.advance(rhs, t, y, k * dt);
      pts.push_back(y.head<3>());
    }
    if (arclength) *arclength = y[3];
    return pts;
  }
  // Regularised: step out until the arclength is reached, then land on it.
  OdeState<4> probe;
  rhs(0.0, y, probe);
  const double speed = probe[3];
  const double dtau = match_length / std::max(speed, 1e-300) / samples;
  while (y[3] < match_length) {
    const double t_prev = t;
    const OdeState<4> y_prev = y;
    dp.advance(rhs, t, y, t + dtau);
    if (y[3] >= match_length) {
      OdeState<4> y_root;
      locate_event(dp, rhs, t_prev, y_prev, t - t_prev,
                   [&](const OdeState<4>& s) { return s[3] - match_length; }, y_root);
      pts.push_back(y_root.head<3>());
      y = y_root;
      break;
    }
    pts.push_back(y.head<3>());
  }
  if (arclength) *arclength = y[3];
  return pts;
}

// ---------------------------------------------------------------------------
// Tube coordinates around a nodal line.

/// Curvilinear coordinates (U, V, S) around a traced nodal line: S is the
/// arclength of the foot point, (U, V) the displacement from the foot
/// projected on its normal and binormal. The line is a cubic Hermite spline
/// through the traced nodes with their exact tangents.
class TubeCoordinates {
 public:
  TubeCoordinates(const NodalLine& line, double radius) : line_(line), radius_(radius) {
    if (line_.points.size() < 3) throw Error(ErrorCode::InvalidInput, "tube needs at least 3 nodes");
    if (!(radius > 0.0)) throw Error(ErrorCode::InvalidInput, "tube radius must be positive");
  }

  double s_min() const { return line_.points.front().s; }
  double s_max() const { return line_.points.back().s; }
  const NodalLine& line() const { return line_; }

  /// r(S) and dr/dS.
  Vec3 position(double S, Vec3* deriv = nullptr) const {
    const std::size_t i = segment(S);
    const auto& a = line_.points[i];
    const auto& b = line_.points[i + 1];
    const double h = b.s - a.s;
    const double x = (S - a.s) / h;
    const double h00 = 2 * x * x * x - 3 * x * x + 1, h10 = x * x * x - 2 * x * x + x;
    const double h01 = -2 * x * x * x + 3 * x * x, h11 = x * x * x - x * x;
    const Vec3& ta = a.frame.tangent;
    const Vec3& tb = b.frame.tangent;
    if (deriv) {
      const double d00 = 6 * x * x - 6 * x, d10 = 3 * x * x - 4 * x + 1;
      const double d01 = -6 * x * x + 6 * x, d11 = 3 * x * x - 2 * x;
      *deriv = (d00 * a.r0 + d01 * b.r0) / h + d10 * ta + d11 * tb;
    }
    return h00 * a.r0 + h10 * h * ta + h01 * b.r0 + h11 * h * tb;
  }

  /// Frame at S: tangent from the spline, normal interpolated between the
  /// bracketing nodes and re-orthonormalised.
  Frame frame(double S) const {
    Vec3 d;
    position(S, &d);
    const std::size_t i = segment(S);
    const auto& a = line_.points[i];
    const auto& b = line_.points[i + 1];
    const double x = std::clamp((S - a.s) / (b.s - a.s), 0.0, 1.0);
    Vec3 nb = b.frame.normal;
    if (nb.dot(a.frame.normal) < 0.0) nb = -nb;
    Frame f;
    f.tangent = d.normalized();
    Vec3 n = (1.0 - x) * a.frame.normal + x * nb;
    n -= n.dot(f.tangent) * f.tangent;
    f.normal = n.normalized();
    f.binormal = f.tangent.cross(f.normal);
    f.kind = x < 0.5 ? a.frame.kind : b.frame.kind;
    return f;
  }

  /// Node velocity interpolated linearly in S.
  Vec3 node_velocity(double S) const {
    const std::size_t i = segment(S);
    const auto& a = line_.points[i];
    const auto& b = line_.points[i + 1];
    const double x = std::clamp((S - a.s) / (b.s - a.s), 0.0, 1.0);
    return (1.0 - x) * a.V0 + x * b.V0;
  }

  /// Foot-point arclength of x: root of (x - r(S)) . r'(S) near the closest node.
  double foot(const Vec3& x) const {
    const auto& pts = line_.points;
    std::size_t k = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = (pts[i].r0 - x).squaredNorm();
      if (d < best) {
        best = d;
        k = i;
      }
    }
    auto g = [&](double S) {
      Vec3 d;
      const Vec3 r = position(S, &d);
      return (x - r).dot(d);
    };
    // Widen the bracket around the closest node until g changes sign.
    double lo = 0.0, hi = 0.0, glo = 0.0, ghi = 0.0;
    bool bracketed = false;
    for (std::size_t w = 1; w <= 8 && !bracketed; w *= 2) {
      lo = pts[k > w ? k - w : 0].s;
      hi = pts[std::min(k + w, pts.size() - 1)].s;
      glo = g(lo);
      ghi = g(hi);
      bracketed = glo * ghi <= 0.0;
    }
    if (!bracketed) throw Error(ErrorCode::OutsideTube, "no foot point near the closest node");
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      const double gm = g(mid);
      if (gm == 0.0) return mid;
      if ((gm > 0.0) == (glo > 0.0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  /// (U, V, S) of a world point.
  Vec3 to_tube(const Vec3& x) const {
    const double S = foot(x);
    const Vec3 d = x - position(S);
    if (d.norm() > radius_) throw Error(ErrorCode::OutsideTube, "point beyond tube radius");
    const Frame f = frame(S);
    return {d.dot(f.normal), d.dot(f.binormal), S};
  }

  Vec3 to_world(const Vec3& uvs) const {
    const Frame f = frame(uvs[2]);
    return position(uvs[2]) + uvs[0] * f.normal + uvs[1] * f.binormal;
  }

  /// Gradients of U, V, S with respect to x (rows of the chain-rule matrix).
  Mat3 gradients(const Vec3& x) const {
    const double S = foot(x);
    Vec3 d1;
    const Vec3 r = position(S, &d1);
    const double h = 1e-6;
    const Frame fp = frame(std::min(S + h, s_max())), fm = frame(std::max(S - h, s_min()));
    const double span = std::min(S + h, s_max()) - std::max(S - h, s_min());
    const Frame f = frame(S);
    const Vec3 dt = (fp.tangent - fm.tangent) / span;
    const Vec3 dn = (fp.normal - fm.normal) / span;
    const Vec3 db = (fp.binormal - fm.binormal) / span;
    const Vec3 dx = x - r;
    const Vec3 gS = f.tangent / (d1.norm() - dx.dot(dt));
    Mat3 g;
    g.row(0) = (f.normal + dx.dot(dn) * gS).transpose();
    g.row(1) = (f.binormal + dx.dot(db) * gS).transpose();
    g.row(2) = gS.transpose();
    return g;
  }

 private:
  std::size_t segment(double S) const {
    const auto& pts = line_.points;
    auto it = std::upper_bound(pts.begin(), pts.end(), S, [](double v, const NodalPoint& p) { return v < p.s; });
    std::size_t i = it == pts.begin() ? 0 : static_cast<std::size_t>(it - pts.begin()) - 1;
    return std::min(i, pts.size() - 2);
  }

  NodalLine line_;
  double radius_;
};

/// Co-moving field in tube coordinates with the line parameter map
/// s = sigma(S_X) tabulated from the X-line.
class ComovingTubeField {
 public:
  ComovingTubeField(const WavefunctionSpec& spec, const TubeCoordinates& tube, const XLine& xline)
      : spec_(spec), tube_(tube) {
    for (const auto& e : xline.entries) {
      try {
        const Vec3 uvs = tube_.to_tube(e.xpoint.world);
        table_.push_back({uvs[2], e.s});
      } catch (const Error&) {
      }
    }
    if (table_.size() < 2) throw Error(ErrorCode::InvalidInput, "X-line too short for the parameter map");
    std::sort(table_.begin(), table_.end());
    for (std::size_t i = 1; i < table_.size(); ++i)
      if (!(table_[i].first > table_[i - 1].first)) monotone_ = false;
  }

  /// s = sigma(S), piecewise linear; exact at the X-line samples.
  double sigma(double S) const {
    if (S <= table_.front().first) return table_.front().second;
    if (S >= table_.back().first) return table_.back().second;
    auto it = std::upper_bound(table_.begin(), table_.end(), std::make_pair(S, -1e300));
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double x = (S - a.first) / (b.first - a.first);
    return a.second + x * (b.second - a.second);
  }

  bool monotone() const { return monotone_; }

  struct Sample {
    Vec3 field;            // (dU/dt, dV/dt, dS/dt) minus the node-velocity terms
    Vec3 velocity_part;    // Df . (v - V(sigma)) : zero iff v equals the node velocity
    Vec3 frame_part;       // Df . V(sigma) - (V.n, V.b, 0)
    double density = 0.0;  // |phi|^2 at the point
  };

  Sample evaluate_world(const Vec3& x, double t) const {
    const Vec3 uvs = tube_.to_tube(x);
    const Mat3 D = tube_.gradients(x);
    const CurrentSample c = current_density(spec_, x, t, Basis::polynomial, false);
    if (!(c.density > kNodeDensityFloor)) throw Error(ErrorCode::NodeSingularity, "on the node");
    const Vec3 v = c.current / c.density;
    const double s = sigma(uvs[2]);
    const Vec3 V = tube_.node_velocity(s);
    const Frame f = tube_.frame(s);
    Sample out;
    out.density = c.density;
    out.velocity_part = D * (v - V);
    out.frame_part = D * V - Vec3(V.dot(f.normal), V.dot(f.binormal), 0.0);
    out.field = D * v - Vec3(V.dot(f.normal), V.dot(f.binormal), 0.0);
    return out;
  }

  Sample evaluate(const Vec3& uvs, double t) const { return evaluate_world(tube_.to_world(uvs), t); }

 private:
  const WavefunctionSpec& spec_;
  const TubeCoordinates& tube_;
  std::vector<std::pair<double, double>> table_;
  bool monotone_ = true;
};

}  // namespace vortexline
