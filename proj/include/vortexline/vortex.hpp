#pragma once

// Second-order expansion of the field around a node in its local (u, v, w)
// frame, the quadratic reduced flow, and what follows from averaging it:
// spiral law, drift along the line, Hopf events and limit cycles.

#include "vortexline/nodal.hpp"
#include "vortexline/ode.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace vortexline {

/// Real Taylor coefficients c_ijk of one component, i + j + k <= 2
/// (u^i v^j w^k). Squares carry the factor 1/2 of the Hessian.
struct Taylor2 {
  double c000 = 0, c100 = 0, c010 = 0, c001 = 0;
  double c200 = 0, c020 = 0, c002 = 0, c110 = 0, c101 = 0, c011 = 0;
};

struct LocalExpansion {
  Taylor2 a;  // real part
  Taylor2 b;  // imaginary part
  double Vu = 0.0, Vv = 0.0;
  Vec3 r0 = Vec3::Zero();
  double t = 0.0;
  Frame frame;
};

struct FlowCoefficients {
  double A = 0;
  double A200 = 0, A020 = 0, A002 = 0, A110 = 0, A011 = 0;
  double B200 = 0, B020 = 0, B002 = 0, B101 = 0, B110 = 0;
  double C200 = 0, C020 = 0, C011 = 0, C101 = 0, C110 = 0;
};

/// Expansion of phi (Gaussian-stripped field) at the node; the reduced flow
/// built from it has the same trajectories and critical points as the one
/// built from Psi.
inline LocalExpansion local_expansion(const WavefunctionSpec& spec, const NodalPoint& p) {
  const Mat3 rot = p.frame.rotation();
  const FieldSample f = eval_polynomial_part(spec, p.r0, p.t);
  const Vec3 gr = rot * Vec3(f.grad.real()), gi = rot * Vec3(f.grad.imag());
  const Mat3 hr = rot * Mat3(f.hess.real()) * rot.transpose();
  const Mat3 hi = rot * Mat3(f.hess.imag()) * rot.transpose();
  if (gr.cross(gi).norm() == 0.0) throw Error(ErrorCode::DegenerateNode, "parallel phase gradients");
  auto fill = [](double v, const Vec3& g, const Mat3& h) {
    Taylor2 c;
    c.c000 = v;
    c.c100 = g[0];
    c.c010 = g[1];
    c.c001 = g[2];
    c.c200 = 0.5 * h(0, 0);
    c.c020 = 0.5 * h(1, 1);
    c.c002 = 0.5 * h(2, 2);
    c.c110 = h(0, 1);
    c.c101 = h(0, 2);
    c.c011 = h(1, 2);
    return c;
  };
  LocalExpansion e;
  e.a = fill(f.psi.real(), gr, hr);
  e.b = fill(f.psi.imag(), gi, hi);
  e.Vu = p.V0.dot(p.frame.normal);
  e.Vv = p.V0.dot(p.frame.binormal);
  e.r0 = p.r0;
  e.t = p.t;
  e.frame = p.frame;
  return e;
}

/// Evaluate the quadratic model of the expansion at local coordinates.
inline Complex expansion_value(const LocalExpansion& e, const Vec3& q) {
  auto ev = [&](const Taylor2& c) {
    const double u = q[0], v = q[1], w = q[2];
    return c.c000 + c.c100 * u + c.c010 * v + c.c001 * w + c.c200 * u * u + c.c020 * v * v +
           c.c002 * w * w + c.c110 * u * v + c.c101 * u * w + c.c011 * v * w;
  };
  return {ev(e.a), ev(e.b)};
}

inline FlowCoefficients flow_coefficients(const LocalExpansion& e) {
  const Taylor2& a = e.a;
  const Taylor2& b = e.b;
  const double Vu = e.Vu, Vv = e.Vv;
  const double g11 = a.c100 * a.c100 + b.c100 * b.c100;
  const double g22 = a.c010 * a.c010 + b.c010 * b.c010;
  const double g12 = a.c100 * a.c010 + b.c100 * b.c010;
  FlowCoefficients c;
  c.A = a.c100 * b.c010 - a.c010 * b.c100;
  c.A011 = a.c010 * b.c101 + a.c011 * b.c100 - a.c100 * b.c011 - a.c101 * b.c010;
  c.A110 = 2.0 * (a.c010 * b.c200 - a.c200 * b.c010) - 2.0 * Vu * g12;
  c.A020 = a.c010 * b.c110 + a.c020 * b.c100 - a.c100 * b.c020 - a.c110 * b.c010 - Vu * g22;
  c.A002 = a.c002 * b.c100 - a.c100 * b.c002;
  c.A200 = a.c100 * b.c200 - a.c200 * b.c100 - Vu * g11;
  c.B200 = a.c100 * b.c110 - a.c110 * b.c100 + a.c200 * b.c010 - a.c010 * b.c200 - Vv * g11;
  c.B002 = a.c002 * b.c010 - a.c010 * b.c002;
  c.B020 = a.c010 * b.c020 - a.c020 * b.c010 - Vv * g22;
  c.B101 = a.c100 * b.c011 - a.c011 * b.c100 + a.c101 * b.c010 - a.c010 * b.c101;
  c.B110 = 2.0 * (a.c100 * b.c020 - a.c020 * b.c100) - 2.0 * Vv * g12;
  c.C200 = a.c100 * b.c101 - a.c101 * b.c100;
  c.C020 = a.c010 * b.c011 - a.c011 * b.c010;
  c.C011 = 2.0 * (a.c010 * b.c002 - a.c002 * b.c010);
  c.C101 = 2.0 * (a.c100 * b.c002 - a.c002 * b.c100);
  c.C110 = a.c010 * b.c101 - a.c101 * b.c010 + a.c100 * b.c011 - a.c011 * b.c100;
  return c;
}

/// Truncated reduced flow d(u, v, w)/dtau. With drop_w2 the A002 w^2 and
/// B002 w^2 terms are omitted, as in the averaged derivation.
inline Vec3 frozen_quadratic_rhs(const FlowCoefficients& c, const Vec3& q, bool drop_w2 = false) {
  const double u = q[0], v = q[1], w = q[2];
  const double ww = drop_w2 ? 0.0 : w * w;
  return {-c.A * v + c.A200 * u * u + c.A020 * v * v + c.A002 * ww + c.A110 * u * v + c.A011 * v * w,
          c.A * u + c.B200 * u * u + c.B020 * v * v + c.B002 * ww + c.B101 * u * w + c.B110 * u * v,
          c.C200 * u * u + c.C020 * v * v + c.C110 * u * v + c.C101 * u * w + c.C011 * v * w};
}

/// Trigonometric coefficient functions of the cylindrical form
/// (u, v) = R (cos phi, sin phi):
///   dR/dtau = c2 R^2,  dphi/dtau = A + d1 R + h1 w,  dw/dtau = e2 R^2 + k2 R w.
struct CylindricalTerms {
  double c2 = 0, d1 = 0, e2 = 0, k2 = 0;
};

inline CylindricalTerms cylindrical_terms(const FlowCoefficients& c, double phi) {
  const double cs = std::cos(phi), sn = std::sin(phi);
  const double u2 = c.A200 * cs * cs + c.A020 * sn * sn + c.A110 * cs * sn;
  const double v2 = c.B200 * cs * cs + c.B020 * sn * sn + c.B110 * cs * sn;
  CylindricalTerms t;
  t.c2 = cs * u2 + sn * v2;
  t.d1 = cs * v2 - sn * u2;
  t.e2 = c.C200 * cs * cs + c.C020 * sn * sn + c.C110 * cs * sn;
  t.k2 = c.C101 * cs + c.C011 * sn;
  return t;
}

/// h1 of the cylindrical form (coefficient of w in dphi/dtau).
inline double h1_coefficient(const FlowCoefficients& c) { return c.B101; }

namespace detail {

inline double f3_numerator(const FlowCoefficients& c, double* magnitude = nullptr) {
  const double t1 = (c.A110 + 2.0 * c.B020) * c.A020;
  const double t2 = c.A200 * (c.A110 - 2.0 * c.B200);
  const double t3 = c.B110 * (c.B020 + c.B200);
  if (magnitude) *magnitude = std::abs(t1) + std::abs(t2) + std::abs(t3);
  return t1 + t2 - t3;
}

}  // namespace detail

inline double f3_average(const FlowCoefficients& c) {
  if (c.A == 0.0 || !std::isfinite(c.A)) throw Error(ErrorCode::ZeroRotation, "A = 0");
  return detail::f3_numerator(c) / (8.0 * c.A * c.A);
}

/// Angular mean of e2 by uniform quadrature (exact for the quadratic
/// trigonometric polynomial).
inline double e2_average(const FlowCoefficients& c, int n = 64) {
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += cylindrical_terms(c, 2.0 * kPi * k / n).e2;
  return acc / n;
}

/// Mean radius on the averaged spiral after the angle advanced from phi0 to phi.
inline double spiral_radius(double R0, double phi0, double phi, double f3_avg) {
  const double den = 1.0 - 2.0 * R0 * R0 * f3_avg * (phi - phi0);
  if (!(den > 0.0)) throw Error(ErrorCode::Blowup, "averaged radius escapes at finite angle");
  return R0 / std::sqrt(den);
}

enum class SpiralSense { counterclockwise, clockwise };
enum class NodeType { attractor, repellor, center };

inline const char* to_string(SpiralSense s) {
  return s == SpiralSense::counterclockwise ? "counterclockwise" : "clockwise";
}
inline const char* to_string(NodeType t) {
  switch (t) {
    case NodeType::attractor: return "attractor";
    case NodeType::repellor: return "repellor";
    case NodeType::center: return "center";
  }
  return "?";
}

struct SpiralPrediction {
  double f3_avg = 0.0;
  double A = 0.0;
  double e2_avg = 0.0;
  SpiralSense sense = SpiralSense::counterclockwise;
  NodeType node_type = NodeType::center;
  double drift_slope = std::numeric_limits<double>::quiet_NaN();  // undefined for centers
};

/// Classification from the averaged law: the mean radius grows forward in
/// tau iff <f3> A > 0 (repellor) and shrinks iff <f3> A < 0 (attractor).
/// <f3> cancelling to round-off relative to its terms counts as a center.
inline SpiralPrediction classify_spiral(const FlowCoefficients& c, double center_rel_tol = 1e-12) {
  SpiralPrediction s;
  s.A = c.A;
  s.f3_avg = f3_average(c);
  s.e2_avg = e2_average(c);
  s.sense = c.A > 0.0 ? SpiralSense::counterclockwise : SpiralSense::clockwise;
  double mag = 0.0;
  const double num = detail::f3_numerator(c, &mag);
  if (std::abs(num) <= center_rel_tol * mag) {
    s.node_type = NodeType::center;
  } else {
    s.node_type = s.f3_avg * c.A < 0.0 ? NodeType::attractor : NodeType::repellor;
    s.drift_slope = s.e2_avg / (s.f3_avg * c.A);
  }
  return s;
}

/// Logarithmic envelope of the drift along the line direction.
inline double drift_envelope(double w0, double R, double R0, double e2_avg, double f3_avg, double A) {
  if (!(R > 0.0) || !(R0 > 0.0)) throw Error(ErrorCode::InvalidInput, "radii must be positive");
  if (f3_avg * A == 0.0) throw Error(ErrorCode::ZeroRotation, "<f3> A = 0");
  return w0 + e2_avg / (f3_avg * A) * std::log(R / R0);
}

/// w(tau) from the averaged solutions phi = phi0 + A tau and the spiral
/// radius, with K(tau) = int k2 R dtau and w = w0 + exp(K) int e2 R^2 exp(-K).
inline double drift_numeric(const FlowCoefficients& c, double R0, double phi0, double w0, double tau) {
  if (c.A == 0.0) throw Error(ErrorCode::ZeroRotation, "A = 0");
  const double f3 = f3_average(c);
  StepControl ctl;
  ctl.abs_tol = 1e-13;
  ctl.rel_tol = 1e-11;
  ctl.max_step = 0.25 / std::abs(c.A);
  DormandPrince<2> dp(ctl);
  auto rhs = [&](double s, const OdeState<2>& y, OdeState<2>& dy) {
    const double phi = phi0 + c.A * s;
    const double R = spiral_radius(R0, phi0, phi, f3);
    const CylindricalTerms ct = cylindrical_terms(c, phi);
    dy[0] = ct.k2 * R;
    dy[1] = ct.e2 * R * R * std::exp(-y[0]);
    return true;
  };
  double s = 0.0;
  OdeState<2> y = OdeState<2>::Zero();
  dp.advance(rhs, s, y, tau);
  return w0 + std::exp(y[0]) * y[1];
}

/// Fast-node margin: max(|Vu|, |Vv|) times the smallest first-order
/// coefficient over the largest second-order one (> 1: condition holds).
inline double vfast_diagnostic(const LocalExpansion& e) {
  const double first = std::min({std::abs(e.a.c100), std::abs(e.a.c010), std::abs(e.b.c100),
                                 std::abs(e.b.c010)});
  const double first_max = std::max({std::abs(e.a.c100), std::abs(e.a.c010), std::abs(e.b.c100),
                                     std::abs(e.b.c010)});
  if (first_max == 0.0) throw Error(ErrorCode::InvalidInput, "first-order coefficients all zero");
  const double second = std::max({std::abs(e.a.c200), std::abs(e.a.c020), std::abs(e.a.c002),
                                  std::abs(e.a.c110), std::abs(e.a.c101), std::abs(e.a.c011),
                                  std::abs(e.b.c200), std::abs(e.b.c020), std::abs(e.b.c002),
                                  std::abs(e.b.c110), std::abs(e.b.c101), std::abs(e.b.c011)});
  const double speed = std::max(std::abs(e.Vu), std::abs(e.Vv));
  if (speed == 0.0) return 0.0;
  if (second == 0.0) return std::numeric_limits<double>::infinity();
  return speed * first / second;
}

enum class HopfKind { space, time };

inline const char* to_string(HopfKind k) { return k == HopfKind::space ? "space" : "time"; }

struct HopfEvent {
  double param_lo = 0.0, param_hi = 0.0;
  double root = 0.0;
  HopfKind kind = HopfKind::space;
};

/// Sign changes of <f3> along an ordered scan. With `refine` (f3 as a
/// function of the parameter) each bracket is bisected to `tol`; otherwise
/// the root is linearly interpolated.
inline std::vector<HopfEvent> detect_hopf(const std::vector<std::pair<double, double>>& scan,
                                          HopfKind kind,
                                          const std::function<double(double)>& refine = {},
                                          double tol = 1e-10) {
  std::vector<HopfEvent> events;
  for (std::size_t i = 0; i + 1 < scan.size(); ++i) {
    auto [p0, f0] = scan[i];
    auto [p1, f1] = scan[i + 1];
    if (!std::isfinite(f0) || !std::isfinite(f1)) continue;
    if (f0 == 0.0 && i > 0) continue;  // counted as the upper end of the previous bracket
    if (!(f0 * f1 < 0.0 || f1 == 0.0)) continue;
    HopfEvent ev;
    ev.param_lo = p0;
    ev.param_hi = p1;
    ev.kind = kind;
    if (f1 == 0.0) {
      ev.root = p1;
    } else if (refine) {
      double lo = p0, hi = p1, flo = f0;
      for (int it = 0; it < 200 && std::abs(hi - lo) > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = refine(mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((fm > 0.0) == (flo > 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      ev.root = 0.5 * (lo + hi);
    } else {
      ev.root = p0 + (p1 - p0) * f0 / (f0 - f1);
    }
    events.push_back(ev);
  }
  return events;
}

using PlanarField = std::function<Eigen::Vector2d(const Eigen::Vector2d&)>;

struct LimitCycle {
  double radius = 0.0;           // fixed point of the return map on the ray phi = 0
  double map_slope = 0.0;        // d(return)/dR at the fixed point
  bool stable = false;           // slope < 1: attracting forward in time
  std::vector<double> radius_profile;  // R at 64 equally spaced angles along the cycle
  double period = 0.0;
};

struct ReturnMapOptions {
  double abs_tol = 1e-14;
  double rel_tol = 1e-12;
  double max_time = 1e4;
  int grid = 48;
  double bisection_tol = 1e-12;
};

namespace detail {

// One full turn of a planar flow around the origin starting at (R, 0); the
// angle is integrated as an extra state so winding is unambiguous. Returns
// nullopt if the orbit leaves `r_escape` or fails to turn within max_time.
struct TurnResult {
  double radius;
  double period;
  std::vector<double> profile;
};

inline std::optional<TurnResult> one_turn(const PlanarField& f, double R, double r_escape,
                                          const ReturnMapOptions& o, bool with_profile) {
  StepControl ctl;
  ctl.abs_tol = o.abs_tol;
  ctl.rel_tol = o.rel_tol;
  ctl.max_steps = 2'000'000;
  DormandPrince<3> dp(ctl);
  bool escaped = false;
  auto rhs = [&](double, const OdeState<3>& y, OdeState<3>& dy) {
    const Eigen::Vector2d q(y[0], y[1]);
    const double r2 = q.squaredNorm();
    if (r2 == 0.0) return false;
    const Eigen::Vector2d v = f(q);
    dy[0] = v[0];
    dy[1] = v[1];
    dy[2] = (q[0] * v[1] - q[1] * v[0]) / r2;
    return true;
  };
  OdeState<3> y(R, 0.0, 0.0);
  OdeState<3> k;
  rhs(0.0, y, k);
  if (k[2] == 0.0) return std::nullopt;
  const double target = k[2] > 0.0 ? 2.0 * kPi : -2.0 * kPi;
  double t = 0.0;
  TurnResult out{0.0, 0.0, {}};
  int next_profile = 1;
  OdeState<3> y_prev = y;
  double t_prev = t;
  bool turned = false;
  try {
    dp.advance(rhs, t, y, o.max_time, [&](double tp, const OdeState<3>& yp, double, const OdeState<3>& yn) {
      if (Eigen::Vector2d(yn[0], yn[1]).norm() > r_escape) {
        escaped = true;
        return false;
      }
      if (std::abs(yn[2]) >= std::abs(target)) {
        t_prev = tp;
        y_prev = yp;
        turned = true;
        return false;
      }
      if (with_profile) {
        while (next_profile < 64 && std::abs(yn[2]) >= std::abs(target) * next_profile / 64.0) {
          out.profile.push_back(Eigen::Vector2d(yn[0], yn[1]).norm());
          ++next_profile;
        }
      }
      return true;
    });
  } catch (const Error&) {
    return std::nullopt;
  }
  if (escaped || !turned) return std::nullopt;
  OdeState<3> y_root;
  const double sub = locate_event(dp, rhs, t_prev, y_prev, t - t_prev,
                                  [&](const OdeState<3>& s) { return std::abs(s[2]) - std::abs(target); },
                                  y_root);
  out.radius = y_root[0];
  out.period = t_prev + sub;
  if (with_profile) {
    out.profile.insert(out.profile.begin(), R);
    out.profile.resize(64, out.radius);
  }
  return out;
}

}  // namespace detail

/// Return map P(R) of the ray phi = 0 for a planar flow with a rotating
/// equilibrium at the origin, and its first fixed point in (0, search_radius].
/// nullopt when P(R) - R keeps one sign on the scan.
inline std::optional<LimitCycle> detect_limit_cycle(const PlanarField& f, double search_radius,
                                                    const ReturnMapOptions& o = {}) {
  if (!(search_radius > 0.0)) throw Error(ErrorCode::InvalidInput, "search radius must be positive");
  const double r_escape = 4.0 * search_radius;
  auto excess = [&](double R) -> std::optional<double> {
    auto turn = detail::one_turn(f, R, r_escape, o, false);
    if (!turn) return std::nullopt;
    return turn->radius - R;
  };
  const double r_min = 1e-3 * search_radius;
  std::optional<double> prev;
  double r_prev = 0.0;
  for (int i = 0; i < o.grid; ++i) {
    const double R = r_min * std::pow(search_radius / r_min, static_cast<double>(i) / (o.grid - 1));
    const auto g = excess(R);
    if (g && prev && ((*g > 0.0) != (*prev > 0.0)) && *g != 0.0) {
      double lo = r_prev, hi = R, glo = *prev;
      for (int it = 0; it < 200 && hi - lo > o.bisection_tol * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto gm = excess(mid);
        if (!gm) throw Error(ErrorCode::NoConvergence, "return map undefined inside bracket");
        if ((*gm > 0.0) == (glo > 0.0)) {
          lo = mid;
          glo = *gm;
        } else {
          hi = mid;
        }
      }
      LimitCycle lc;
      lc.radius = 0.5 * (lo + hi);
      const double dr = 1e-4 * lc.radius;
      const auto up = detail::one_turn(f, lc.radius + dr, r_escape, o, false);
      const auto dn = detail::one_turn(f, lc.radius - dr, r_escape, o, false);
      if (!up || !dn) throw Error(ErrorCode::NoConvergence, "return map slope undefined");
      lc.map_slope = (up->radius - dn->radius) / (2.0 * dr);
      lc.stable = lc.map_slope < 1.0;
      const auto cyc = detail::one_turn(f, lc.radius, r_escape, o, true);
      if (cyc) {
        lc.radius_profile = cyc->profile;
        lc.period = cyc->period;
      }
      return lc;
    }
    if (g) {
      prev = g;
      r_prev = R;
    } else {
      prev.reset();
    }
  }
  return std::nullopt;
}

/// Planar (w = 0) section of the truncated reduced flow, for return maps.
inline PlanarField planar_quadratic_flow(const FlowCoefficients& c) {
  return [c](const Eigen::Vector2d& q) {
    const Vec3 f = frozen_quadratic_rhs(c, Vec3(q[0], q[1], 0.0), true);
    return Eigen::Vector2d(f[0], f[1]);
  };
}

}  // namespace vortexline
