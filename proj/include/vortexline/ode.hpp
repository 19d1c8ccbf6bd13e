#pragma once

// Embedded Dormand-Prince 5(4) integrator with per-step error control.
//
// Right-hand sides have the signature `bool(double t, const State& y, State& dy)`.
// Returning false marks the state as inadmissible (e.g. too close to a node);
// the step is then rejected and retried with half the size.

#include "vortexline/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace vortexline {

template <int N>
using OdeState = Eigen::Matrix<double, N, 1>;

struct StepControl {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  double min_step = 1e-14;
  double initial_step = 0.0;  // 0: automatic
  std::size_t max_steps = 10'000'000;
  ErrorCode tiny_step_error = ErrorCode::NoConvergence;
};

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_calls = 0;
  double error_estimate = 0.0;  // sum of accepted local error norms (absolute)
};

template <int N>
class DormandPrince {
 public:
  using State = OdeState<N>;

  explicit DormandPrince(StepControl control = {}) : control_(control) {}

  const IntegrationStats& stats() const { return stats_; }
  const StepControl& control() const { return control_; }
  double step_size() const { return h_; }
  void set_step_size(double h) { h_ = std::abs(h); }

  /// One explicit step without error control. Returns false if any stage
  /// evaluation was rejected by the right-hand side.
  template <class Rhs>
  bool single_step(Rhs& rhs, double t, const State& y, double h, State& y_out) {
    State k1;
    if (!call(rhs, t, y, k1)) return false;
    State err, k7;
    return stages(rhs, t, y, k1, h, y_out, err, k7);
  }

  /// Integrate from (t, y) towards t_end, updating both in place. The observer
  /// `bool(double t_prev, const State& y_prev, double t, const State& y)` is
  /// called after every accepted step; returning false stops early.
  /// Returns true if t_end was reached.
  template <class Rhs, class Observer>
  bool advance(Rhs& rhs, double& t, State& y, double t_end, Observer&& observer) {
    if (t == t_end) return true;
    const double dir = t_end > t ? 1.0 : -1.0;
    State k1;
    if (!call(rhs, t, y, k1))
      throw Error(control_.tiny_step_error, "right-hand side rejected the initial state");
    if (h_ <= 0.0) h_ = initial_step(y, k1, std::abs(t_end - t));

    State y_new, err, k7;
    while (true) {
      if (stats_.accepted + stats_.rejected >= control_.max_steps)
        throw Error(ErrorCode::StepLimitExceeded, "integrator exceeded max_steps");
      const double remaining = std::abs(t_end - t);
      double h = std::min({h_, control_.max_step, remaining});
      const bool last = remaining <= h * (1.0 + 1e-12);
      if (last) h = remaining;

      if (!stages(rhs, t, y, k1, dir * h, y_new, err, k7)) {
        ++stats_.rejected;
        h_ = 0.5 * h;
        check_step();
        continue;
      }
      double err_norm = 0.0;
      for (int i = 0; i < y.size(); ++i) {
        const double sc =
            control_.abs_tol + control_.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        err_norm = std::max(err_norm, std::abs(err[i]) / sc);
      }
      if (!std::isfinite(err_norm)) err_norm = 1e10;

      if (err_norm <= 1.0) {
        ++stats_.accepted;
        stats_.error_estimate += err.norm();
        const double t_prev = t;
        const State y_prev = y;
        t = last ? t_end : t + dir * h;
        y = y_new;
        k1 = k7;
        const double factor =
            err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
        // A step shortened to land on t_end says nothing about the natural size.
        h_ = last ? std::max(h_, h * factor) : h * factor;
        if (!observer(t_prev, y_prev, t, y)) return false;
        if (last) return true;
      } else {
        ++stats_.rejected;
        h_ = h * std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
        check_step();
      }
    }
  }

  template <class Rhs>
  bool advance(Rhs& rhs, double& t, State& y, double t_end) {
    return advance(rhs, t, y, t_end, [](double, const State&, double, const State&) { return true; });
  }

 private:
  template <class Rhs>
  bool call(Rhs& rhs, double t, const State& y, State& dy) {
    ++stats_.rhs_calls;
    return rhs(t, y, dy) && dy.allFinite();
  }

  void check_step() const {
    if (h_ < control_.min_step) throw Error(control_.tiny_step_error, "step size underflow");
  }

  double initial_step(const State& y, const State& f, double span) const {
    if (control_.initial_step > 0.0) return std::min(control_.initial_step, control_.max_step);
    double d0 = 0.0, d1 = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      const double sc = control_.abs_tol + control_.rel_tol * std::abs(y[i]);
      d0 = std::max(d0, std::abs(y[i]) / sc);
      d1 = std::max(d1, std::abs(f[i]) / sc);
    }
    double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min({h, control_.max_step, span});
    return std::max(h, control_.min_step * 10.0);
  }

  template <class Rhs>
  bool stages(Rhs& rhs, double t, const State& y, const State& k1, double h, State& y_out,
              State& err, State& k7) {
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                     a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                     a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                     b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                     e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    State k2, k3, k4, k5, k6;
    if (!call(rhs, t + c2 * h, y + h * (a21 * k1), k2)) return false;
    if (!call(rhs, t + c3 * h, y + h * (a31 * k1 + a32 * k2), k3)) return false;
    if (!call(rhs, t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3), k4)) return false;
    if (!call(rhs, t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), k5))
      return false;
    if (!call(rhs, t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), k6))
      return false;
    y_out = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    if (!call(rhs, t + h, y_out, k7)) return false;
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    return true;
  }

  StepControl control_;
  IntegrationStats stats_;
  double h_ = 0.0;
};

/// Locate the root of a scalar event function g(y) inside an accepted step
/// [t_a, t_a + h] by bisection on the sub-step length, re-integrating from
/// (t_a, y_a) with single steps. g(y_a) and g(y(t_a + h)) must differ in sign.
/// Returns the sub-step length; `y_root` receives the state there.
template <int N, class Rhs, class Event>
double locate_event(DormandPrince<N>& stepper, Rhs& rhs, double t_a, const OdeState<N>& y_a,
                    double h, Event&& g, OdeState<N>& y_root, int max_iter = 60) {
  double lo = 0.0, hi = h;
  const bool lo_positive = g(y_a) > 0.0;
  if (!stepper.single_step(rhs, t_a, y_a, h, y_root))
    throw Error(ErrorCode::NoConvergence, "event location: step rejected");
  for (int it = 0; it < max_iter && std::abs(hi - lo) > 1e-15 * std::abs(h); ++it) {
    const double mid = 0.5 * (lo + hi);
    OdeState<N> y_mid;
    if (!stepper.single_step(rhs, t_a, y_a, mid, y_mid))
      throw Error(ErrorCode::NoConvergence, "event location: step rejected");
    if ((g(y_mid) > 0.0) == lo_positive) {
      lo = mid;
    } else {
      hi = mid;
      y_root = y_mid;
    }
  }
  return hi;
}

}  // namespace vortexline
