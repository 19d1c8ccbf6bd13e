#pragma once

// Bohmian velocity field of a WavefunctionSpec, its Jacobian, and trajectory
// integration with optional deviation-vector propagation.

#include "vortexline/ode.hpp"
#include "vortexline/wavefield.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace vortexline {

/// Density G = |phi|^2 and current N = phi_R grad(phi_I) - phi_I grad(phi_R),
/// with their spatial derivatives (dN(i, j) = d N_i / d x_j).
///
/// The current is assembled from mode pairs,
///   N = sum_{j<k} Im(conj(w_j) w_k) (P_j grad P_k - P_k grad P_j),
/// so a single-mode state yields exactly zero current.
struct CurrentSample {
  Complex phi;
  CVec3 grad_phi = CVec3::Zero();
  double density = 0.0;
  Vec3 current = Vec3::Zero();
  Vec3 ddensity = Vec3::Zero();
  Mat3 dcurrent = Mat3::Zero();
};

inline CurrentSample current_density(const WavefunctionSpec& spec, const Vec3& x, double t,
                                     Basis basis = Basis::polynomial, bool with_derivatives = true) {
  const auto amps = mode_amplitudes(spec, t);
  const std::size_t m = amps.size();
  std::vector<EigenstateSample> terms;
  terms.reserve(m);
  for (const auto& mode : spec.modes()) terms.push_back(eval_eigenstate(spec, mode.qnums, x, basis));

  CurrentSample out;
  for (std::size_t j = 0; j < m; ++j) {
    out.phi += amps[j] * terms[j].value;
    out.grad_phi += amps[j] * terms[j].grad.cast<Complex>();
  }
  out.density = std::norm(out.phi);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = j + 1; k < m; ++k) {
      const double c = std::imag(std::conj(amps[j]) * amps[k]);
      if (c == 0.0) continue;
      const auto& pj = terms[j];
      const auto& pk = terms[k];
      out.current += c * (pj.value * pk.grad - pk.value * pj.grad);
      if (with_derivatives) {
        out.dcurrent += c * (pk.grad * pj.grad.transpose() + pj.value * pk.hess -
                             pj.grad * pk.grad.transpose() - pk.value * pj.hess);
      }
    }
  }
  if (with_derivatives) {
    out.ddensity = 2.0 * (out.phi.real() * out.grad_phi.real() + out.phi.imag() * out.grad_phi.imag());
  }
  return out;
}

/// |phi|^2 below which the velocity is treated as singular.
inline constexpr double kNodeDensityFloor = 1e-280;

inline Vec3 bohmian_velocity(const WavefunctionSpec& spec, const Vec3& x, double t) {
  const CurrentSample c = current_density(spec, x, t, Basis::polynomial, false);
  if (!(c.density > kNodeDensityFloor))
    throw Error(ErrorCode::NodeSingularity, "velocity requested on a nodal point");
  return c.current / c.density;
}

/// Analytic dv_i/dx_j by the quotient rule on v = N / G.
inline Mat3 velocity_jacobian(const WavefunctionSpec& spec, const Vec3& x, double t) {
  const CurrentSample c = current_density(spec, x, t, Basis::polynomial, true);
  if (!(c.density > kNodeDensityFloor))
    throw Error(ErrorCode::NodeSingularity, "velocity Jacobian requested on a nodal point");
  const Vec3 v = c.current / c.density;
  return (c.dcurrent - v * c.ddensity.transpose()) / c.density;
}

struct IntegratorOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  double max_step = 0.05;
  double min_step = 1e-13;
  double node_guard = 1e-24;  // minimum admissible |phi|^2 at any stage
  double sample_dt = 0.05;
  std::size_t max_steps = 20'000'000;
};

struct TrajectoryState {
  double t = 0.0;
  Vec3 x = Vec3::Zero();
  std::optional<Vec3> deviation;       // unit length after renormalisation
  double stretch = 1.0;                // |deviation| before renormalisation
  double accumulated_log_stretch = 0.0;
};

struct TrajectoryStats {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  double min_abs_psi = std::numeric_limits<double>::infinity();
  double error_estimate = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryState> samples;
  TrajectoryStats stats;
  double sample_dt = 0.0;
};

enum class DeviationMode { variational, finite_separation };

namespace detail {

inline StepControl step_control(const IntegratorOptions& o) {
  if (!(o.abs_tol > 0.0) || !(o.rel_tol > 0.0))
    throw Error(ErrorCode::InvalidInput, "integrator tolerances must be positive");
  if (!(o.sample_dt > 0.0)) throw Error(ErrorCode::InvalidInput, "sample_dt must be positive");
  StepControl c;
  c.abs_tol = o.abs_tol;
  c.rel_tol = o.rel_tol;
  c.max_step = o.max_step;
  c.min_step = o.min_step;
  c.max_steps = o.max_steps;
  c.tiny_step_error = ErrorCode::NodeImpact;
  return c;
}

inline void track_min_psi(const WavefunctionSpec& spec, const Vec3& x, double t, TrajectoryStats& st) {
  const double a = std::abs(eval_field(spec, x, t, Basis::polynomial).psi) *
                   std::exp(spec.log_envelope(x));
  st.min_abs_psi = std::min(st.min_abs_psi, a);
}

// Sample instants t0 + k dt (k = 0..n), landing exactly on t_end.
inline std::vector<double> sample_times(double t_start, double t_end, double dt) {
  const double span = t_end - t_start;
  const double dir = span >= 0.0 ? 1.0 : -1.0;
  const auto n = static_cast<long>(std::floor(std::abs(span) / dt + 1e-9));
  std::vector<double> ts;
  ts.reserve(n + 2);
  for (long k = 0; k <= n; ++k) ts.push_back(t_start + dir * k * dt);
  if (std::abs(ts.back() - t_end) > 1e-9 * dt) ts.push_back(t_end);
  else ts.back() = t_end;
  return ts;
}

}  // namespace detail

/// Bohmian trajectory sampled at opts.sample_dt. Steps are shortened to land
/// exactly on sample instants. t_end < t_start integrates backwards.
inline Trajectory integrate_trajectory(const WavefunctionSpec& spec, const Vec3& x0, double t_start,
                                       double t_end, const IntegratorOptions& opts = {}) {
  DormandPrince<3> stepper(detail::step_control(opts));
  const double guard = opts.node_guard;
  auto rhs = [&](double t, const OdeState<3>& y, OdeState<3>& dy) {
    const CurrentSample c = current_density(spec, y, t, Basis::polynomial, false);
    if (!(c.density > guard)) return false;
    dy = c.current / c.density;
    return true;
  };

  Trajectory traj;
  traj.sample_dt = opts.sample_dt;
  OdeState<3> y = x0;
  {
    OdeState<3> probe;
    if (!rhs(t_start, y, probe))
      throw Error(ErrorCode::NodeSingularity, "initial condition lies on a node");
  }
  detail::track_min_psi(spec, y, t_start, traj.stats);
  const auto times = detail::sample_times(t_start, t_end, opts.sample_dt);
  traj.samples.push_back({times.front(), y, std::nullopt, 1.0, 0.0});
  double t = times.front();
  for (std::size_t k = 1; k < times.size(); ++k) {
    stepper.advance(rhs, t, y, times[k], [&](double, const OdeState<3>&, double tn, const OdeState<3>& yn) {
      detail::track_min_psi(spec, yn, tn, traj.stats);
      return true;
    });
    traj.samples.push_back({times[k], y, std::nullopt, 1.0, 0.0});
  }
  traj.stats.steps = stepper.stats().accepted;
  traj.stats.rejected = stepper.stats().rejected;
  traj.stats.error_estimate = stepper.stats().error_estimate;
  return traj;
}

/// Trajectory with a co-evolving deviation vector, renormalised to unit
/// length at every sample instant. `stretch` holds the pre-renormalisation
/// length, so ln(stretch) is the stretching number of the preceding interval.
///
/// variational: xi' = J(x, t) xi with the analytic Jacobian.
/// finite_separation: a shadow trajectory at x + delta xi, rescaled to
/// distance delta at each sample.
inline Trajectory integrate_with_deviation(const WavefunctionSpec& spec, const Vec3& x0,
                                           const Vec3& xi0, double t_start, double t_end,
                                           const IntegratorOptions& opts = {},
                                           DeviationMode mode = DeviationMode::variational,
                                           double delta = 1e-7) {
  if (std::abs(xi0.norm() - 1.0) > 1e-12)
    throw Error(ErrorCode::InvalidInput, "initial deviation must have unit length");
  DormandPrince<6> stepper(detail::step_control(opts));
  const double guard = opts.node_guard;

  auto variational = [&](double t, const OdeState<6>& y, OdeState<6>& dy) {
    const Vec3 x = y.head<3>();
    const CurrentSample c = current_density(spec, x, t, Basis::polynomial, true);
    if (!(c.density > guard)) return false;
    const Vec3 v = c.current / c.density;
    const Mat3 J = (c.dcurrent - v * c.ddensity.transpose()) / c.density;
    dy.head<3>() = v;
    dy.tail<3>() = J * y.tail<3>();
    return true;
  };
  auto shadow = [&](double t, const OdeState<6>& y, OdeState<6>& dy) {
    const CurrentSample a = current_density(spec, y.head<3>(), t, Basis::polynomial, false);
    const CurrentSample b = current_density(spec, y.tail<3>(), t, Basis::polynomial, false);
    if (!(a.density > guard) || !(b.density > guard)) return false;
    dy.head<3>() = a.current / a.density;
    dy.tail<3>() = b.current / b.density;
    return true;
  };

  Trajectory traj;
  traj.sample_dt = opts.sample_dt;
  const auto times = detail::sample_times(t_start, t_end, opts.sample_dt);
  OdeState<6> y;
  y.head<3>() = x0;
  y.tail<3>() = mode == DeviationMode::variational ? Vec3(xi0) : Vec3(x0 + delta * xi0);
  {
    OdeState<6> probe;
    const bool ok = mode == DeviationMode::variational ? variational(t_start, y, probe)
                                                       : shadow(t_start, y, probe);
    if (!ok) throw Error(ErrorCode::NodeSingularity, "initial condition lies on a node");
  }
  detail::track_min_psi(spec, x0, t_start, traj.stats);
  traj.samples.push_back({times.front(), x0, Vec3(xi0), 1.0, 0.0});

  double t = times.front();
  double log_sum = 0.0;
  auto observer = [&](double, const OdeState<6>&, double tn, const OdeState<6>& yn) {
    detail::track_min_psi(spec, yn.head<3>(), tn, traj.stats);
    return true;
  };
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (mode == DeviationMode::variational) {
      stepper.advance(variational, t, y, times[k], observer);
      const Vec3 xi = y.tail<3>();
      const double len = xi.norm();
      log_sum += std::log(len);
      y.tail<3>() = xi / len;
      traj.samples.push_back({times[k], y.head<3>(), Vec3(y.tail<3>()), len, log_sum});
    } else {
      stepper.advance(shadow, t, y, times[k], observer);
      const Vec3 sep = y.tail<3>() - y.head<3>();
      const double len = sep.norm() / delta;
      log_sum += std::log(len);
      const Vec3 dir = sep / sep.norm();
      y.tail<3>() = y.head<3>() + delta * dir;
      traj.samples.push_back({times[k], y.head<3>(), dir, len, log_sum});
    }
  }
  traj.stats.steps = stepper.stats().accepted;
  traj.stats.rejected = stepper.stats().rejected;
  traj.stats.error_estimate = stepper.stats().error_estimate;
  return traj;
}

}  // namespace vortexline
