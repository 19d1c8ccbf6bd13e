#pragma once

// Superpositions of 3-d harmonic-oscillator eigenstates (m = hbar = 1) with
// analytic spatial derivatives up to second order and analytic time derivative.

#include "vortexline/common.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace vortexline {

struct HermiteValues {
  double h = 0.0;    // H_n(xi)
  double dh = 0.0;   // H_n'(xi) = 2n H_{n-1}
  double d2h = 0.0;  // H_n''(xi) = 4n(n-1) H_{n-2}
};

/// Physicists' Hermite polynomial by the three-term recurrence
/// H_{k+1} = 2 xi H_k - 2k H_{k-1}, with derivatives from the lowering identity.
inline HermiteValues hermite_eval(int n, double xi) {
  if (n < 0) throw Error(ErrorCode::InvalidInput, "hermite_eval: negative order");
  // on exit hm1 = H_{n-1}, hm2 = H_{n-2}
  double hm2 = 0.0, hm1 = 0.0, h = 1.0;
  for (int k = 0; k < n; ++k) {
    const double next = 2.0 * xi * h - 2.0 * k * hm1;
    hm2 = hm1;
    hm1 = h;
    h = next;
  }
  HermiteValues out;
  out.h = h;
  out.dh = n >= 1 ? 2.0 * n * hm1 : 0.0;
  out.d2h = n >= 2 ? 4.0 * n * (n - 1.0) * hm2 : 0.0;
  return out;
}

struct QuantumNumbers {
  int n1 = 0, n2 = 0, n3 = 0;

  int operator[](int k) const { return k == 0 ? n1 : (k == 1 ? n2 : n3); }
  bool valid() const { return n1 >= 0 && n2 >= 0 && n3 >= 0; }
  friend bool operator==(const QuantumNumbers&, const QuantumNumbers&) = default;
};

struct Mode {
  Complex coeff;
  QuantumNumbers qnums;
  double energy = 0.0;  // sum_k (n_k + 1/2) omega_k
};

struct ModeInput {
  Complex coeff;
  QuantumNumbers qnums;
};

/// Which factorisation of the field to evaluate. `full` is Psi itself;
/// `polynomial` is phi in Psi = exp(sigma) phi with sigma = -sum omega_k x_k^2 / 2.
/// Both give the same Bohmian velocity; phi stays O(1) far from the origin.
enum class Basis { full, polynomial };

/// Immutable superposition of oscillator eigenstates. All field evaluations
/// derive from this object.
class WavefunctionSpec {
 public:
  WavefunctionSpec(std::vector<ModeInput> modes, const Vec3& omega) : omega_(omega) {
    if (modes.empty()) throw Error(ErrorCode::InvalidInput, "wavefunction needs at least one mode");
    if (!(omega.array() > 0.0).all() || !omega.allFinite())
      throw Error(ErrorCode::InvalidInput, "omega components must be positive");
    double weight = 0.0;
    for (const auto& m : modes) {
      if (!m.qnums.valid()) throw Error(ErrorCode::InvalidInput, "negative quantum number");
      if (!std::isfinite(m.coeff.real()) || !std::isfinite(m.coeff.imag()))
        throw Error(ErrorCode::InvalidInput, "non-finite mode coefficient");
      weight += std::norm(m.coeff);
      double e = 0.0;
      for (int k = 0; k < 3; ++k) e += (m.qnums[k] + 0.5) * omega[k];
      modes_.push_back(Mode{m.coeff, m.qnums, e});
    }
    if (!(weight > 0.0)) throw Error(ErrorCode::InvalidInput, "all mode coefficients vanish");
  }

  const std::vector<Mode>& modes() const { return modes_; }
  const Vec3& omega() const { return omega_; }

  /// sigma(x) = -sum_k omega_k x_k^2 / 2 (log of the Gaussian envelope).
  double log_envelope(const Vec3& x) const {
    return -0.5 * (omega_.array() * x.array().square()).sum();
  }
  Vec3 log_envelope_gradient(const Vec3& x) const {
    return -(omega_.array() * x.array()).matrix();
  }

 private:
  std::vector<Mode> modes_;
  Vec3 omega_;
};

/// Default frequencies of the demo state.
inline Vec3 demo_omega() { return Vec3(1.0, 1.0, std::sqrt(3.0)); }

/// Equal-weight superposition of the (0,0,0), (1,0,1) and (0,1,2) eigenstates.
inline WavefunctionSpec demo_superposition(const Vec3& omega = demo_omega()) {
  const double c = 1.0 / std::sqrt(3.0);
  return WavefunctionSpec({{c, {0, 0, 0}}, {c, {1, 0, 1}}, {c, {0, 1, 2}}}, omega);
}

/// Real eigenstate (or its polynomial part) with gradient and Hessian.
struct EigenstateSample {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
  Mat3 hess = Mat3::Zero();
  bool underflow = false;
};

namespace detail {

struct Factor1d {
  double f = 0.0, df = 0.0, d2f = 0.0;
};

inline double hermite_norm(int n, double omega) {
  // (omega/pi)^{1/4} / sqrt(2^n n!)
  double fact = 1.0;
  for (int k = 2; k <= n; ++k) fact *= k;
  return std::pow(omega / kPi, 0.25) / std::sqrt(std::ldexp(fact, n));
}

// Polynomial factor N H_n(sqrt(omega) x) and its x-derivatives.
inline Factor1d polynomial_factor(int n, double omega, double x) {
  const double so = std::sqrt(omega);
  const HermiteValues hv = hermite_eval(n, so * x);
  const double nrm = hermite_norm(n, omega);
  return {nrm * hv.h, nrm * so * hv.dh, nrm * omega * hv.d2h};
}

}  // namespace detail

// Exponent below which exp() underflows to a subnormal/zero double.
inline constexpr double kEnvelopeUnderflow = -708.0;

/// Single eigenstate Psi_q(x), or its Gaussian-stripped polynomial when
/// basis == polynomial.
inline EigenstateSample eval_eigenstate(const WavefunctionSpec& spec, const QuantumNumbers& q,
                                        const Vec3& x, Basis basis = Basis::full) {
  if (!q.valid()) throw Error(ErrorCode::InvalidInput, "negative quantum number");
  EigenstateSample out;
  std::array<detail::Factor1d, 3> fac;
  for (int k = 0; k < 3; ++k) fac[k] = detail::polynomial_factor(q[k], spec.omega()[k], x[k]);

  double env = 1.0;
  if (basis == Basis::full) {
    const double sigma = spec.log_envelope(x);
    if (sigma < kEnvelopeUnderflow) {
      out.underflow = true;
      return out;
    }
    // Per axis, d/dx [p exp(-w x^2/2)] = (p' - w x p) exp(-w x^2/2); the
    // exponentials multiply to exp(sigma), applied once to the product.
    for (int k = 0; k < 3; ++k) {
      const double w = spec.omega()[k];
      const double xk = x[k];
      const detail::Factor1d p = fac[k];
      fac[k].df = p.df - w * xk * p.f;
      fac[k].d2f = p.d2f - 2.0 * w * xk * p.df + (w * w * xk * xk - w) * p.f;
    }
    env = std::exp(sigma);
  }

  const double f0 = fac[0].f, f1 = fac[1].f, f2 = fac[2].f;
  out.value = f0 * f1 * f2;
  out.grad = Vec3(fac[0].df * f1 * f2, f0 * fac[1].df * f2, f0 * f1 * fac[2].df);
  out.hess(0, 0) = fac[0].d2f * f1 * f2;
  out.hess(1, 1) = f0 * fac[1].d2f * f2;
  out.hess(2, 2) = f0 * f1 * fac[2].d2f;
  out.hess(0, 1) = out.hess(1, 0) = fac[0].df * fac[1].df * f2;
  out.hess(0, 2) = out.hess(2, 0) = fac[0].df * f1 * fac[2].df;
  out.hess(1, 2) = out.hess(2, 1) = f0 * fac[1].df * fac[2].df;
  if (env != 1.0) {
    out.value *= env;
    out.grad *= env;
    out.hess *= env;
  }
  return out;
}

struct FieldSample {
  Complex psi;
  CVec3 grad = CVec3::Zero();
  CMat3 hess = CMat3::Zero();
  Complex dpsi_dt;
  bool underflow = false;
};

/// Time-dependent amplitude c_j exp(-i E_j t) of every mode.
inline std::vector<Complex> mode_amplitudes(const WavefunctionSpec& spec, double t) {
  std::vector<Complex> w;
  w.reserve(spec.modes().size());
  for (const auto& m : spec.modes()) w.push_back(m.coeff * std::polar(1.0, -m.energy * t));
  return w;
}

inline FieldSample eval_field(const WavefunctionSpec& spec, const Vec3& x, double t,
                              Basis basis = Basis::full) {
  FieldSample out;
  const auto amps = mode_amplitudes(spec, t);
  for (std::size_t j = 0; j < amps.size(); ++j) {
    const auto& mode = spec.modes()[j];
    const EigenstateSample e = eval_eigenstate(spec, mode.qnums, x, basis);
    out.underflow = out.underflow || e.underflow;
    const Complex a = amps[j];
    out.psi += a * e.value;
    out.grad += a * e.grad.cast<Complex>();
    out.hess += a * e.hess.cast<Complex>();
    out.dpsi_dt += Complex(0.0, -mode.energy) * a * e.value;
  }
  return out;
}

/// phi in Psi = exp(sigma) phi.
inline FieldSample eval_polynomial_part(const WavefunctionSpec& spec, const Vec3& x, double t) {
  return eval_field(spec, x, t, Basis::polynomial);
}

/// RMS |Psi| over a fixed shell of 26 directions at unit radius; the
/// reference magnitude for node tolerances.
inline double field_scale(const WavefunctionSpec& spec, double t) {
  double acc = 0.0;
  int count = 0;
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -1; k <= 1; ++k) {
        if (i == 0 && j == 0 && k == 0) continue;
        const Vec3 dir = Vec3(i, j, k).normalized();
        acc += std::norm(eval_field(spec, dir, t).psi);
        ++count;
      }
  return std::sqrt(acc / count);
}

}  // namespace vortexline
