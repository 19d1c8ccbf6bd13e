#pragma once

// Test-side reference computations. Nothing here calls into the library's
// evaluation code; only plain types are shared.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "vortexline/common.hpp"

namespace oracle {

using vortexline::Vec3;
using C = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

inline double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// Explicit sum H_n(x) = n! sum_m (-1)^m (2x)^(n-2m) / (m! (n-2m)!).
inline double hermite(int n, double x) {
  double acc = 0.0;
  for (int m = 0; 2 * m <= n; ++m)
    acc += (m % 2 ? -1.0 : 1.0) * std::pow(2.0 * x, n - 2 * m) / (factorial(m) * factorial(n - 2 * m));
  return factorial(n) * acc;
}

inline double eigen1d(int n, double w, double x) {
  return std::pow(w / kPi, 0.25) / std::sqrt(std::pow(2.0, n) * factorial(n)) * hermite(n, std::sqrt(w) * x) *
         std::exp(-0.5 * w * x * x);
}

struct Mode {
  C c;
  int n[3];
};

struct State {
  std::vector<Mode> modes;
  Vec3 w;
  double energy(const Mode& m) const {
    double e = 0.0;
    for (int k = 0; k < 3; ++k) e += (m.n[k] + 0.5) * w[k];
    return e;
  }
  C psi(const Vec3& x, double t) const {
    C acc = 0.0;
    for (const auto& m : modes) {
      double p = 1.0;
      for (int k = 0; k < 3; ++k) p *= eigen1d(m.n[k], w[k], x[k]);
      acc += m.c * std::exp(C(0.0, -energy(m) * t)) * p;
    }
    return acc;
  }
};

inline State demo(const Vec3& w) {
  const double a = 1.0 / std::sqrt(3.0);
  return {{{a, {0, 0, 0}}, {a, {1, 0, 1}}, {a, {0, 1, 2}}}, w};
}

// Central differences of psi.
inline std::array<C, 3> grad(const State& s, const Vec3& x, double t, double h = 1e-5) {
  std::array<C, 3> g;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    g[k] = (s.psi(x + e, t) - s.psi(x - e, t)) / (2.0 * h);
  }
  return g;
}

inline C hess(const State& s, const Vec3& x, double t, int i, int j, double h = 1e-4) {
  Vec3 ei = Vec3::Zero(), ej = Vec3::Zero();
  ei[i] = h;
  ej[j] = h;
  return (s.psi(x + ei + ej, t) - s.psi(x + ei - ej, t) - s.psi(x - ei + ej, t) + s.psi(x - ei - ej, t)) /
         (4.0 * h * h);
}

inline C dt(const State& s, const Vec3& x, double t, double h = 1e-5) {
  return (s.psi(x, t + h) - s.psi(x, t - h)) / (2.0 * h);
}

// v = Im(grad psi / psi) from finite differences.
inline Vec3 velocity(const State& s, const Vec3& x, double t) {
  const C p = s.psi(x, t);
  const auto g = grad(s, x, t);
  return {std::imag(g[0] / p), std::imag(g[1] / p), std::imag(g[2] / p)};
}

// Newton on psi = 0 within the plane spanned by e1, e2 through x, with
// difference gradients.
inline Vec3 refine_in_plane(const State& s, double t, Vec3 x, const Vec3& e1, const Vec3& e2) {
  const Vec3 a = e1.normalized(), b = e2.normalized();
  for (int it = 0; it < 20; ++it) {
    const C f = s.psi(x, t);
    const double h = 1e-6;
    const C fa = (s.psi(x + h * a, t) - s.psi(x - h * a, t)) / (2 * h);
    const C fb = (s.psi(x + h * b, t) - s.psi(x - h * b, t)) / (2 * h);
    const double det = fa.real() * fb.imag() - fa.imag() * fb.real();
    if (det == 0.0) break;
    const double da = (f.real() * fb.imag() - f.imag() * fb.real()) / det;
    const double db = (fa.real() * f.imag() - fa.imag() * f.real()) / det;
    x -= da * a + db * b;
    if (std::hypot(da, db) < 1e-13) break;
  }
  return x;
}

// Points where a nodal line pierces a face of a regular grid, located by the
// phase winding around the face and placed at the bilinear zero, optionally
// polished by Newton in the face plane.
inline std::vector<Vec3> face_crossings(const State& s, double t, const Vec3& lo, const Vec3& hi, int n,
                                        bool polish = false) {
  const Vec3 h = (hi - lo) / n;
  const int m = n + 1;
  std::vector<C> f(static_cast<std::size_t>(m) * m * m);
  auto idx = [m](int i, int j, int k) { return (static_cast<std::size_t>(i) * m + j) * m + k; };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) f[idx(i, j, k)] = s.psi(lo + Vec3(i * h[0], j * h[1], k * h[2]), t);

  auto winding = [](const C* c) {
    double acc = 0.0;
    for (int q = 0; q < 4; ++q) acc += std::arg(c[(q + 1) % 4] / c[q]);
    return static_cast<int>(std::lround(acc / (2.0 * kPi)));
  };
  std::vector<Vec3> out;
  auto face = [&](const Vec3& origin, const Vec3& e1, const Vec3& e2, const C c[4]) {
    if (winding(c) == 0) return;
    // Bilinear zero: Newton on (a, b) in [0,1]^2 from the centre.
    double a = 0.5, b = 0.5;
    for (int it = 0; it < 30; ++it) {
      const C F = c[0] * (1 - a) * (1 - b) + c[1] * a * (1 - b) + c[2] * a * b + c[3] * (1 - a) * b;
      const C Fa = -c[0] * (1 - b) + c[1] * (1 - b) + c[2] * b - c[3] * b;
      const C Fb = -c[0] * (1 - a) - c[1] * a + c[2] * a + c[3] * (1 - a);
      const double det = Fa.real() * Fb.imag() - Fa.imag() * Fb.real();
      if (det == 0.0) break;
      a -= (F.real() * Fb.imag() - F.imag() * Fb.real()) / det;
      b -= (Fa.real() * F.imag() - Fa.imag() * F.real()) / det;
    }
    a = std::clamp(a, 0.0, 1.0);
    b = std::clamp(b, 0.0, 1.0);
    const Vec3 x = origin + a * e1 + b * e2;
    out.push_back(polish ? refine_in_plane(s, t, x, e1, e2) : x);
  };
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const Vec3 o = lo + Vec3(i * h[0], j * h[1], k * h[2]);
        if (j < n && k < n) {
          const C c[4] = {f[idx(i, j, k)], f[idx(i, j + 1, k)], f[idx(i, j + 1, k + 1)], f[idx(i, j, k + 1)]};
          face(o, Vec3(0, h[1], 0), Vec3(0, 0, h[2]), c);
        }
        if (i < n && k < n) {
          const C c[4] = {f[idx(i, j, k)], f[idx(i + 1, j, k)], f[idx(i + 1, j, k + 1)], f[idx(i, j, k + 1)]};
          face(o, Vec3(h[0], 0, 0), Vec3(0, 0, h[2]), c);
        }
        if (i < n && j < n) {
          const C c[4] = {f[idx(i, j, k)], f[idx(i + 1, j, k)], f[idx(i + 1, j + 1, k)], f[idx(i, j + 1, k)]};
          face(o, Vec3(h[0], 0, 0), Vec3(0, h[1], 0), c);
        }
      }
  return out;
}

// Symmetric Hausdorff distance between two polylines (vertex to segment).
inline double point_polyline(const Vec3& x, const std::vector<Vec3>& pl) {
  double best = (pl.front() - x).norm();
  for (std::size_t i = 0; i + 1 < pl.size(); ++i) {
    const Vec3 ab = pl[i + 1] - pl[i];
    const double l2 = ab.squaredNorm();
    const double u = l2 > 0 ? std::clamp((x - pl[i]).dot(ab) / l2, 0.0, 1.0) : 0.0;
    best = std::min(best, (pl[i] + u * ab - x).norm());
  }
  return best;
}

inline double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double d = 0.0;
  for (const auto& x : a) d = std::max(d, point_polyline(x, b));
  for (const auto& x : b) d = std::max(d, point_polyline(x, a));
  return d;
}

// Distance from x to the curve through pts with unit tangents tans; each
// segment is a cubic Hermite whose end derivatives are the tangents scaled by
// the chord. Only segments next to the closest vertex are searched.
inline double point_hermite(const Vec3& x, const std::vector<Vec3>& pts, const std::vector<Vec3>& tans) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if ((pts[i] - x).squaredNorm() < (pts[k] - x).squaredNorm()) k = i;
  double best = (pts[k] - x).norm();
  const std::size_t lo = k >= 2 ? k - 2 : 0, hi = std::min(k + 2, pts.size() - 1);
  for (std::size_t i = lo; i < hi; ++i) {
    const Vec3 &p0 = pts[i], &p1 = pts[i + 1];
    const double L = (p1 - p0).norm();
    const Vec3 m0 = L * tans[i], m1 = L * tans[i + 1];
    auto dist = [&](double u) {
      const double u2 = u * u, u3 = u2 * u;
      const Vec3 h = (2 * u3 - 3 * u2 + 1) * p0 + (u3 - 2 * u2 + u) * m0 + (-2 * u3 + 3 * u2) * p1 + (u3 - u2) * m1;
      return (h - x).norm();
    };
    double u_best = 0.0, d_best = dist(0.0);
    for (int j = 1; j <= 16; ++j)
      if (const double d = dist(j / 16.0); d < d_best) {
        d_best = d;
        u_best = j / 16.0;
      }
    // golden section around the best coarse sample
    double a = std::max(0.0, u_best - 1.0 / 16), b = std::min(1.0, u_best + 1.0 / 16);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 60; ++it) {
      const double c = b - g * (b - a), d = a + g * (b - a);
      if (dist(c) < dist(d)) b = d;
      else a = c;
    }
    best = std::min({best, d_best, dist(0.5 * (a + b))});
  }
  return best;
}

inline double hausdorff_hermite(const std::vector<Vec3>& a, const std::vector<Vec3>& ta, const std::vector<Vec3>& b,
                                const std::vector<Vec3>& tb) {
  double d = 0.0;
  for (const auto& x : a) d = std::max(d, point_hermite(x, b, tb));
  for (const auto& x : b) d = std::max(d, point_hermite(x, a, ta));
  return d;
}

// Averaged cubic law dR/dphi = <f3> R^3 integrated in closed form over an
// angle dphi: 1/R^2 drops by 2 <f3> dphi.
inline double averaged_radius(double R, double dphi, double f3) {
  return R / std::sqrt(1.0 - 2.0 * R * R * f3 * dphi);
}

}  // namespace oracle
