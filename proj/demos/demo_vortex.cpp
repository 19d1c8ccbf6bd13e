// Walks one nodal line of the three-mode superposition at t = 4: node data,
// the X-point next to a fast node, its manifold branches, and a short
// Bohmian trajectory with its finite-time Lyapunov number.
#include <cstdio>

#include "vortexline/chaos.hpp"

int main() {
  using namespace vortexline;
  const WavefunctionSpec spec = demo_superposition();
  const double t = 4.0;
  const auto lines = trace_all_lines(spec, t, NodalOptions{}, 9);
  std::printf("t = %g: %zu nodal lines\n", t, lines.size());
  for (std::size_t k = 0; k < lines.size(); ++k)
    std::printf("  line %zu: %zu nodes, length %.3f, ends %s/%s\n", k, lines[k].points.size(), lines[k].length(),
                to_string(lines[k].head_end), to_string(lines[k].tail_end));
  if (lines.empty()) return 1;

  // Fastest node of line 0.
  const NodalLine& line = lines.front();
  std::size_t best = 0;
  for (std::size_t i = 0; i < line.points.size(); ++i)
    if (line.points[i].V0.norm() > line.points[best].V0.norm()) best = i;
  const NodalPoint& p = line.points[best];
  const auto e = local_expansion(spec, p);
  const auto c = flow_coefficients(e);
  const auto sp = classify_spiral(c);
  std::printf("fastest node s = %.3f at (%.4f, %.4f, %.4f), |V0| = %.3f\n", p.s, p.r0[0], p.r0[1], p.r0[2],
              p.V0.norm());
  std::printf("  A = %.5f  <f3> = %.4f  %s, %s, fast-node margin %.2f\n", c.A, sp.f3_avg, to_string(sp.node_type),
              to_string(sp.sense), vfast_diagnostic(e));
  std::printf("  symmetry residuals: %.2e %.2e %.2e\n", c.A011 + c.B101, c.C101 + 2 * c.A002, c.C011 + 2 * c.B002);

  const XPoint xp = compute_xpoint(spec, p);
  std::printf("X-point at distance %.4f, eigenvalues (%.4f, %.4f, %.4f), lam1 lam2 + A^2 = %.3e\n", xp.d_X,
              xp.eigenvalues[0], xp.eigenvalues[1], xp.eigenvalues[2],
              xp.eigenvalues[0] * xp.eigenvalues[1] + c.A * c.A);
  for (const auto& b : manifold_branches(spec, xp, p))
    std::printf("  %-8s side %+d: %s after %.1f turns\n", to_string(b.kind), b.side, to_string(b.termination),
                std::abs(b.winding) / (2 * kPi));

  IntegratorOptions io;
  io.sample_dt = 0.05;
  const auto traj = integrate_with_deviation(spec, Vec3(-0.7, -1.1, 1.3), Vec3::UnitX(), 0.0, 20.0, io);
  const auto series = stretching_numbers(traj);
  std::printf("trajectory from (-0.7, -1.1, 1.3): chi(20) = %.4f, min |Psi| = %.4f\n", series.chi.back(),
              traj.stats.min_abs_psi);
  return 0;
}
