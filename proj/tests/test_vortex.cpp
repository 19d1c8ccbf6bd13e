#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vortexline/vortex.hpp"

using namespace vortexline;

namespace {

LocalExpansion random_expansion(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto fill = [&] {
    Taylor2 c;
    for (double* v : {&c.c100, &c.c010, &c.c200, &c.c020, &c.c002, &c.c110, &c.c101, &c.c011}) *v = u(rng);
    return c;
  };
  LocalExpansion e;
  e.a = fill();
  e.b = fill();
  e.Vu = 3 * u(rng);
  e.Vv = 3 * u(rng);
  return e;
}

NodalPoint demo_node() {
  const auto spec = demo_superposition();
  const auto lines = trace_all_lines(spec, 4.0, NodalOptions{}, 9);
  return lines.at(0).points.at(20);
}

}  // namespace

TEST(FlowCoefficients, Symmetries) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto c = flow_coefficients(random_expansion(rng));
    EXPECT_NEAR(c.A011, -c.B101, 1e-14 * std::abs(c.A011) + 1e-300);
    EXPECT_NEAR(c.C101, -2 * c.A002, 1e-14 * std::abs(c.C101) + 1e-300);
    EXPECT_NEAR(c.C011, -2 * c.B002, 1e-14 * std::abs(c.C011) + 1e-300);
  }
}

TEST(FlowCoefficients, QuadraticModelOfComovingFlow) {
  // The truncated flow should match N - G V0 of the quadratic field model to
  // second order: the remainder shrinks like h^3.
  std::mt19937_64 rng(9);
  const auto e = random_expansion(rng);
  const auto c = flow_coefficients(e);
  const Vec3 V = e.Vu * Vec3::UnitX() + e.Vv * Vec3::UnitY();
  auto exact = [&](const Vec3& q) {
    const double h = 1e-6;
    Complex f = expansion_value(e, q);
    Vec3 gr, gi;
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d[k] = h;
      const Complex g = (expansion_value(e, q + d) - expansion_value(e, q - d)) / (2 * h);
      gr[k] = g.real();
      gi[k] = g.imag();
    }
    return Vec3(f.real() * gi - f.imag() * gr - std::norm(f) * V);
  };
  const Vec3 dir = Vec3(0.3, -0.5, 0.4).normalized();
  double prev = 0.0;
  for (double h : {4e-2, 2e-2, 1e-2}) {
    const double r = (exact(h * dir) - frozen_quadratic_rhs(c, h * dir)).norm();
    if (prev > 0.0) EXPECT_NEAR(prev / r, 8.0, 1.0);
    prev = r;
  }
}

TEST(Spiral, ClosedFormAgreesWithAveragedOde) {
  const double R0 = 0.05, f3 = -3.0;
  const double phi = 4 * oracle::kPi;
  EXPECT_NEAR(spiral_radius(R0, 0.0, phi, f3), oracle::averaged_radius(R0, phi, f3), 1e-15);
  EXPECT_THROW(spiral_radius(0.5, 0.0, 10.0, 1.0), Error);
}

TEST(Spiral, AttractorIffF3TimesANegative) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 20; ++k) {
    const auto c = flow_coefficients(random_expansion(rng));
    const auto s = classify_spiral(c);
    if (s.node_type == NodeType::center) continue;
    EXPECT_EQ(s.node_type == NodeType::attractor, s.f3_avg * c.A < 0.0);
    EXPECT_EQ(s.sense == SpiralSense::counterclockwise, c.A > 0.0);
  }
}

TEST(Spiral, DemoNodeExpansionIsConsistent) {
  const auto spec = demo_superposition();
  const auto p = demo_node();
  const auto e = local_expansion(spec, p);
  EXPECT_NEAR(e.a.c000, 0.0, 1e-12);
  EXPECT_NEAR(e.b.c000, 0.0, 1e-12);
  // the tangent lies in the null space of both gradients
  EXPECT_NEAR(e.a.c001, 0.0, 1e-10);
  EXPECT_NEAR(e.b.c001, 0.0, 1e-10);
  EXPECT_GT(vfast_diagnostic(e), 0.0);
}

TEST(Hopf, SignChangesLocated) {
  std::vector<std::pair<double, double>> scan;
  for (int i = 0; i <= 10; ++i) {
    const double p = 0.1 * i;
    scan.push_back({p, (p - 0.33) * (p - 0.71)});
  }
  const auto linear = detect_hopf(scan, HopfKind::time);
  ASSERT_EQ(linear.size(), 2u);
  const auto refined = detect_hopf(scan, HopfKind::time, [](double p) { return (p - 0.33) * (p - 0.71); }, 1e-12);
  ASSERT_EQ(refined.size(), 2u);
  EXPECT_NEAR(refined[0].root, 0.33, 1e-11);
  EXPECT_NEAR(refined[1].root, 0.71, 1e-11);
}

TEST(Hopf, NoEventsWithoutSignChange) {
  std::vector<std::pair<double, double>> scan{{0, 1.0}, {1, 2.0}, {2, 0.5}};
  EXPECT_TRUE(detect_hopf(scan, HopfKind::space).empty());
}

TEST(LimitCycle, NormalFormRadius) {
  // supercritical normal form: cycle at R = sqrt(mu), attracting
  const double mu = 0.01;
  PlanarField f = [mu](const Eigen::Vector2d& q) {
    const double r2 = q.squaredNorm();
    return Eigen::Vector2d(mu * q[0] - q[1] - q[0] * r2, q[0] + mu * q[1] - q[1] * r2);
  };
  const auto cyc = detect_limit_cycle(f, 0.5);
  ASSERT_TRUE(cyc.has_value());
  EXPECT_NEAR(cyc->radius, std::sqrt(mu), 1e-6);
  EXPECT_TRUE(cyc->stable);
  EXPECT_NEAR(cyc->period, 2 * oracle::kPi, 1e-3);
}

TEST(LimitCycle, NoneForPureSpiral) {
  PlanarField f = [](const Eigen::Vector2d& q) {
    return Eigen::Vector2d(-0.05 * q[0] - q[1], q[0] - 0.05 * q[1]);
  };
  EXPECT_FALSE(detect_limit_cycle(f, 0.5).has_value());
}
