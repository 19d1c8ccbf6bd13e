#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vortexline/dynamics.hpp"

using namespace vortexline;

TEST(Velocity, MatchesFiniteDifferenceOracle) {
  const auto spec = demo_superposition();
  const auto ref = oracle::demo(demo_omega());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const double t = 0.1 * k;
    const Vec3 v = bohmian_velocity(spec, x, t);
    const Vec3 vr = oracle::velocity(ref, x, t);
    EXPECT_LT((v - vr).norm(), 1e-6 * std::max(1.0, vr.norm())) << k;
  }
}

TEST(Velocity, JacobianMatchesDifferences) {
  const auto spec = demo_superposition();
  const Vec3 x(0.3, -0.6, 0.8);
  const double t = 2.0, h = 1e-6;
  const Mat3 J = velocity_jacobian(spec, x, t);
  for (int j = 0; j < 3; ++j) {
    Vec3 e = Vec3::Zero();
    e[j] = h;
    const Vec3 col = (bohmian_velocity(spec, x + e, t) - bohmian_velocity(spec, x - e, t)) / (2 * h);
    EXPECT_LT((J.col(j) - col).norm(), 1e-6 * std::max(1.0, col.norm()));
  }
}

TEST(Velocity, SingleModeIsExactlyAtRest) {
  const WavefunctionSpec spec({{Complex(0.3, 0.4), {1, 2, 0}}}, demo_omega());
  const Vec3 v = bohmian_velocity(spec, Vec3(0.3, 0.2, -0.5), 1.3);
  EXPECT_EQ(v, Vec3::Zero());
  const auto traj = integrate_trajectory(spec, Vec3(0.3, 0.2, -0.5), 0.0, 2.0);
  EXPECT_EQ(traj.samples.back().x, Vec3(0.3, 0.2, -0.5));
}

TEST(Velocity, OnNodeThrows) {
  // (1,0,0) has a nodal plane at x = 0
  const WavefunctionSpec spec({{1.0, {1, 0, 0}}}, demo_omega());
  EXPECT_THROW(bohmian_velocity(spec, Vec3(0, 0.2, 0.1), 0.0), Error);
}

TEST(Trajectory, SamplesOnRequestedGrid) {
  const auto spec = demo_superposition();
  IntegratorOptions o;
  o.sample_dt = 0.25;
  const auto traj = integrate_trajectory(spec, Vec3(-0.7, -1.1, 1.3), 0.0, 2.0, o);
  ASSERT_EQ(traj.samples.size(), 9u);
  for (std::size_t k = 0; k < traj.samples.size(); ++k) EXPECT_NEAR(traj.samples[k].t, 0.25 * k, 1e-12);
}

TEST(Trajectory, ReversibleToTolerance) {
  const auto spec = demo_superposition();
  IntegratorOptions o;
  o.abs_tol = o.rel_tol = 1e-12;
  const Vec3 x0(0.5, 0.5, 0.2);
  const auto fwd = integrate_trajectory(spec, x0, 0.0, 1.0, o);
  const auto back = integrate_trajectory(spec, fwd.samples.back().x, 1.0, 0.0, o);
  EXPECT_LT((back.samples.back().x - x0).norm(), 1e-7);
}

TEST(Deviation, VariationalAgreesWithFiniteSeparation) {
  const auto spec = demo_superposition();
  IntegratorOptions o;
  o.abs_tol = o.rel_tol = 1e-12;
  o.sample_dt = 0.05;
  const Vec3 x0(-0.7, -1.1, 1.3);
  const auto a = integrate_with_deviation(spec, x0, Vec3::UnitX(), 0.0, 2.0, o, DeviationMode::variational);
  const auto b = integrate_with_deviation(spec, x0, Vec3::UnitX(), 0.0, 2.0, o, DeviationMode::finite_separation, 1e-7);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t k = 1; k < a.samples.size(); ++k)
    EXPECT_NEAR(std::log(a.samples[k].stretch), std::log(b.samples[k].stretch), 1e-3) << k;
}

TEST(Deviation, RejectsNonUnitVector) {
  const auto spec = demo_superposition();
  EXPECT_THROW(integrate_with_deviation(spec, Vec3(0.5, 0.5, 0.5), Vec3(2, 0, 0), 0.0, 1.0), Error);
}
