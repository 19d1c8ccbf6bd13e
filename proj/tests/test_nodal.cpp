#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vortexline/nodal.hpp"

using namespace vortexline;

namespace {

// psi_000 + psi_100 + i psi_010 at omega = 1: the node sits on the vertical
// line (x, y) = -(cos t, sin t) / sqrt 2.
WavefunctionSpec rotating_line() {
  return WavefunctionSpec({{1.0, {0, 0, 0}}, {1.0, {1, 0, 0}}, {Complex(0, 1), {0, 1, 0}}}, Vec3(1, 1, 1));
}

// psi_200 + psi_020 + i psi_001 at omega = 1, t = 0: a unit ring in z = 0.
WavefunctionSpec ring() {
  return WavefunctionSpec({{1.0, {2, 0, 0}}, {1.0, {0, 2, 0}}, {Complex(0, 1), {0, 0, 1}}}, Vec3(1, 1, 1));
}

}  // namespace

TEST(NodalPoint, ConvergesOntoNode) {
  const auto spec = rotating_line();
  const double t = 0.8;
  const auto p = find_nodal_point(spec, t, Vec3(-0.3, -0.4, 0.5));
  const Vec3 expect(-std::cos(t) / std::sqrt(2.0), -std::sin(t) / std::sqrt(2.0), p.r0.z());
  EXPECT_LT((p.r0 - expect).norm(), 1e-12);
  EXPECT_NEAR(std::abs(p.frame.tangent.z()), 1.0, 1e-12);
}

TEST(NodalPoint, VelocityOfMovingLine) {
  const auto spec = rotating_line();
  const double t = 0.8;
  const auto p = find_nodal_point(spec, t, Vec3(-0.3, -0.4, 0.5));
  const Vec3 v = nodal_velocity(spec, p);
  EXPECT_LT((v - Vec3(std::sin(t), -std::cos(t), 0.0) / std::sqrt(2.0)).norm(), 1e-12);
}

TEST(NodalPoint, SeedOutsideBoxRejected) {
  EXPECT_THROW(find_nodal_point(rotating_line(), 0.0, Vec3(9, 0, 0)), Error);
}

TEST(NodalLine, StraightLineExitsBox) {
  const auto spec = rotating_line();
  NodalPoint start;
  start.r0 = Vec3(-0.6, 0.0, 0.0);
  NodalOptions o;
  o.ds = 0.05;
  const auto line = trace_nodal_line(spec, 0.0, start, o);
  EXPECT_FALSE(line.closed);
  EXPECT_EQ(line.head_end, LineEnd::box_exit);
  EXPECT_EQ(line.tail_end, LineEnd::box_exit);
  EXPECT_NEAR(line.length(), 8.0, 2 * o.ds);
  for (const auto& p : line.points) {
    EXPECT_NEAR(p.r0.x(), -1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(p.r0.y(), 0.0, 1e-12);
    EXPECT_FALSE(p.curvature_radius.has_value());
  }
}

TEST(NodalLine, RingClosesWithUnitRadius) {
  const auto spec = ring();
  NodalPoint start;
  start.r0 = Vec3(0.9, 0.1, 0.05);
  NodalOptions o;
  o.ds = 0.02;
  const auto line = trace_nodal_line(spec, 0.0, start, o);
  EXPECT_TRUE(line.closed);
  EXPECT_NEAR(line.length(), 2 * oracle::kPi, 1e-3);
  const double scale = field_scale(spec, 0.0);
  for (const auto& p : line.points) {
    EXPECT_NEAR(p.r0.head<2>().norm(), 1.0, 1e-12);
    EXPECT_LT(std::abs(eval_field(spec, p.r0, 0.0).psi), 1e-12 * scale);
    ASSERT_TRUE(p.curvature_radius.has_value());
    EXPECT_NEAR(*p.curvature_radius, 1.0, 1e-3);
    // right-handed orthonormal frame
    EXPECT_NEAR(p.frame.normal.cross(p.frame.binormal).dot(p.frame.tangent), 1.0, 1e-12);
  }
}

TEST(NodalLine, TraceAllFindsEachLineOnce) {
  const auto lines = trace_all_lines(ring(), 0.0, NodalOptions{}, 9);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_TRUE(lines[0].closed);
}

TEST(NodalLine, PolylineDistance) {
  NodalLine l;
  for (int i = 0; i <= 10; ++i) {
    NodalPoint p;
    p.r0 = Vec3(0.1 * i, 0, 0);
    l.points.push_back(p);
  }
  EXPECT_NEAR(distance_to_polyline(l, Vec3(0.55, 0.3, 0.4)), 0.5, 1e-15);
  EXPECT_NEAR(distance_to_polyline(l, Vec3(-1, 0, 0)), 1.0, 1e-15);
}

TEST(Frames, EulerFrameIsOrthonormal) {
  const Frame f = euler_frame(Vec3(0.3, -0.4, 0.8));
  EXPECT_NEAR(f.normal.dot(f.binormal), 0.0, 1e-15);
  EXPECT_NEAR(f.normal.dot(f.tangent), 0.0, 1e-15);
  EXPECT_NEAR(f.binormal.dot(f.tangent), 0.0, 1e-15);
  EXPECT_LT((f.tangent - Vec3(0.3, -0.4, 0.8).normalized()).norm(), 1e-15);
  const Vec3 q(0.2, 0.7, -0.1);
  EXPECT_LT((f.to_local(f.to_world(q)) - q).norm(), 1e-15);
}
