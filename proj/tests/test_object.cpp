#include "pivotal/object.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

using namespace pivotal;

namespace {

ObjectParams gear1() {
  ObjectParams o;
  o.name = "gear1";
  o.m = 0.140;
  o.profile = Profile::rect(0.084, 0.020);
  o.mu_A = o.mu_B = 0.3;
  o.mu_P = 0.8;
  o.f_u = 10.0;
  return o;
}

ObjectParams peg1() {
  ObjectParams o;
  o.name = "peg1";
  o.m = 0.045;
  o.profile = Profile::stepped(0.036, 0.020, 0.040, 0.028);
  o.mu_A = o.mu_B = 0.3;
  o.mu_P = 0.8;
  o.f_u = 10.0;
  return o;
}

// shoelace centroid of a simple polygon
Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
  double area2 = 0.0;
  Vec2 c = Vec2::Zero();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    const double cross = p.x() * q.y() - q.x() * p.y();
    area2 += cross;
    c += (p + q) * cross;
  }
  return c / (3.0 * area2);
}

}  // namespace

TEST(Object, FlatPoseIdentity) {
  const auto obj = gear1();
  const auto g = contact_geometry(obj, {0.0, 0.007});
  EXPECT_NEAR(g.A.x(), 0.0, 1e-15);
  EXPECT_NEAR(g.A.y(), 0.020, 1e-15);
  EXPECT_NEAR(g.C.x(), 0.042, 1e-15);
  EXPECT_NEAR(g.C.y(), 0.010, 1e-15);
  EXPECT_NEAR(g.P.x(), 0.084, 1e-15);
  EXPECT_NEAR(g.P.y(), 0.007, 1e-15);
  EXPECT_EQ(g.B, Vec2::Zero());
}

TEST(Object, UprightPoseSymmetry) {
  const auto obj = gear1();
  const auto g = contact_geometry(obj, {0.5 * M_PI, 0.005});
  EXPECT_NEAR(g.A.x(), -0.020, 1e-12);
  EXPECT_NEAR(g.A.y(), 0.0, 1e-12);
  EXPECT_NEAR(g.C.x(), -0.010, 1e-12);
  EXPECT_NEAR(g.C.y(), 0.042, 1e-12);
}

TEST(Object, GravityArmRootMatchesAspectAngle) {
  const auto obj = gear1();
  // root-find C_x(theta) = 0 by bisection
  const auto cx = [&](double th) { return contact_geometry(obj, {th, 0.0}).C.x(); };
  double lo = 0.0, hi = 0.5 * M_PI;
  ASSERT_GT(cx(lo), 0.0);
  ASSERT_LT(cx(hi), 0.0);
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cx(mid) > 0.0 ? lo : hi) = mid;
  }
  const double root = 0.5 * (lo + hi);
  EXPECT_NEAR(root, std::atan(0.084 / 0.020), 1e-10);
  EXPECT_NEAR(root, 1.3371, 2e-4);
}

TEST(Object, RigidDistancesHoldAcrossPoses) {
  const auto obj = gear1();
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uth(0.0, 0.5 * M_PI);
  std::uniform_real_distribution<double> upy(0.0, 0.020);
  for (int i = 0; i < 200; ++i) {
    const double th = uth(rng);
    const double py = upy(rng);
    const auto g = contact_geometry(obj, {th, py});
    EXPECT_NEAR((g.A - g.B).norm(), 0.020, 1e-14);
    const Vec2 far_corner = 0.084 * Vec2(std::cos(th), std::sin(th));
    EXPECT_NEAR((g.P - far_corner).norm(), py, 1e-14);
    EXPECT_GE(g.A.y(), -1e-15);
  }
}

TEST(Object, GeometryIsContinuous) {
  const auto obj = gear1();
  const double h = 1e-8;
  for (double th : {0.1, 0.7, 1.3}) {
    const auto a = contact_geometry(obj, {th, 0.005});
    const auto b = contact_geometry(obj, {th + h, 0.005 + h});
    EXPECT_LT((a.A - b.A).norm() + (a.C - b.C).norm() + (a.P - b.P).norm(), 1e-6);
  }
}

TEST(Object, SteppedCentroidMatchesPolygonOracle) {
  const auto obj = peg1();
  const std::vector<Vec2> outline = {{0.0, 0.0},    {0.076, 0.0},  {0.076, 0.028},
                                     {0.036, 0.028}, {0.036, 0.020}, {0.0, 0.020}};
  const Vec2 oracle = polygon_centroid(outline);
  const Vec2 c = obj.profile.centroid();
  EXPECT_NEAR(c.x(), oracle.x(), 1e-12);
  EXPECT_NEAR(c.y(), oracle.y(), 1e-12);
  EXPECT_DOUBLE_EQ(obj.profile.length(), 0.076);
  EXPECT_DOUBLE_EQ(obj.profile.wall_face_extent(), 0.020);
  EXPECT_DOUBLE_EQ(obj.profile.push_face_extent(), 0.028);
}

TEST(Object, InvalidPoseRejected) {
  const auto obj = gear1();
  EXPECT_THROW(contact_geometry(obj, {-0.2, 0.005}), std::domain_error);
  EXPECT_THROW(contact_geometry(obj, {2.0, 0.005}), std::domain_error);
  EXPECT_THROW(contact_geometry(obj, {0.3, 0.05}), std::domain_error);
}

TEST(Object, InvalidParamsRejected) {
  auto obj = gear1();
  obj.m = -1.0;
  EXPECT_THROW(obj.validate(), std::invalid_argument);
  obj = gear1();
  obj.f_u = 0.0;
  EXPECT_THROW(obj.validate(), std::invalid_argument);
  EXPECT_NO_THROW(gear1().validate());
}

TEST(ComOffset, AxisAndZeroCases) {
  EXPECT_DOUBLE_EQ(com_offset_world(0.01, 0.0, 0.0), 0.01);
  EXPECT_DOUBLE_EQ(com_offset_world(0.0, 0.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(com_offset_world(0.0, 0.0, 1.2), 0.0);
}

TEST(ComOffset, MatchesRotatedVectorProjection) {
  const double dx = 0.003, dy = 0.004, th = M_PI / 6.0;
  const double expected = 0.005 * std::cos(th + std::atan2(dy, dx));
  EXPECT_NEAR(com_offset_world(dx, dy, th), expected, 1e-15);
  // independent route: rotate the body offset and take the x component
  const Vec2 world = rotation2d(th) * Vec2(dx, dy);
  EXPECT_NEAR(com_offset_world(dx, dy, th), world.x(), 1e-15);
}
