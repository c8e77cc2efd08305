#include "pivotal/mechanics.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace pivotal;
using pivotal::testing::gear1;
using pivotal::testing::peg1;
using pivotal::testing::sample_consistent_point;

TEST(Mechanics, EmptySystemBalances) {
  const auto obj = gear1();
  const auto g = contact_geometry(obj, {0.4, 0.005});
  const ContactForces F{};
  const Eigen::Vector3d res = equilibrium_residual(g, F, 0.0, 0.0, obj.g_mag);
  EXPECT_EQ(res.norm(), 0.0);
}

TEST(Mechanics, ClosedFormRoundTripAtMidPose) {
  const auto obj = gear1();
  const auto g = contact_geometry(obj, {0.25 * M_PI, 0.005});
  const ConsistentPoint pt = control_for_wall_normal(g, obj, obj.m, 0.0, 0.8);
  ASSERT_GE(pt.f_nB, 0.0);
  const ContactForces F = solve_contact_forces(g, pt.u, obj, obj.m, 0.0);
  EXPECT_NEAR(F.f_nA, 0.8, 1e-12);
  EXPECT_NEAR(F.f_nB, pt.f_nB, 1e-12);
  const Eigen::Vector3d res = equilibrium_residual(g, F, obj.m, 0.0, obj.g_mag);
  EXPECT_LT(res.lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LT(std::abs(consistency_residual(F)), 1e-12);
}

TEST(Mechanics, RoundTripOnTenThousandConsistentPoints) {
  std::mt19937 rng(11);
  for (const auto& obj : {gear1(), peg1()}) {
    for (int i = 0; i < 5000; ++i) {
      const auto pt = sample_consistent_point(rng, obj);
      const auto g = contact_geometry(obj, pt.pose);
      const ContactForces F = solve_contact_forces(g, pt.u, obj, obj.m, 0.0);
      const Eigen::Vector3d res = equilibrium_residual(g, F, obj.m, 0.0, obj.g_mag);
      ASSERT_LT(res.lpNorm<Eigen::Infinity>(), 1e-10);
      ASSERT_GE(F.f_nA, -1e-12);
      ASSERT_GE(F.f_nB, -1e-12);
    }
  }
}

TEST(Mechanics, SolveIsAffineInEachArgument) {
  // Affine in (m_eff, f_nP, f_tP) at fixed r, and in (r, f_nP, f_tP) at
  // fixed m_eff; the load arguments couple bilinearly so they are varied
  // one at a time.
  const auto obj = gear1();
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  const auto g = contact_geometry(obj, {0.9, 0.012});
  const auto mid = [](const ContactForces& fa, const ContactForces& fb,
                      const ContactForces& fm) {
    EXPECT_NEAR(fm.f_nA, 0.5 * (fa.f_nA + fb.f_nA), 1e-12);
    EXPECT_NEAR(fm.f_nB, 0.5 * (fa.f_nB + fb.f_nB), 1e-12);
    EXPECT_NEAR(fm.f_tA, 0.5 * (fa.f_tA + fb.f_tA), 1e-12);
    EXPECT_NEAR(fm.f_tB, 0.5 * (fa.f_tB + fb.f_tB), 1e-12);
  };
  for (int i = 0; i < 100; ++i) {
    const Control u0{un(rng), un(rng)}, u1{un(rng), un(rng)};
    const Control um{0.5 * (u0.f_nP + u1.f_nP), 0.5 * (u0.f_tP + u1.f_tP)};
    {
      const double m0 = 0.1 + 0.1 * un(rng), m1 = 0.1 + 0.1 * un(rng);
      const double r = 0.01 * un(rng);
      mid(solve_contact_forces(g, u0, obj, m0, r), solve_contact_forces(g, u1, obj, m1, r),
          solve_contact_forces(g, um, obj, 0.5 * (m0 + m1), r));
    }
    {
      const double r0 = 0.01 * un(rng), r1 = 0.01 * un(rng);
      mid(solve_contact_forces(g, u0, obj, obj.m, r0),
          solve_contact_forces(g, u1, obj, obj.m, r1),
          solve_contact_forces(g, um, obj, obj.m, 0.5 * (r0 + r1)));
    }
  }
}

TEST(Mechanics, WallNormalSlopeInAddedWeight) {
  const auto obj = gear1();
  const auto g = contact_geometry(obj, {0.6, 0.01});
  const Control u = control_for_wall_normal(g, obj, obj.m, 0.0, 1.0).u;
  const double D = wall_denominator(g, obj.mu_A);
  const double eps = 1e-4;
  const auto np = mass_perturbed_normals(g, u, obj, eps);
  const auto nm = mass_perturbed_normals(g, u, obj, -eps);
  const double slope_fd = (np.f_nA - nm.f_nA) / (2 * eps);
  EXPECT_NEAR(slope_fd, g.C.x() / D, 1e-9);
  const double slope_b = (np.f_nB - nm.f_nB) / (2 * eps);
  EXPECT_NEAR(slope_b, 1.0 / (1.0 + obj.mu_A * obj.mu_B), 1e-9);
}

TEST(Mechanics, FrictionConeSlacks) {
  const auto obj = gear1();
  ContactForces F{};
  auto s = friction_cone_residuals(F, obj);
  EXPECT_EQ(s.minCoeff(), 0.0);

  F.f_nA = 1.0;
  F.f_tA = 0.3;  // exactly on the cone edge
  s = friction_cone_residuals(F, obj);
  EXPECT_NEAR(s(0), 0.0, 1e-15);

  F.f_tA = 0.31;
  s = friction_cone_residuals(F, obj);
  EXPECT_LT(s(0), 0.0);
}

TEST(Mechanics, SlipEqualities) {
  const auto obj = gear1();
  ContactForces F{};
  F.f_nA = 2.0;
  F.f_tA = 0.6;
  F.f_nB = 1.0;
  F.f_tB = -0.3;
  const Eigen::Vector2d r = slip_equalities(F, obj);
  EXPECT_DOUBLE_EQ(r(0), 0.0);
  EXPECT_DOUBLE_EQ(r(1), 0.0);

  F.f_tA = 0.7;
  EXPECT_GT(std::abs(slip_equalities(F, obj)(0)), 0.09);
}

TEST(Mechanics, ComplementarityPairs) {
  const auto obj = gear1();
  ContactForces F{};
  F.f_nP = 1.0;
  F.f_tP = 0.2;  // strict interior
  SlipSlacks s{};  // sticking
  auto pairs = slip_complementarity_residuals(F, s, obj);
  for (const auto& [a, b] : pairs) EXPECT_EQ(a * b, 0.0);

  // slipping contact demands the cone edge for a zero product
  s.pdot_y_plus = 0.01;
  F.f_tP = obj.mu_P * F.f_nP;
  pairs = slip_complementarity_residuals(F, s, obj);
  EXPECT_NEAR(pairs[4].first * pairs[4].second, 0.0, 1e-15);

  // a relaxed solution keeps every product below the relaxation level
  F.f_tP = obj.mu_P * F.f_nP - 1e-2;
  pairs = slip_complementarity_residuals(F, s, obj);
  for (const auto& [a, b] : pairs) EXPECT_LE(a * b, 1e-4 + 1e-12);
}

TEST(Mechanics, SingularWallConfigurationRejected) {
  const auto obj = gear1();
  ContactGeometry g = contact_geometry(obj, {0.5, 0.01});
  g.A = Vec2(1.0, obj.mu_A);  // forces mu_A*A_x - A_y = 0
  EXPECT_THROW(solve_contact_forces(g, Control{0.1, 0.1}, obj, obj.m, 0.0),
               SingularConfigError);
}

TEST(Mechanics, LossOfContactBoundary) {
  const auto obj = gear1();
  const auto g = contact_geometry(obj, {0.7, 0.008});
  // pick the control so the wall normal lands exactly at zero
  const Control u = control_for_wall_normal(g, obj, obj.m, 0.0, 0.0).u;
  const ContactForces F = solve_contact_forces(g, u, obj, obj.m, 0.0);
  EXPECT_NEAR(F.f_nA, 0.0, 1e-12);
}
