#include "pivotal/ocp.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "pivotal/robust.hpp"
#include "test_support.hpp"

using namespace pivotal;
using pivotal::testing::gear1;
using pivotal::testing::peg1;

namespace {

OcpSpec gear1_spec() {
  OcpSpec s;
  s.N = 60;
  s.x_s = {0.0, 0.020 / 4.0};
  s.theta_goal = 0.5 * M_PI;
  return s;
}

OcpSpec peg1_spec() {
  OcpSpec s;
  s.N = 15;
  s.x_s = {0.0, 0.028 / 4.0};
  s.theta_goal = 0.5 * M_PI;
  return s;
}

// gradient of the Lagrangian, for finite-difference Hessian validation
VectorXd lagrangian_grad(const NlpProblem& p, const VectorXd& z, const VectorXd& ye,
                         const VectorXd& yi) {
  VectorXd g(p.num_vars);
  p.eval_objective(z, &g);
  if (p.num_eq > 0) {
    VectorXd vals(p.eq_jac_pattern.size());
    p.eval_eq_jac(z, vals);
    for (std::size_t k = 0; k < p.eq_jac_pattern.size(); ++k)
      g(p.eq_jac_pattern[k].second) += vals(k) * ye(p.eq_jac_pattern[k].first);
  }
  if (p.num_ineq > 0) {
    VectorXd vals(p.ineq_jac_pattern.size());
    p.eval_ineq_jac(z, vals);
    for (std::size_t k = 0; k < p.ineq_jac_pattern.size(); ++k)
      g(p.ineq_jac_pattern[k].second) += vals(k) * yi(p.ineq_jac_pattern[k].first);
  }
  return g;
}

double hessian_fd_error(const NlpProblem& p, const VectorXd& z, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> un(-1.0, 1.0);
  VectorXd ye(p.num_eq), yi(p.num_ineq);
  for (int i = 0; i < p.num_eq; ++i) ye(i) = un(rng);
  for (int i = 0; i < p.num_ineq; ++i) yi(i) = un(rng);

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p.num_vars, p.num_vars);
  VectorXd hv(p.hess_pattern.size());
  p.eval_hess(z, 1.0, ye, yi, hv);
  for (std::size_t k = 0; k < p.hess_pattern.size(); ++k) {
    const auto [r, c] = p.hess_pattern[k];
    H(r, c) += hv(k);
    if (r != c) H(c, r) += hv(k);
  }

  double worst = 0.0;
  const double h = 1e-6;
  VectorXd zp = z, zm = z;
  for (int c = 0; c < p.num_vars; ++c) {
    zp(c) += h;
    zm(c) -= h;
    const VectorXd gp = lagrangian_grad(p, zp, ye, yi);
    const VectorXd gm = lagrangian_grad(p, zm, ye, yi);
    for (int r = 0; r < p.num_vars; ++r) {
      const double fd = (gp(r) - gm(r)) / (2 * h);
      worst = std::max(worst,
                       std::abs(fd - H(r, c)) / std::max({1.0, std::abs(fd), std::abs(H(r, c))}));
    }
    zp(c) = z(c);
    zm(c) = z(c);
  }
  return worst;
}

}  // namespace

TEST(OcpBuildTest, RejectsInconsistentSpec) {
  auto spec = gear1_spec();
  spec.x_s.p_y = 0.5;  // outside the face
  EXPECT_THROW(build_nominal(gear1(), spec), std::invalid_argument);
  spec = gear1_spec();
  spec.N = 1;
  EXPECT_THROW(build_nominal(gear1(), spec), std::invalid_argument);
  spec = gear1_spec();
  spec.R = {0.0, 0.01};
  EXPECT_THROW(build_nominal(gear1(), spec), std::invalid_argument);
}

TEST(OcpBuildTest, NominalDerivativesMatchFiniteDifferences) {
  auto spec = gear1_spec();
  spec.N = 6;
  const auto build = build_nominal(gear1(), spec);
  EXPECT_LT(InteriorPointSolver::check_derivatives(build.problem, build.problem.x0), 1e-5);
  EXPECT_LT(hessian_fd_error(build.problem, build.problem.x0, 77), 1e-5);
}

TEST(OcpBuildTest, RobustDerivativesMatchFiniteDifferences) {
  auto spec = gear1_spec();
  spec.N = 4;
  for (auto kind : {UncertaintyKind::Mass, UncertaintyKind::Com}) {
    const auto build = build_robust(gear1(), spec, kind);
    EXPECT_LT(InteriorPointSolver::check_derivatives(build.problem, build.problem.x0), 1e-5)
        << (kind == UncertaintyKind::Mass ? "mass" : "com");
    EXPECT_LT(hessian_fd_error(build.problem, build.problem.x0, 99), 1e-5);
  }
}

TEST(OcpSolveTest, RestPoseDegenerateInstanceIsFree) {
  // the pose where zero control is consistent: wall lean in balance
  const auto obj = gear1();
  const auto resid = [&](double th) {
    const auto g = contact_geometry(obj, {th, 0.005});
    const ContactForces F = solve_contact_forces(g, Control{}, obj, obj.m, 0.0);
    return consistency_residual(F);
  };
  double lo = 1.34, hi = 1.5;
  ASSERT_LT(resid(lo) * resid(hi), 0.0);
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (resid(lo) * resid(mid) <= 0.0 ? hi : lo) = mid;
  }
  const double theta_rest = 0.5 * (lo + hi);

  OcpSpec spec;
  spec.N = 2;
  spec.x_s = {theta_rest, 0.005};
  spec.theta_goal = theta_rest;
  const auto build = build_nominal(obj, spec);
  const auto rep = InteriorPointSolver().solve(build.problem);
  ASSERT_TRUE(rep.converged()) << rep.message;
  // stationary pose at the goal: state cost zero, control cost near zero
  EXPECT_LT(rep.objective, 1e-6);
  const auto traj = extract_trajectory(build, rep);
  for (int k = 0; k <= spec.N; ++k) EXPECT_NEAR(traj.theta[k], theta_rest, 1e-6);
}

TEST(OcpSolveTest, NominalGearConverges) {
  const auto obj = gear1();
  const auto spec = gear1_spec();
  const auto build = build_nominal(obj, spec);
  const auto rep = InteriorPointSolver().solve(build.problem);
  ASSERT_TRUE(rep.converged()) << rep.message;
  EXPECT_LT(rep.eq_residual, 1e-6);
  EXPECT_LT(rep.comp_residual, 1e-6);

  const auto traj = extract_trajectory(build, rep);
  EXPECT_DOUBLE_EQ(traj.theta.front(), 0.0);
  EXPECT_NEAR(traj.theta.back(), 0.5 * M_PI, 1e-9);
  EXPECT_EQ(traj.num_steps(), 60);

  // objective recomputed from the trajectory matches the solver value
  EXPECT_NEAR(nominal_objective(traj, spec), rep.objective, 1e-8);

  // margins exist at every step of an accepted trajectory
  const auto prof = margin_profile(traj, obj, UncertaintyKind::Mass);
  for (const auto& st : prof.steps) EXPECT_TRUE(st.feasible);
}

TEST(OcpSolveTest, NominalPegConverges) {
  const auto obj = peg1();
  const auto spec = peg1_spec();
  const auto build = build_nominal(obj, spec);
  const auto rep = InteriorPointSolver().solve(build.problem);
  ASSERT_TRUE(rep.converged()) << rep.message;
  const auto traj = extract_trajectory(build, rep);
  EXPECT_NEAR(traj.theta.back(), 0.5 * M_PI, 1e-9);
}

TEST(OcpSolveTest, CorruptedSolutionRejected) {
  const auto obj = gear1();
  auto spec = gear1_spec();
  spec.N = 8;
  const auto build = build_nominal(obj, spec);
  auto rep = InteriorPointSolver().solve(build.problem);
  ASSERT_TRUE(rep.converged()) << rep.message;
  rep.solution(build.data->sbase(3) + 2) = -0.5;  // negative wall normal
  EXPECT_THROW(extract_trajectory(build, rep), RejectedSolutionError);
}
