#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pivotal/object.hpp"

namespace pivotal {

/// Thrown when the wall-contact denominator mu_A*A_x - A_y degenerates.
struct SingularConfigError : std::domain_error {
  using std::domain_error::domain_error;
};

constexpr double kSingularTol = 1e-10;

/// Manipulator input: push normal into the far end face plus friction
/// along it, both in the face frame.
struct Control {
  double f_nP{0.0};
  double f_tP{0.0};
};

/// Contact force set at one step. A and B components are world frame,
/// (f_nP, f_tP) live in the push-face frame and (f_x, f_y) is their
/// world image.
struct ContactForces {
  double f_nA{0.0};
  double f_tA{0.0};
  double f_nB{0.0};
  double f_tB{0.0};
  double f_nP{0.0};
  double f_tP{0.0};
  double f_x{0.0};
  double f_y{0.0};
};

/// Per-step slip displacements split into nonnegative directions.
struct SlipSlacks {
  double pdot_A_plus{0.0};
  double pdot_A_minus{0.0};
  double pdot_B_plus{0.0};
  double pdot_B_minus{0.0};
  double pdot_y_plus{0.0};
  double pdot_y_minus{0.0};
};

/// World image of the push-face force. The face normal points into the
/// body (-x in body axes), the tangent along +y, so the body-frame force
/// vector is (-f_nP, f_tP).
inline Vec2 push_force_world(const Mat2& R, const Control& u) {
  return R * Vec2(-u.f_nP, u.f_tP);
}

/// Denominator shared by every wall-side force expression.
inline double wall_denominator(const ContactGeometry& g, double mu_A) {
  return mu_A * g.A.x() - g.A.y();
}

/// Force-x, force-y, and moment-about-B residuals with gravity m_eff*g_mag
/// acting downward at horizontal CoM position C_x + r.
inline Eigen::Vector3d equilibrium_residual(const ContactGeometry& g, const ContactForces& F,
                                            double m_eff, double r, double g_mag) {
  const double W = m_eff * g_mag;
  Eigen::Vector3d res;
  res(0) = F.f_nA + F.f_tB + F.f_x;
  res(1) = F.f_tA + F.f_nB - W + F.f_y;
  res(2) = g.A.x() * F.f_tA - g.A.y() * F.f_nA - (g.C.x() + r) * W + g.P.x() * F.f_y -
           g.P.y() * F.f_x;
  return res;
}

/// Cone slack values, all nonnegative iff the force set is admissible:
/// mu_A*f_nA - |f_tA|, mu_B*f_nB - |f_tB|, mu_P*f_nP - |f_tP|, f_nA, f_nB.
inline Eigen::Matrix<double, 5, 1> friction_cone_residuals(const ContactForces& F,
                                                           const ObjectParams& obj) {
  Eigen::Matrix<double, 5, 1> s;
  s(0) = obj.mu_A * F.f_nA - std::abs(F.f_tA);
  s(1) = obj.mu_B * F.f_nB - std::abs(F.f_tB);
  s(2) = obj.mu_P * F.f_nP - std::abs(F.f_tP);
  s(3) = F.f_nA;
  s(4) = F.f_nB;
  return s;
}

/// Residuals of the slipping-contact equalities at A (sliding down the
/// wall) and B (sliding away along the floor).
inline Eigen::Vector2d slip_equalities(const ContactForces& F, const ObjectParams& obj) {
  return {F.f_tA - obj.mu_A * F.f_nA, F.f_tB + obj.mu_B * F.f_nB};
}

/// Complementarity pairs (slip slack, cone slack); each pair must satisfy
/// a >= 0, b >= 0, a*b = 0 at an exact solution.
inline std::vector<std::pair<double, double>> slip_complementarity_residuals(
    const ContactForces& F, const SlipSlacks& s, const ObjectParams& obj) {
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(6);
  pairs.emplace_back(s.pdot_A_plus, obj.mu_A * F.f_nA - F.f_tA);
  pairs.emplace_back(s.pdot_A_minus, obj.mu_A * F.f_nA + F.f_tA);
  pairs.emplace_back(s.pdot_B_plus, obj.mu_B * F.f_nB - F.f_tB);
  pairs.emplace_back(s.pdot_B_minus, obj.mu_B * F.f_nB + F.f_tB);
  pairs.emplace_back(s.pdot_y_plus, obj.mu_P * F.f_nP - F.f_tP);
  pairs.emplace_back(s.pdot_y_minus, obj.mu_P * F.f_nP + F.f_tP);
  return pairs;
}

/// Closed-form contact forces with the slipping equalities substituted
/// into the statics. The wall normal comes from the moment balance, the
/// floor normal from the force balance pair; on the quasi-static manifold
/// (zero consistency residual) the full equilibrium holds exactly.
inline ContactForces solve_contact_forces(const ContactGeometry& g, const Control& u,
                                          const ObjectParams& obj, double m_eff, double r) {
  const double D = wall_denominator(g, obj.mu_A);
  if (std::abs(D) < kSingularTol)
    throw SingularConfigError("solve_contact_forces: singular wall configuration");

  const Vec2 f = push_force_world(g.R, u);
  const double W = m_eff * obj.g_mag;

  ContactForces F;
  F.f_nP = u.f_nP;
  F.f_tP = u.f_tP;
  F.f_x = f.x();
  F.f_y = f.y();
  F.f_nA = ((g.C.x() + r) * W - g.P.x() * f.y() + g.P.y() * f.x()) / D;
  F.f_tA = obj.mu_A * F.f_nA;
  F.f_nB = (W - f.y() + obj.mu_A * f.x()) / (1.0 + obj.mu_A * obj.mu_B);
  F.f_tB = -obj.mu_B * F.f_nB;
  return F;
}

/// Residual of the horizontal force balance given the two closed-form
/// normals; zero exactly when (pose, control, load) is quasi-statically
/// consistent. The vertical residual is mu_A times this one.
inline double consistency_residual(const ContactForces& F) {
  return F.f_nA + F.f_tB + F.f_x;
}

struct NormalPair {
  double f_nA{0.0};
  double f_nB{0.0};
};

/// Wall and floor normals under a weight perturbation eps (N), solved
/// from the moment equation and the force-balance pair respectively.
inline NormalPair mass_perturbed_normals(const ContactGeometry& g, const Control& u,
                                         const ObjectParams& obj, double eps) {
  const double D = wall_denominator(g, obj.mu_A);
  if (std::abs(D) < kSingularTol)
    throw SingularConfigError("mass_perturbed_normals: singular wall configuration");
  const Vec2 f = push_force_world(g.R, u);
  const double W = obj.weight() + eps;

  NormalPair n;
  n.f_nA = (g.C.x() * W - g.P.x() * f.y() + g.P.y() * f.x()) / D;

  // Force balance with both slip equalities substituted, solved as a
  // 2x2 system in (wall normal, floor normal); only the floor normal is
  // retained, the wall side is governed by the moment equation above.
  Eigen::Matrix2d M;
  M << 1.0, -obj.mu_B, obj.mu_A, 1.0;
  const Eigen::Vector2d rhs(-f.x(), W - f.y());
  const Eigen::Vector2d sol = M.partialPivLu().solve(rhs);
  n.f_nB = sol(1);
  return n;
}

/// Wall and floor normals under a horizontal CoM shift r (m). The wall
/// normal follows from the moment equation; the floor normal couples to
/// the shift through the summed force balance and the same moment.
inline NormalPair com_perturbed_normals(const ContactGeometry& g, const Control& u,
                                        const ObjectParams& obj, double r) {
  const double D = wall_denominator(g, obj.mu_A);
  if (std::abs(D) < kSingularTol)
    throw SingularConfigError("com_perturbed_normals: singular wall configuration");
  if (std::abs(1.0 - obj.mu_B) < kSingularTol)
    throw SingularConfigError("com_perturbed_normals: floor friction of one is degenerate");
  const Vec2 f = push_force_world(g.R, u);
  const double W = obj.weight();

  Eigen::Matrix2d M;
  M << 1.0 + obj.mu_A, 1.0 - obj.mu_B,  // summed force balance
      D, 0.0;                           // moment about B
  const Eigen::Vector2d rhs(W - f.x() - f.y(),
                            (g.C.x() + r) * W - g.P.x() * f.y() + g.P.y() * f.x());
  const Eigen::Vector2d sol = M.partialPivLu().solve(rhs);
  return {sol(0), sol(1)};
}

struct ConsistentPoint {
  Control u;
  double f_nA{0.0};
  double f_nB{0.0};
};

/// Control on the quasi-static manifold realizing a prescribed wall
/// normal. The manifold has one force degree of freedom per pose, so the
/// floor normal follows from the solve and is returned alongside. Throws
/// when the pose makes the 3x3 statics system singular.
inline ConsistentPoint control_for_wall_normal(const ContactGeometry& g,
                                               const ObjectParams& obj, double m_eff,
                                               double r, double f_nA) {
  const double D = wall_denominator(g, obj.mu_A);
  if (std::abs(D) < kSingularTol)
    throw SingularConfigError("control_for_wall_normal: singular wall configuration");
  const double W = m_eff * obj.g_mag;
  const Vec2 P_body = g.R.transpose() * g.P;  // (length, p_y)
  const double c = g.R(0, 0);
  const double s = g.R(1, 0);

  // Unknowns (f_nP, f_tP, f_nB); rows: force-x, force-y, moment-about-B
  // with f_tA = mu_A*f_nA and f_tB = -mu_B*f_nB substituted.
  Eigen::Matrix3d M;
  M << -c, -s, -obj.mu_B,
      -s, c, 1.0,
      P_body.y(), P_body.x(), 0.0;
  const Eigen::Vector3d rhs(-f_nA, W - obj.mu_A * f_nA, (g.C.x() + r) * W - f_nA * D);
  if (std::abs(M.determinant()) < 1e-9)
    throw SingularConfigError("control_for_wall_normal: wall-normal target unreachable");
  const Eigen::Vector3d sol = M.partialPivLu().solve(rhs);
  return {{sol(0), sol(1)}, f_nA, sol(2)};
}

}  // namespace pivotal
