#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pivotal/mechanics.hpp"
#include "pivotal/object.hpp"
#include "pivotal/trajectory.hpp"

namespace pivotal {

enum class UncertaintyKind { Mass, Com };
enum class Direction { Plus, Minus };

/// One linear restriction a*xi <= b on the signed scalar uncertainty.
struct MarginRow {
  enum class Source { ContactA, ContactB, NonNeg, Cap };
  double a{0.0};
  double b{0.0};
  Source source{Source::ContactA};
};

/// Contact-loss restrictions at one (pose, control) point, before the
/// nonnegativity and cap rows are appended by the LP.
struct MarginBounds {
  UncertaintyKind kind{UncertaintyKind::Mass};
  std::vector<MarginRow> rows;

  const MarginRow* row(MarginRow::Source s) const {
    for (const auto& r : rows)
      if (r.source == s) return &r;
    return nullptr;
  }
};

constexpr double kRowDropTol = 1e-10;

/// Restrictions on the extra weight eps (N). The wall row direction
/// follows the sign of the gravity moment arm C_x and disappears when the
/// arm vanishes; the floor row always caps the lighter side.
inline MarginBounds mass_margin_bounds(const ContactGeometry& g, const Control& u,
                                       const ObjectParams& obj) {
  const double D = wall_denominator(g, obj.mu_A);
  if (std::abs(D) < kSingularTol)
    throw SingularConfigError("mass_margin_bounds: singular wall configuration");
  const ContactForces F = solve_contact_forces(g, u, obj, obj.m, 0.0);

  MarginBounds mb;
  mb.kind = UncertaintyKind::Mass;
  if (std::abs(g.C.x()) >= kRowDropTol) {
    const double sgn = D < 0.0 ? 1.0 : -1.0;
    mb.rows.push_back({sgn * g.C.x(), std::abs(D) * F.f_nA, MarginRow::Source::ContactA});
  }
  mb.rows.push_back({-1.0, (1.0 + obj.mu_A * obj.mu_B) * F.f_nB, MarginRow::Source::ContactB});
  return mb;
}

/// Restrictions on the horizontal CoM shift r (m). The wall row caps the
/// shift toward the floor contact, the floor row the shift toward the
/// wall.
inline MarginBounds com_margin_bounds(const ContactGeometry& g, const Control& u,
                                      const ObjectParams& obj) {
  const double D = wall_denominator(g, obj.mu_A);
  if (std::abs(D) < kSingularTol)
    throw SingularConfigError("com_margin_bounds: singular wall configuration");
  if (std::abs(1.0 - obj.mu_B) < kSingularTol)
    throw SingularConfigError("com_margin_bounds: floor friction of one is degenerate");
  const ContactForces F = solve_contact_forces(g, u, obj, obj.m, 0.0);
  const double W = obj.weight();

  MarginBounds mb;
  mb.kind = UncertaintyKind::Com;
  {
    const double sgn = D < 0.0 ? 1.0 : -1.0;
    mb.rows.push_back({sgn * W, std::abs(D) * F.f_nA, MarginRow::Source::ContactA});
  }
  {
    // Floor normal under the shift, from the summed force balance with
    // the moment-side wall normal substituted.
    const double numer0 = W - F.f_x - F.f_y - (1.0 + obj.mu_A) * F.f_nA;
    const double sgn = (1.0 - obj.mu_B) > 0.0 ? 1.0 : -1.0;
    mb.rows.push_back(
        {sgn * (1.0 + obj.mu_A) * W / D, sgn * numer0, MarginRow::Source::ContactB});
  }
  return mb;
}

/// Scalar LP solution for one direction.
struct MarginLpResult {
  double xi_star{0.0};
  bool feasible{true};
  MarginRow::Source active{MarginRow::Source::Cap};
  // Multipliers aligned with [contact-A, contact-B, xi >= 0, cap]; a
  // vertex solution with all weight on the active row.
  std::array<double, 4> multipliers{0.0, 0.0, 0.0, 0.0};
};

inline int margin_multiplier_slot(MarginRow::Source s) {
  switch (s) {
    case MarginRow::Source::ContactA: return 0;
    case MarginRow::Source::ContactB: return 1;
    case MarginRow::Source::NonNeg: return 2;
    case MarginRow::Source::Cap: return 3;
  }
  return 3;
}

/// Largest nonnegative uncertainty along one direction subject to the
/// contact rows and the cap: max xi s.t. a*xi <= b (rows sign-flipped for
/// the minus direction), 0 <= xi <= cap. Closed form over the rows with
/// positive direction-adjusted coefficient.
inline MarginLpResult lp_margin(const MarginBounds& bounds, Direction dir, double cap) {
  if (!(cap > 0.0)) throw std::invalid_argument("lp_margin: cap must be positive");
  const double flip = dir == Direction::Plus ? 1.0 : -1.0;

  MarginLpResult res;
  for (const auto& row : bounds.rows) {
    if (row.b < -kRowDropTol) {  // violated already at xi = 0
      res.xi_star = 0.0;
      res.feasible = false;
      res.active = row.source;
      return res;
    }
  }

  res.xi_star = cap;
  res.active = MarginRow::Source::Cap;
  double active_coeff = 1.0;
  for (const auto& row : bounds.rows) {
    const double a = flip * row.a;
    if (a <= kRowDropTol) continue;  // never binds for xi >= 0
    const double bound = std::max(row.b, 0.0) / a;
    // Prefer the wall row on ties so reported binding contacts are stable.
    if (bound < res.xi_star - 1e-15 ||
        (bound < res.xi_star + 1e-15 && row.source == MarginRow::Source::ContactA &&
         res.active != MarginRow::Source::ContactA)) {
      res.xi_star = bound;
      res.active = row.source;
      active_coeff = a;
    }
  }
  res.xi_star = std::clamp(res.xi_star, 0.0, cap);
  res.multipliers[margin_multiplier_slot(res.active)] = 1.0 / active_coeff;
  return res;
}

inline double default_margin_cap(const ObjectParams& obj, UncertaintyKind kind) {
  return kind == UncertaintyKind::Mass ? 10.0 * obj.weight() : 10.0 * obj.profile.length();
}

/// Bisection reference for lp_margin: largest xi in [0, cap] keeping both
/// perturbed normal forces nonnegative, to absolute tolerance 1e-9.
inline MarginLpResult margin_oracle(const ContactGeometry& g, const Control& u,
                                    const ObjectParams& obj, UncertaintyKind kind,
                                    Direction dir, double cap, double tol = 1e-9) {
  const double flip = dir == Direction::Plus ? 1.0 : -1.0;
  const auto feasible = [&](double xi) {
    const NormalPair n = kind == UncertaintyKind::Mass
                             ? mass_perturbed_normals(g, u, obj, flip * xi)
                             : com_perturbed_normals(g, u, obj, flip * xi);
    return n.f_nA >= 0.0 && n.f_nB >= 0.0;
  };

  MarginLpResult res;
  if (!feasible(0.0)) {
    res.feasible = false;
    res.xi_star = 0.0;
    return res;
  }
  if (feasible(cap)) {
    res.xi_star = cap;
    return res;
  }
  double lo = 0.0, hi = cap;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  res.xi_star = lo;
  return res;
}

/// Per-step margin data for one trajectory.
struct MarginStep {
  double bound_A{std::numeric_limits<double>::quiet_NaN()};  // signed wall-loss crossing
  double bound_B{std::numeric_limits<double>::quiet_NaN()};  // signed floor-loss crossing
  double xi_plus{0.0};
  double xi_minus{0.0};
  bool feasible{true};
  bool cap_plus{false};
  bool cap_minus{false};
};

struct MarginProfile {
  UncertaintyKind kind{UncertaintyKind::Mass};
  double cap{0.0};
  std::vector<MarginStep> steps;
  double worst_plus{0.0};
  double worst_minus{0.0};
  int argmin_plus{-1};
  int argmin_minus{-1};
  bool cap_active{false};
};

inline MarginStep margin_step(const ContactGeometry& g, const Control& u,
                              const ObjectParams& obj, UncertaintyKind kind, double cap) {
  const MarginBounds mb = kind == UncertaintyKind::Mass ? mass_margin_bounds(g, u, obj)
                                                        : com_margin_bounds(g, u, obj);
  MarginStep st;
  if (const MarginRow* rA = mb.row(MarginRow::Source::ContactA);
      rA && std::abs(rA->a) > kRowDropTol)
    st.bound_A = rA->b / rA->a;
  if (const MarginRow* rB = mb.row(MarginRow::Source::ContactB);
      rB && std::abs(rB->a) > kRowDropTol)
    st.bound_B = rB->b / rB->a;

  const MarginLpResult plus = lp_margin(mb, Direction::Plus, cap);
  const MarginLpResult minus = lp_margin(mb, Direction::Minus, cap);
  st.xi_plus = plus.xi_star;
  st.xi_minus = minus.xi_star;
  st.feasible = plus.feasible && minus.feasible;
  st.cap_plus = plus.active == MarginRow::Source::Cap;
  st.cap_minus = minus.active == MarginRow::Source::Cap;
  return st;
}

/// Margins along a trajectory plus the worst-case summary over steps.
inline MarginProfile margin_profile(const Trajectory& traj, const ObjectParams& obj,
                                    UncertaintyKind kind, double cap = 0.0) {
  MarginProfile prof;
  prof.kind = kind;
  prof.cap = cap > 0.0 ? cap : default_margin_cap(obj, kind);
  prof.steps.reserve(traj.num_steps());

  prof.worst_plus = std::numeric_limits<double>::infinity();
  prof.worst_minus = std::numeric_limits<double>::infinity();
  for (int k = 0; k < traj.num_steps(); ++k) {
    const ContactGeometry g = contact_geometry(obj, traj.stage_pose(k));
    const MarginStep st = margin_step(g, traj.controls[k], obj, kind, prof.cap);
    if (st.xi_plus < prof.worst_plus) {
      prof.worst_plus = st.xi_plus;
      prof.argmin_plus = k;
    }
    if (st.xi_minus < prof.worst_minus) {
      prof.worst_minus = st.xi_minus;
      prof.argmin_minus = k;
    }
    prof.steps.push_back(st);
  }
  if (prof.steps.empty()) {
    prof.worst_plus = 0.0;
    prof.worst_minus = 0.0;
  } else {
    prof.cap_active = (prof.argmin_plus >= 0 && prof.steps[prof.argmin_plus].cap_plus) ||
                      (prof.argmin_minus >= 0 && prof.steps[prof.argmin_minus].cap_minus);
  }
  return prof;
}

}  // namespace pivotal
