#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

#include "pivotal/margin.hpp"
#include "pivotal/ocp.hpp"

namespace pivotal {

/// Single-level robust problem: the nominal constraint set with one
/// embedded margin-LP KKT system per step and direction, and the
/// epigraph objective over the worst-case margins.
inline OcpBuild build_robust(const ObjectParams& obj, const OcpSpec& spec,
                             UncertaintyKind kind, const RobustParams& rp = {}) {
  const PlanMode mode =
      kind == UncertaintyKind::Mass ? PlanMode::RobustMass : PlanMode::RobustCom;
  auto d = detail::make_build_data(obj, spec, mode, kind, rp);
  return {detail::assemble_problem(d), d};
}

/// Row data and lower-level solution of one embedded margin LP pair.
/// Rows are ordered [contact-A, contact-B, nonnegativity, cap]; C holds
/// the plus-direction coefficients, E the minus-direction ones, d the
/// shared right-hand side.
struct KktBlock {
  Eigen::Vector4d C{0, 0, -1, 1};
  Eigen::Vector4d E{0, 0, -1, 1};
  Eigen::Vector4d d{0, 0, 0, 0};
  Eigen::Vector4d w_plus{0, 0, 0, 0};
  Eigen::Vector4d w_minus{0, 0, 0, 0};
  double eps_plus{0.0};
  double eps_minus{0.0};
};

inline KktBlock make_kkt_block(const MarginBounds& mb, double cap, double eps_plus,
                               double eps_minus, const Eigen::Vector4d& w_plus,
                               const Eigen::Vector4d& w_minus) {
  KktBlock blk;
  if (const MarginRow* rA = mb.row(MarginRow::Source::ContactA)) {
    blk.C(0) = rA->a;
    blk.E(0) = -rA->a;
    blk.d(0) = rA->b;
  }
  if (const MarginRow* rB = mb.row(MarginRow::Source::ContactB)) {
    blk.C(1) = rB->a;
    blk.E(1) = -rB->a;
    blk.d(1) = rB->b;
  }
  blk.d(3) = cap;
  blk.eps_plus = eps_plus;
  blk.eps_minus = eps_minus;
  blk.w_plus = w_plus;
  blk.w_minus = w_minus;
  return blk;
}

struct KktResiduals {
  double primal_violation{0.0};      // max over rows and directions
  double multiplier_negativity{0.0};
  double max_comp_product{0.0};
  double stationarity_plus{0.0};
  double stationarity_minus{0.0};

  double max_abs() const {
    return std::max({primal_violation, multiplier_negativity, max_comp_product,
                     std::abs(stationarity_plus), std::abs(stationarity_minus)});
  }
};

/// First-order optimality residuals of the embedded scalar LPs.
inline KktResiduals kkt_residuals(const KktBlock& blk) {
  KktResiduals r;
  double stat_p = -1.0, stat_m = -1.0;
  for (int j = 0; j < 4; ++j) {
    const double slack_p = blk.d(j) - blk.C(j) * blk.eps_plus;
    const double slack_m = blk.d(j) - blk.E(j) * blk.eps_minus;
    r.primal_violation = std::max({r.primal_violation, -slack_p, -slack_m});
    r.multiplier_negativity =
        std::max({r.multiplier_negativity, -blk.w_plus(j), -blk.w_minus(j)});
    r.max_comp_product = std::max({r.max_comp_product,
                                   std::abs(blk.w_plus(j) * slack_p),
                                   std::abs(blk.w_minus(j) * slack_m)});
    stat_p += blk.w_plus(j) * blk.C(j);
    stat_m += blk.w_minus(j) * blk.E(j);
  }
  r.stationarity_plus = stat_p;
  r.stationarity_minus = stat_m;
  return r;
}

struct WorstCase {
  double worst_plus{0.0};
  double worst_minus{0.0};
  double objective{0.0};  // worst_plus + alpha * worst_minus
  int argmin_plus{-1};
  int argmin_minus{-1};
  bool cap_active{false};
};

/// Worst margins over the trajectory recomputed from the closed-form
/// per-step LPs; the cross-check that embedded lower-level optima track
/// the true ones.
inline WorstCase evaluate_worstcase(const Trajectory& traj, const ObjectParams& obj,
                                    UncertaintyKind kind, double alpha = 0.001,
                                    double cap = 0.0) {
  const MarginProfile prof = margin_profile(traj, obj, kind, cap);
  WorstCase wc;
  wc.worst_plus = prof.worst_plus;
  wc.worst_minus = prof.worst_minus;
  wc.argmin_plus = prof.argmin_plus;
  wc.argmin_minus = prof.argmin_minus;
  wc.objective = prof.worst_plus + alpha * prof.worst_minus;
  wc.cap_active = prof.cap_active;
  return wc;
}

/// Embedded lower-level optima of a robust solve, step by step.
inline std::vector<std::pair<double, double>> embedded_margins(const OcpBuild& build,
                                                               const SolveReport& rep) {
  const auto& d = *build.data;
  if (!d.robust()) throw std::invalid_argument("embedded_margins: nominal build");
  std::vector<std::pair<double, double>> out;
  out.reserve(d.N);
  for (int k = 0; k < d.N; ++k) {
    const int rb = d.rbase(k);
    out.emplace_back(rep.solution(rb + detail::RV_EPSP), rep.solution(rb + detail::RV_EPSM));
  }
  return out;
}

/// Embedded KKT block of step k of a robust solution, for residual checks.
inline KktBlock embedded_kkt_block(const OcpBuild& build, const SolveReport& rep, int k) {
  const auto& d = *build.data;
  if (!d.robust()) throw std::invalid_argument("embedded_kkt_block: nominal build");
  const VectorXd& z = rep.solution;
  const double th = z(d.idx_th(k + 1));
  const double c = std::cos(th), s = std::sin(th);
  const int sb = d.sbase(k), rb = d.rbase(k);

  KktBlock blk;
  blk.C(0) = d.cA(c, s);
  blk.E(0) = -d.cA(c, s);
  blk.d(0) = d.negD(c, s) * z(sb + detail::SV_FNA);
  blk.C(1) = d.cB();
  blk.E(1) = -d.cB();
  blk.d(1) = d.qB(c, s) * z(sb + detail::SV_FNB);
  blk.d(3) = d.cap;
  blk.eps_plus = z(rb + detail::RV_EPSP);
  blk.eps_minus = z(rb + detail::RV_EPSM);
  for (int j = 0; j < 4; ++j) {
    blk.w_plus(j) = z(rb + detail::RV_WP0 + j);
    blk.w_minus(j) = z(rb + detail::RV_WM0 + j);
  }
  return blk;
}

}  // namespace pivotal
