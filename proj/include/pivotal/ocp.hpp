#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pivotal/margin.hpp"
#include "pivotal/mechanics.hpp"
#include "pivotal/object.hpp"
#include "pivotal/solver.hpp"
#include "pivotal/trajectory.hpp"

namespace pivotal {

/// Transcription parameters for one planning instance.
struct OcpSpec {
  int N{60};
  PoseState x_s{0.0, 0.0};
  double theta_goal{0.5 * M_PI};
  double p_y_goal{std::numeric_limits<double>::quiet_NaN()};  // NaN: free
  Eigen::Vector2d Q{0.1, 0.0};    // diagonal state weights
  Eigen::Vector2d R{0.01, 0.01};  // diagonal control weights
  double f_u{0.0};                // 0: take the object bound
  double theta_rate_max{0.0};     // 0: (pi/2) / (N/2)

  void validate(const ObjectParams& obj) const {
    if (N < 2) throw std::invalid_argument("ocp: N must be at least 2");
    if (Q.minCoeff() < 0.0) throw std::invalid_argument("ocp: Q must be nonnegative");
    if (R.minCoeff() <= 0.0) throw std::invalid_argument("ocp: R must be positive");
    const double face = obj.profile.push_face_extent();
    if (x_s.theta < 0.0 || x_s.theta > 0.5 * M_PI || x_s.p_y < 0.0 || x_s.p_y > face)
      throw std::invalid_argument("ocp: start state outside the state box");
    if (theta_goal < 0.0 || theta_goal > 0.5 * M_PI)
      throw std::invalid_argument("ocp: goal angle outside the state box");
    if (!std::isnan(p_y_goal) && (p_y_goal < 0.0 || p_y_goal > face))
      throw std::invalid_argument("ocp: goal contact coordinate outside the face");
  }
};

enum class PlanMode { Nominal, RobustMass, RobustCom };

inline const char* to_string(PlanMode m) {
  switch (m) {
    case PlanMode::Nominal: return "nominal";
    case PlanMode::RobustMass: return "robust-mass";
    case PlanMode::RobustCom: return "robust-com";
  }
  return "?";
}

/// Worst-margin objective knobs for the robust modes.
struct RobustParams {
  double alpha{0.001};
  double cap{0.0};    // 0: default for the uncertainty kind
  double u_reg{0.1};  // control effort regularization
};

/// A solution that fails its own invariants on extraction.
struct RejectedSolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Stage variable slots, relative to each stage block.
enum StageVar { SV_FNP = 0, SV_FTP, SV_FNA, SV_FTA, SV_FNB, SV_FTB, SV_SP, SV_SM };
// Robust per-stage slots.
enum RobVar { RV_EPSP = 0, RV_EPSM, RV_WP0, RV_WP1, RV_WP2, RV_WP3, RV_WM0, RV_WM1, RV_WM2, RV_WM3 };
// Robust per-stage inequality rows.
enum RobRow {
  RR_AP = 0, RR_BP, RR_AM, RR_BM,      // primal margin rows, both directions
  RR_NNP, RR_NNM, RR_CAPP, RR_CAPM,    // eps >= 0 and cap rows
  RR_WP0, RR_WP1, RR_WP2, RR_WP3,      // multiplier nonnegativity
  RR_WM0, RR_WM1, RR_WM2, RR_WM3,
  RR_EPIP, RR_EPIM,                    // epigraph rows
  RR_COUNT
};

struct BuildData {
  ObjectParams obj;
  OcpSpec spec;
  PlanMode mode{PlanMode::Nominal};
  UncertaintyKind kind{UncertaintyKind::Mass};
  RobustParams rp;

  int N{0};
  double L{0}, wbar{0}, cbx{0}, cby{0}, W{0}, face{0};
  double f_u{0}, rate_max{0}, cap{0};
  bool fix_py_goal{false};

  bool robust() const { return mode != PlanMode::Nominal; }

  // ----- variable layout -----
  int idx_th(int k) const { return k; }
  int idx_py(int k) const { return (N + 1) + k; }
  int sbase(int k) const { return 2 * (N + 1) + 8 * k; }
  int rbase(int k) const { return 2 * (N + 1) + 8 * N + 10 * k; }
  int idx_tp() const { return 2 * (N + 1) + 8 * N + 10 * N; }
  int idx_tm() const { return idx_tp() + 1; }
  int num_vars() const { return 2 * (N + 1) + 8 * N + (robust() ? 10 * N + 2 : 0); }

  // ----- equality rows -----
  int eq_stage(int k, int j) const { return 5 * k + j; }  // x, y, moment, slipA, slipB
  int eq_link(int k) const { return 5 * N + k; }
  int n_bnd() const { return fix_py_goal ? 4 : 3; }
  int eq_bnd(int j) const { return 6 * N + j; }  // theta0, py0, thetaN[, pyN]
  int eq_stat(int k, int sigma) const { return 6 * N + n_bnd() + 2 * k + sigma; }
  int num_eq() const { return 6 * N + n_bnd() + (robust() ? 2 * N : 0); }

  // ----- inequality rows -----
  int iq_stage(int k, int j) const { return 4 * k + j; }  // cone+, cone-, sp, sm
  int iq_mono(int k) const { return 4 * N + 2 * k; }
  int iq_rate(int k) const { return 4 * N + 2 * k + 1; }
  int iq_rob(int k, int j) const { return 6 * N + RR_COUNT * k + j; }
  int num_ineq() const { return 6 * N + (robust() ? RR_COUNT * N : 0); }

  // trig helpers at the stage pose
  double Cx(double c, double s) const { return cbx * c - cby * s; }
  double dCx(double c, double s) const { return -cbx * s - cby * c; }
  double negD(double c, double s) const { return wbar * (c + obj.mu_A * s); }
  double dnegD(double c, double s) const { return wbar * (-s + obj.mu_A * c); }

  // margin row coefficients against the signed uncertainty; the wall row
  // carries the gravity arm for mass and the weight for CoM shift
  double cA(double c, double s) const {
    return kind == UncertaintyKind::Mass ? Cx(c, s) : W;
  }
  double dcA(double c, double s) const {
    return kind == UncertaintyKind::Mass ? dCx(c, s) : 0.0;
  }
  double cB() const { return kind == UncertaintyKind::Mass ? -1.0 : -W; }
  // floor-row rhs scale on f_nB
  double qB(double c, double s) const {
    return kind == UncertaintyKind::Mass
               ? 1.0 + obj.mu_A * obj.mu_B
               : negD(c, s) * (1.0 - obj.mu_B) / (1.0 + obj.mu_A);
  }
  double dqB(double c, double s) const {
    return kind == UncertaintyKind::Mass
               ? 0.0
               : dnegD(c, s) * (1.0 - obj.mu_B) / (1.0 + obj.mu_A);
  }
};

// ---------------------------------------------------------------------
// residual evaluation
// ---------------------------------------------------------------------

inline void eval_eq_all(const BuildData& d, const VectorXd& z, VectorXd& out) {
  out.setZero(d.num_eq());
  for (int k = 0; k < d.N; ++k) {
    const int a = k + 1;
    const double th = z(d.idx_th(a)), py = z(d.idx_py(a));
    const double c = std::cos(th), s = std::sin(th);
    const int sb = d.sbase(k);
    const double fnp = z(sb + SV_FNP), ftp = z(sb + SV_FTP);
    const double fna = z(sb + SV_FNA), fta = z(sb + SV_FTA);
    const double fnb = z(sb + SV_FNB), ftb = z(sb + SV_FTB);
    const double fx = -c * fnp - s * ftp;
    const double fy = -s * fnp + c * ftp;
    out(d.eq_stage(k, 0)) = fna + ftb + fx;
    out(d.eq_stage(k, 1)) = fta + fnb - d.W + fy;
    out(d.eq_stage(k, 2)) =
        (-d.wbar * s * fta - d.wbar * c * fna - d.Cx(c, s) * d.W + d.L * ftp + py * fnp) / d.L;
    out(d.eq_stage(k, 3)) = fta - d.obj.mu_A * fna;
    out(d.eq_stage(k, 4)) = ftb + d.obj.mu_B * fnb;
    out(d.eq_link(k)) =
        z(d.idx_py(k + 1)) - z(d.idx_py(k)) - z(sb + SV_SP) + z(sb + SV_SM);
  }
  out(d.eq_bnd(0)) = z(d.idx_th(0)) - d.spec.x_s.theta;
  out(d.eq_bnd(1)) = z(d.idx_py(0)) - d.spec.x_s.p_y;
  out(d.eq_bnd(2)) = z(d.idx_th(d.N)) - d.spec.theta_goal;
  if (d.fix_py_goal) out(d.eq_bnd(3)) = z(d.idx_py(d.N)) - d.spec.p_y_goal;

  if (d.robust()) {
    for (int k = 0; k < d.N; ++k) {
      const int a = k + 1;
      const double th = z(d.idx_th(a));
      const double c = std::cos(th), s = std::sin(th);
      const int rb = d.rbase(k);
      for (int sig = 0; sig < 2; ++sig) {
        const double sgn = sig == 0 ? 1.0 : -1.0;
        const int wb = rb + (sig == 0 ? RV_WP0 : RV_WM0);
        out(d.eq_stat(k, sig)) = -1.0 + sgn * d.cA(c, s) * z(wb + 0) +
                                 sgn * d.cB() * z(wb + 1) - z(wb + 2) + z(wb + 3);
      }
    }
  }
}

inline void eval_ineq_all(const BuildData& d, const VectorXd& z, VectorXd& out) {
  out.setZero(d.num_ineq());
  const double mu_P = d.obj.mu_P;
  for (int k = 0; k < d.N; ++k) {
    const int sb = d.sbase(k);
    out(d.iq_stage(k, 0)) = mu_P * z(sb + SV_FNP) - z(sb + SV_FTP);
    out(d.iq_stage(k, 1)) = mu_P * z(sb + SV_FNP) + z(sb + SV_FTP);
    out(d.iq_stage(k, 2)) = z(sb + SV_SP);
    out(d.iq_stage(k, 3)) = z(sb + SV_SM);
    out(d.iq_mono(k)) = z(d.idx_th(k + 1)) - z(d.idx_th(k));
    out(d.iq_rate(k)) = d.rate_max - (z(d.idx_th(k + 1)) - z(d.idx_th(k)));
  }
  if (d.robust()) {
    for (int k = 0; k < d.N; ++k) {
      const int a = k + 1;
      const double th = z(d.idx_th(a));
      const double c = std::cos(th), s = std::sin(th);
      const int sb = d.sbase(k), rb = d.rbase(k);
      const double fna = z(sb + SV_FNA), fnb = z(sb + SV_FNB);
      const double dA = d.negD(c, s) * fna;
      const double dB = d.qB(c, s) * fnb;
      const double ep = z(rb + RV_EPSP), em = z(rb + RV_EPSM);
      out(d.iq_rob(k, RR_AP)) = dA - d.cA(c, s) * ep;
      out(d.iq_rob(k, RR_BP)) = dB - d.cB() * ep;
      out(d.iq_rob(k, RR_AM)) = dA + d.cA(c, s) * em;
      out(d.iq_rob(k, RR_BM)) = dB + d.cB() * em;
      out(d.iq_rob(k, RR_NNP)) = ep;
      out(d.iq_rob(k, RR_NNM)) = em;
      out(d.iq_rob(k, RR_CAPP)) = d.cap - ep;
      out(d.iq_rob(k, RR_CAPM)) = d.cap - em;
      for (int j = 0; j < 4; ++j) {
        out(d.iq_rob(k, RR_WP0 + j)) = z(rb + RV_WP0 + j);
        out(d.iq_rob(k, RR_WM0 + j)) = z(rb + RV_WM0 + j);
      }
      out(d.iq_rob(k, RR_EPIP)) = ep - z(d.idx_tp());
      out(d.iq_rob(k, RR_EPIM)) = em - z(d.idx_tm());
    }
  }
}

// ---------------------------------------------------------------------
// jacobians; the same emission order backs the pattern and the values
// ---------------------------------------------------------------------

template <class F>
void emit_eq_jac(const BuildData& d, const VectorXd& z, F&& put) {
  for (int k = 0; k < d.N; ++k) {
    const int a = k + 1;
    const double th = z(d.idx_th(a)), py = z(d.idx_py(a));
    const double c = std::cos(th), s = std::sin(th);
    const int sb = d.sbase(k);
    const double fnp = z(sb + SV_FNP), ftp = z(sb + SV_FTP);
    const double fna = z(sb + SV_FNA), fta = z(sb + SV_FTA);
    const double fx = -c * fnp - s * ftp;
    const double fy = -s * fnp + c * ftp;

    // force-x
    put(d.eq_stage(k, 0), sb + SV_FNA, 1.0);
    put(d.eq_stage(k, 0), sb + SV_FTB, 1.0);
    put(d.eq_stage(k, 0), sb + SV_FNP, -c);
    put(d.eq_stage(k, 0), sb + SV_FTP, -s);
    put(d.eq_stage(k, 0), d.idx_th(a), -fy);
    // force-y
    put(d.eq_stage(k, 1), sb + SV_FTA, 1.0);
    put(d.eq_stage(k, 1), sb + SV_FNB, 1.0);
    put(d.eq_stage(k, 1), sb + SV_FNP, -s);
    put(d.eq_stage(k, 1), sb + SV_FTP, c);
    put(d.eq_stage(k, 1), d.idx_th(a), fx);
    // moment / L
    put(d.eq_stage(k, 2), sb + SV_FTA, -d.wbar * s / d.L);
    put(d.eq_stage(k, 2), sb + SV_FNA, -d.wbar * c / d.L);
    put(d.eq_stage(k, 2), sb + SV_FTP, 1.0);
    put(d.eq_stage(k, 2), sb + SV_FNP, py / d.L);
    put(d.eq_stage(k, 2), d.idx_py(a), fnp / d.L);
    put(d.eq_stage(k, 2), d.idx_th(a),
        (-d.wbar * c * fta + d.wbar * s * fna - d.dCx(c, s) * d.W) / d.L);
    // slip equalities
    put(d.eq_stage(k, 3), sb + SV_FTA, 1.0);
    put(d.eq_stage(k, 3), sb + SV_FNA, -d.obj.mu_A);
    put(d.eq_stage(k, 4), sb + SV_FTB, 1.0);
    put(d.eq_stage(k, 4), sb + SV_FNB, d.obj.mu_B);
    // contact-coordinate update
    put(d.eq_link(k), d.idx_py(k + 1), 1.0);
    put(d.eq_link(k), d.idx_py(k), -1.0);
    put(d.eq_link(k), sb + SV_SP, -1.0);
    put(d.eq_link(k), sb + SV_SM, 1.0);
  }
  put(d.eq_bnd(0), d.idx_th(0), 1.0);
  put(d.eq_bnd(1), d.idx_py(0), 1.0);
  put(d.eq_bnd(2), d.idx_th(d.N), 1.0);
  if (d.fix_py_goal) put(d.eq_bnd(3), d.idx_py(d.N), 1.0);

  if (d.robust()) {
    for (int k = 0; k < d.N; ++k) {
      const int a = k + 1;
      const double th = z(d.idx_th(a));
      const double c = std::cos(th), s = std::sin(th);
      const int rb = d.rbase(k);
      for (int sig = 0; sig < 2; ++sig) {
        const double sgn = sig == 0 ? 1.0 : -1.0;
        const int wb = rb + (sig == 0 ? RV_WP0 : RV_WM0);
        const int row = d.eq_stat(k, sig);
        put(row, d.idx_th(a), sgn * d.dcA(c, s) * z(wb + 0));
        put(row, wb + 0, sgn * d.cA(c, s));
        put(row, wb + 1, sgn * d.cB());
        put(row, wb + 2, -1.0);
        put(row, wb + 3, 1.0);
      }
    }
  }
}

template <class F>
void emit_ineq_jac(const BuildData& d, const VectorXd& z, F&& put) {
  const double mu_P = d.obj.mu_P;
  for (int k = 0; k < d.N; ++k) {
    const int sb = d.sbase(k);
    put(d.iq_stage(k, 0), sb + SV_FNP, mu_P);
    put(d.iq_stage(k, 0), sb + SV_FTP, -1.0);
    put(d.iq_stage(k, 1), sb + SV_FNP, mu_P);
    put(d.iq_stage(k, 1), sb + SV_FTP, 1.0);
    put(d.iq_stage(k, 2), sb + SV_SP, 1.0);
    put(d.iq_stage(k, 3), sb + SV_SM, 1.0);
    put(d.iq_mono(k), d.idx_th(k + 1), 1.0);
    put(d.iq_mono(k), d.idx_th(k), -1.0);
    put(d.iq_rate(k), d.idx_th(k + 1), -1.0);
    put(d.iq_rate(k), d.idx_th(k), 1.0);
  }
  if (d.robust()) {
    for (int k = 0; k < d.N; ++k) {
      const int a = k + 1;
      const double th = z(d.idx_th(a));
      const double c = std::cos(th), s = std::sin(th);
      const int sb = d.sbase(k), rb = d.rbase(k);
      const double fna = z(sb + SV_FNA), fnb = z(sb + SV_FNB);
      const double ep = z(rb + RV_EPSP), em = z(rb + RV_EPSM);

      put(d.iq_rob(k, RR_AP), d.idx_th(a), d.dnegD(c, s) * fna - d.dcA(c, s) * ep);
      put(d.iq_rob(k, RR_AP), sb + SV_FNA, d.negD(c, s));
      put(d.iq_rob(k, RR_AP), rb + RV_EPSP, -d.cA(c, s));

      put(d.iq_rob(k, RR_BP), d.idx_th(a), d.dqB(c, s) * fnb);
      put(d.iq_rob(k, RR_BP), sb + SV_FNB, d.qB(c, s));
      put(d.iq_rob(k, RR_BP), rb + RV_EPSP, -d.cB());

      put(d.iq_rob(k, RR_AM), d.idx_th(a), d.dnegD(c, s) * fna + d.dcA(c, s) * em);
      put(d.iq_rob(k, RR_AM), sb + SV_FNA, d.negD(c, s));
      put(d.iq_rob(k, RR_AM), rb + RV_EPSM, d.cA(c, s));

      put(d.iq_rob(k, RR_BM), d.idx_th(a), d.dqB(c, s) * fnb);
      put(d.iq_rob(k, RR_BM), sb + SV_FNB, d.qB(c, s));
      put(d.iq_rob(k, RR_BM), rb + RV_EPSM, d.cB());

      put(d.iq_rob(k, RR_NNP), rb + RV_EPSP, 1.0);
      put(d.iq_rob(k, RR_NNM), rb + RV_EPSM, 1.0);
      put(d.iq_rob(k, RR_CAPP), rb + RV_EPSP, -1.0);
      put(d.iq_rob(k, RR_CAPM), rb + RV_EPSM, -1.0);
      for (int j = 0; j < 4; ++j) {
        put(d.iq_rob(k, RR_WP0 + j), rb + RV_WP0 + j, 1.0);
        put(d.iq_rob(k, RR_WM0 + j), rb + RV_WM0 + j, 1.0);
      }
      put(d.iq_rob(k, RR_EPIP), rb + RV_EPSP, 1.0);
      put(d.iq_rob(k, RR_EPIP), d.idx_tp(), -1.0);
      put(d.iq_rob(k, RR_EPIM), rb + RV_EPSM, 1.0);
      put(d.iq_rob(k, RR_EPIM), d.idx_tm(), -1.0);
    }
  }
}

// Lagrangian Hessian: sigma*objective + constraint curvature weighted by
// the supplied multipliers. Entries are emitted lower-triangular.
template <class F>
void emit_hess(const BuildData& d, const VectorXd& z, double sigma, const VectorXd& y_eq,
               const VectorXd& y_iq, F&& put_raw) {
  const auto put = [&](int i, int j, double v) {
    if (i >= j)
      put_raw(i, j, v);
    else
      put_raw(j, i, v);
  };

  // objective block
  for (int k = 0; k < d.N; ++k) {
    const int sb = d.sbase(k);
    if (d.robust()) {
      put(sb + SV_FNP, sb + SV_FNP, 2.0 * sigma * d.rp.u_reg);
      put(sb + SV_FTP, sb + SV_FTP, 2.0 * sigma * d.rp.u_reg);
    } else {
      put(d.idx_th(k), d.idx_th(k), 2.0 * sigma * d.spec.Q(0));
      put(d.idx_py(k), d.idx_py(k), 2.0 * sigma * d.spec.Q(1));
      put(sb + SV_FNP, sb + SV_FNP, 2.0 * sigma * d.spec.R(0));
      put(sb + SV_FTP, sb + SV_FTP, 2.0 * sigma * d.spec.R(1));
    }
  }

  for (int k = 0; k < d.N; ++k) {
    const int a = k + 1;
    const int ith = d.idx_th(a);
    const double th = z(ith), py = z(d.idx_py(a));
    const double c = std::cos(th), s = std::sin(th);
    const int sb = d.sbase(k);
    const double fnp = z(sb + SV_FNP), ftp = z(sb + SV_FTP);
    const double fna = z(sb + SV_FNA), fta = z(sb + SV_FTA);
    const double fx = -c * fnp - s * ftp;
    const double fy = -s * fnp + c * ftp;

    {  // force-x: d2/dth2 = -dfy/dth = -fx; cross terms with controls
      const double y = y_eq(d.eq_stage(k, 0));
      put(ith, ith, y * (-fx));
      put(ith, sb + SV_FNP, y * s);
      put(ith, sb + SV_FTP, y * (-c));
    }
    {  // force-y: d2/dth2 = dfx/dth = -fy
      const double y = y_eq(d.eq_stage(k, 1));
      put(ith, ith, y * (-fy));
      put(ith, sb + SV_FNP, y * (-c));
      put(ith, sb + SV_FTP, y * (-s));
    }
    {  // moment / L
      const double y = y_eq(d.eq_stage(k, 2)) / d.L;
      put(ith, ith, y * (d.wbar * s * fta + d.wbar * c * fna + d.Cx(c, s) * d.W));
      put(ith, sb + SV_FTA, y * (-d.wbar * c));
      put(ith, sb + SV_FNA, y * (d.wbar * s));
      put(d.idx_py(a), sb + SV_FNP, y);
    }

    if (d.robust()) {
      const int rb = d.rbase(k);
      const double ep = z(rb + RV_EPSP), em = z(rb + RV_EPSM);
      const double negD = d.negD(c, s), dnegD = d.dnegD(c, s);
      const double cA = d.cA(c, s), dcA = d.dcA(c, s);
      // second derivatives of the trig factors: negD'' = -negD, cA'' = -cA
      // (zero for the CoM wall coefficient, which is constant)
      const double ddcA = d.kind == UncertaintyKind::Mass ? -cA : 0.0;
      const double qB = d.qB(c, s), dqB = d.dqB(c, s);
      const double ddqB = d.kind == UncertaintyKind::Mass ? 0.0 : -qB;
      const double fnb = z(sb + SV_FNB);

      {  // wall margin row, plus direction
        const double y = y_iq(d.iq_rob(k, RR_AP));
        put(ith, ith, y * (-negD * fna - ddcA * ep));
        put(ith, sb + SV_FNA, y * dnegD);
        put(ith, rb + RV_EPSP, y * (-dcA));
      }
      {  // wall margin row, minus direction
        const double y = y_iq(d.iq_rob(k, RR_AM));
        put(ith, ith, y * (-negD * fna + ddcA * em));
        put(ith, sb + SV_FNA, y * dnegD);
        put(ith, rb + RV_EPSM, y * dcA);
      }
      {  // floor margin rows share the theta-coupled rhs
        const double yp = y_iq(d.iq_rob(k, RR_BP));
        const double ym = y_iq(d.iq_rob(k, RR_BM));
        put(ith, ith, (yp + ym) * ddqB * fnb);
        put(ith, sb + SV_FNB, (yp + ym) * dqB);
      }
      {  // stationarity: theta couples to the wall multiplier
        for (int sig = 0; sig < 2; ++sig) {
          const double sgn = sig == 0 ? 1.0 : -1.0;
          const int wb = rb + (sig == 0 ? RV_WP0 : RV_WM0);
          const double y = y_eq(d.eq_stat(k, sig));
          put(ith, ith, y * sgn * ddcA * z(wb + 0));
          put(ith, wb + 0, y * sgn * dcA);
        }
      }
    }
  }
}

inline double eval_objective_all(const BuildData& d, const VectorXd& z, VectorXd* grad) {
  if (grad) grad->setZero(d.num_vars());
  double f = 0.0;
  if (d.robust()) {
    f = -(z(d.idx_tp()) + d.rp.alpha * z(d.idx_tm()));
    if (grad) {
      (*grad)(d.idx_tp()) = -1.0;
      (*grad)(d.idx_tm()) = -d.rp.alpha;
    }
    for (int k = 0; k < d.N; ++k) {
      const int sb = d.sbase(k);
      const double fnp = z(sb + SV_FNP), ftp = z(sb + SV_FTP);
      f += d.rp.u_reg * (fnp * fnp + ftp * ftp);
      if (grad) {
        (*grad)(sb + SV_FNP) += 2.0 * d.rp.u_reg * fnp;
        (*grad)(sb + SV_FTP) += 2.0 * d.rp.u_reg * ftp;
      }
    }
    return f;
  }
  const double pg = std::isnan(d.spec.p_y_goal) ? 0.0 : d.spec.p_y_goal;
  for (int k = 0; k < d.N; ++k) {
    const double dth = z(d.idx_th(k)) - d.spec.theta_goal;
    const double dpy = z(d.idx_py(k)) - pg;
    f += d.spec.Q(0) * dth * dth + d.spec.Q(1) * dpy * dpy;
    const int sb = d.sbase(k);
    const double fnp = z(sb + SV_FNP), ftp = z(sb + SV_FTP);
    f += d.spec.R(0) * fnp * fnp + d.spec.R(1) * ftp * ftp;
    if (grad) {
      (*grad)(d.idx_th(k)) += 2.0 * d.spec.Q(0) * dth;
      (*grad)(d.idx_py(k)) += 2.0 * d.spec.Q(1) * dpy;
      (*grad)(sb + SV_FNP) += 2.0 * d.spec.R(0) * fnp;
      (*grad)(sb + SV_FTP) += 2.0 * d.spec.R(1) * ftp;
    }
  }
  return f;
}

// warm start: linear pivot path, contact coordinate held, controls from
// the closed-form statics at a few wall-normal targets
inline VectorXd warm_start(const BuildData& d) {
  VectorXd z = VectorXd::Zero(d.num_vars());
  const double th0 = d.spec.x_s.theta, thg = d.spec.theta_goal;
  for (int k = 0; k <= d.N; ++k) {
    z(d.idx_th(k)) = th0 + (thg - th0) * static_cast<double>(k) / d.N;
    z(d.idx_py(k)) = d.spec.x_s.p_y;
  }
  const double scales[] = {0.35, 0.5, 0.2, 0.7, 1.0, 0.1};
  for (int k = 0; k < d.N; ++k) {
    const PoseState pose{z(d.idx_th(k + 1)), z(d.idx_py(k + 1))};
    const auto g = contact_geometry(d.obj, pose);
    Control best_u{};
    double best_score = kInf;
    ContactForces best_F{};
    for (const double sc : scales) {
      ConsistentPoint pt;
      try {
        pt = control_for_wall_normal(g, d.obj, d.obj.m, 0.0, sc * d.W);
      } catch (const SingularConfigError&) {
        continue;
      }
      const double cone_viol =
          std::max(0.0, std::abs(pt.u.f_tP) - d.obj.mu_P * std::max(pt.u.f_nP, 0.0));
      const double neg = std::max(0.0, -pt.f_nB) + std::max(0.0, -pt.u.f_nP);
      const double score = 100.0 * (cone_viol + 10.0 * neg) + pt.u.f_nP * pt.u.f_nP;
      if (score < best_score) {
        best_score = score;
        best_u = pt.u;
        best_F = solve_contact_forces(g, pt.u, d.obj, d.obj.m, 0.0);
      }
    }
    const int sb = d.sbase(k);
    z(sb + SV_FNP) = std::clamp(best_u.f_nP, 0.0, d.f_u);
    z(sb + SV_FTP) = std::clamp(best_u.f_tP, -d.obj.mu_P * d.f_u, d.obj.mu_P * d.f_u);
    z(sb + SV_FNA) = std::clamp(best_F.f_nA, 0.0, d.f_u);
    z(sb + SV_FTA) = d.obj.mu_A * z(sb + SV_FNA);
    z(sb + SV_FNB) = std::clamp(best_F.f_nB, 0.0, d.f_u);
    z(sb + SV_FTB) = -d.obj.mu_B * z(sb + SV_FNB);
    z(sb + SV_SP) = 0.0;
    z(sb + SV_SM) = 0.0;
  }
  if (d.robust()) {
    double tmin_p = kInf, tmin_m = kInf;
    for (int k = 0; k < d.N; ++k) {
      const PoseState pose{z(d.idx_th(k + 1)), z(d.idx_py(k + 1))};
      const auto g = contact_geometry(d.obj, pose);
      const int sb = d.sbase(k), rb = d.rbase(k);
      const Control u{z(sb + SV_FNP), z(sb + SV_FTP)};
      double ep = 0.1 * d.cap, em = 0.1 * d.cap;
      try {
        const auto mb = d.kind == UncertaintyKind::Mass ? mass_margin_bounds(g, u, d.obj)
                                                        : com_margin_bounds(g, u, d.obj);
        ep = lp_margin(mb, Direction::Plus, d.cap).xi_star;
        em = lp_margin(mb, Direction::Minus, d.cap).xi_star;
      } catch (const SingularConfigError&) {
      }
      z(rb + RV_EPSP) = std::clamp(ep, 1e-3 * d.cap, d.cap);
      z(rb + RV_EPSM) = std::clamp(em, 1e-3 * d.cap, d.cap);
      tmin_p = std::min(tmin_p, z(rb + RV_EPSP));
      tmin_m = std::min(tmin_m, z(rb + RV_EPSM));
      for (int j = 0; j < 4; ++j) {
        z(rb + RV_WP0 + j) = 0.0;  // pushed interior by the solver
        z(rb + RV_WM0 + j) = 0.0;
      }
    }
    z(d.idx_tp()) = tmin_p;
    z(d.idx_tm()) = tmin_m;
  }
  return z;
}

inline void set_bounds(const BuildData& d, VectorXd& lb, VectorXd& ub) {
  const int n = d.num_vars();
  lb = VectorXd::Constant(n, -kInf);
  ub = VectorXd::Constant(n, kInf);
  for (int k = 0; k <= d.N; ++k) {
    lb(d.idx_th(k)) = 0.0;
    ub(d.idx_th(k)) = 0.5 * M_PI;
    lb(d.idx_py(k)) = 0.0;
    ub(d.idx_py(k)) = d.face;
  }
  // boundary rows pin these exactly; widen the boxes so the pinned value
  // is not a barrier boundary
  lb(d.idx_th(0)) = -0.1;
  ub(d.idx_th(d.N)) = 0.5 * M_PI + 0.1;
  if (d.spec.x_s.theta >= 0.5 * M_PI - 1e-9) ub(d.idx_th(0)) = 0.5 * M_PI + 0.1;
  if (d.spec.theta_goal <= 1e-9) lb(d.idx_th(d.N)) = -0.1;

  for (int k = 0; k < d.N; ++k) {
    const int sb = d.sbase(k);
    lb(sb + SV_FNP) = 0.0;
    ub(sb + SV_FNP) = d.f_u;
    lb(sb + SV_FTP) = -d.obj.mu_P * d.f_u;
    ub(sb + SV_FTP) = d.obj.mu_P * d.f_u;
    lb(sb + SV_FNA) = 0.0;
    ub(sb + SV_FNA) = d.f_u;
    lb(sb + SV_FNB) = 0.0;
    ub(sb + SV_FNB) = d.f_u;
    lb(sb + SV_FTA) = -d.f_u;
    ub(sb + SV_FTA) = d.f_u;
    lb(sb + SV_FTB) = -d.f_u;
    ub(sb + SV_FTB) = d.f_u;
    // slip slacks are kept nonnegative by their own inequality rows;
    // loose boxes avoid a doubled boundary at zero
    lb(sb + SV_SP) = -0.05 * d.face;
    ub(sb + SV_SP) = d.face;
    lb(sb + SV_SM) = -0.05 * d.face;
    ub(sb + SV_SM) = d.face;
  }
  if (d.robust()) {
    for (int k = 0; k < d.N; ++k) {
      const int rb = d.rbase(k);
      lb(rb + RV_EPSP) = -0.05 * d.cap;
      ub(rb + RV_EPSP) = 1.05 * d.cap;
      lb(rb + RV_EPSM) = -0.05 * d.cap;
      ub(rb + RV_EPSM) = 1.05 * d.cap;
      for (int j = 0; j < 4; ++j) {
        lb(rb + RV_WP0 + j) = -1.0;
        ub(rb + RV_WP0 + j) = 1e6;
        lb(rb + RV_WM0 + j) = -1.0;
        ub(rb + RV_WM0 + j) = 1e6;
      }
    }
    lb(d.idx_tp()) = -0.1 * d.cap;
    ub(d.idx_tp()) = 1.1 * d.cap;
    lb(d.idx_tm()) = -0.1 * d.cap;
    ub(d.idx_tm()) = 1.1 * d.cap;
  }
}

struct PatternCollector {
  SparsityPattern* pat;
  void operator()(int r, int c, double) { pat->emplace_back(r, c); }
};
struct ValueWriter {
  VectorXd* vals;
  int pos{0};
  void operator()(int, int, double v) { (*vals)(pos++) = v; }
};

inline NlpProblem assemble_problem(std::shared_ptr<const BuildData> dp) {
  const BuildData& d = *dp;
  NlpProblem p;
  p.name = std::string(to_string(d.mode)) + "-" + d.obj.name;
  p.num_vars = d.num_vars();
  p.num_eq = d.num_eq();
  p.num_ineq = d.num_ineq();
  set_bounds(d, p.lb, p.ub);
  p.x0 = warm_start(d);

  p.eval_eq = [dp](const VectorXd& z, VectorXd& out) { eval_eq_all(*dp, z, out); };
  p.eval_ineq = [dp](const VectorXd& z, VectorXd& out) { eval_ineq_all(*dp, z, out); };
  p.eval_objective = [dp](const VectorXd& z, VectorXd* g) {
    return eval_objective_all(*dp, z, g);
  };

  PatternCollector pc{&p.eq_jac_pattern};
  emit_eq_jac(d, p.x0, pc);
  p.eval_eq_jac = [dp](const VectorXd& z, VectorXd& vals) {
    ValueWriter w{&vals};
    emit_eq_jac(*dp, z, w);
  };
  PatternCollector pi{&p.ineq_jac_pattern};
  emit_ineq_jac(d, p.x0, pi);
  p.eval_ineq_jac = [dp](const VectorXd& z, VectorXd& vals) {
    ValueWriter w{&vals};
    emit_ineq_jac(*dp, z, w);
  };
  PatternCollector ph{&p.hess_pattern};
  emit_hess(d, p.x0, 1.0, VectorXd::Zero(p.num_eq), VectorXd::Zero(p.num_ineq), ph);
  p.eval_hess = [dp](const VectorXd& z, double sigma, const VectorXd& ye, const VectorXd& yi,
                     VectorXd& vals) {
    ValueWriter w{&vals};
    emit_hess(*dp, z, sigma, ye, yi, w);
  };

  for (int k = 0; k < d.N; ++k) {
    p.complementarity_pairs.emplace_back(d.iq_stage(k, 2), d.iq_stage(k, 0));
    p.complementarity_pairs.emplace_back(d.iq_stage(k, 3), d.iq_stage(k, 1));
  }
  if (d.robust()) {
    for (int k = 0; k < d.N; ++k) {
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WP0), d.iq_rob(k, RR_AP));
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WP1), d.iq_rob(k, RR_BP));
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WP2), d.iq_rob(k, RR_NNP));
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WP3), d.iq_rob(k, RR_CAPP));
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WM0), d.iq_rob(k, RR_AM));
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WM1), d.iq_rob(k, RR_BM));
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WM2), d.iq_rob(k, RR_NNM));
      p.complementarity_pairs.emplace_back(d.iq_rob(k, RR_WM3), d.iq_rob(k, RR_CAPM));
    }
  }
  return p;
}

inline std::shared_ptr<BuildData> make_build_data(const ObjectParams& obj, const OcpSpec& spec,
                                                  PlanMode mode, UncertaintyKind kind,
                                                  const RobustParams& rp) {
  obj.validate();
  spec.validate(obj);
  auto d = std::make_shared<BuildData>();
  d->obj = obj;
  d->spec = spec;
  d->mode = mode;
  d->kind = kind;
  d->rp = rp;
  d->N = spec.N;
  d->L = obj.profile.length();
  d->wbar = obj.profile.wall_face_extent();
  const Vec2 cb = obj.profile.centroid();
  d->cbx = cb.x();
  d->cby = cb.y();
  d->W = obj.weight();
  d->face = obj.profile.push_face_extent();
  d->f_u = spec.f_u > 0.0 ? spec.f_u : obj.f_u;
  d->rate_max = spec.theta_rate_max > 0.0 ? spec.theta_rate_max
                                          : (0.5 * M_PI) / (0.5 * spec.N);
  d->cap = rp.cap > 0.0 ? rp.cap : default_margin_cap(obj, kind);
  d->fix_py_goal = !std::isnan(spec.p_y_goal);
  return d;
}

}  // namespace detail

/// A built problem plus the data needed to unpack its solutions.
struct OcpBuild {
  NlpProblem problem;
  std::shared_ptr<const detail::BuildData> data;
};

/// Contact-implicit transcription of the pivoting plan: statics, slip
/// equalities, push-face complementarity, boundary conditions, and the
/// quadratic stage cost.
inline OcpBuild build_nominal(const ObjectParams& obj, const OcpSpec& spec) {
  auto d = detail::make_build_data(obj, spec, PlanMode::Nominal, UncertaintyKind::Mass, {});
  return {detail::assemble_problem(d), d};
}

/// Unpacks a solver solution and enforces every trajectory invariant;
/// throws RejectedSolutionError naming the first violated check.
inline Trajectory extract_trajectory(const OcpBuild& build, const SolveReport& rep,
                                     double eq_tol = 1e-6, double comp_tol = 1e-6) {
  const auto& d = *build.data;
  const VectorXd& z = rep.solution;
  if (static_cast<int>(z.size()) != d.num_vars())
    throw RejectedSolutionError("extract: solution size mismatch");

  Trajectory traj;
  traj.object = d.obj;
  traj.mode = to_string(d.mode);
  traj.theta.resize(d.N + 1);
  traj.p_y.resize(d.N + 1);
  for (int k = 0; k <= d.N; ++k) {
    traj.theta[k] = z(d.idx_th(k));
    traj.p_y[k] = std::clamp(z(d.idx_py(k)), 0.0, d.face);
  }
  // snap boundary values pinned by equality rows
  const auto snap = [](double& v, double target, double tol) {
    if (std::abs(v - target) <= tol) v = target;
  };
  snap(traj.theta[0], d.spec.x_s.theta, 1e-7);
  snap(traj.p_y[0], d.spec.x_s.p_y, 1e-7);
  snap(traj.theta[d.N], d.spec.theta_goal, 1e-7);
  if (std::abs(traj.theta[d.N] - d.spec.theta_goal) > 1e-9)
    throw RejectedSolutionError("extract: terminal angle misses the goal");

  double prev = traj.theta[0];
  for (int k = 1; k <= d.N; ++k) {
    if (traj.theta[k] < prev - 1e-9)
      throw RejectedSolutionError("extract: pivot angle not monotone");
    if (traj.theta[k] - prev > d.rate_max + 1e-7)
      throw RejectedSolutionError("extract: pivot rate cap violated");
    prev = traj.theta[k];
  }

  traj.controls.resize(d.N);
  traj.forces.resize(d.N);
  traj.slips.resize(d.N);
  double worst_eq = 0.0, worst_comp = 0.0;
  for (int k = 0; k < d.N; ++k) {
    const int sb = d.sbase(k);
    ContactForces F;
    F.f_nP = z(sb + detail::SV_FNP);
    F.f_tP = z(sb + detail::SV_FTP);
    F.f_nA = z(sb + detail::SV_FNA);
    F.f_tA = z(sb + detail::SV_FTA);
    F.f_nB = z(sb + detail::SV_FNB);
    F.f_tB = z(sb + detail::SV_FTB);
    const auto g = contact_geometry(d.obj, {traj.theta[k + 1], traj.p_y[k + 1]});
    const Vec2 f = push_force_world(g.R, {F.f_nP, F.f_tP});
    F.f_x = f.x();
    F.f_y = f.y();

    if (F.f_nA < -1e-8 || F.f_nB < -1e-8 || F.f_nP < -1e-8)
      throw RejectedSolutionError("extract: negative normal force at step " +
                                  std::to_string(k));
    if (F.f_nA > d.f_u + 1e-6 || F.f_nB > d.f_u + 1e-6 || F.f_nP > d.f_u + 1e-6)
      throw RejectedSolutionError("extract: normal force above the cap at step " +
                                  std::to_string(k));
    const auto eqr = equilibrium_residual(g, F, d.obj.m, 0.0, d.obj.g_mag);
    worst_eq = std::max({worst_eq, std::abs(eqr(0)), std::abs(eqr(1)),
                         std::abs(eqr(2)) / d.L});
    const auto slip = slip_equalities(F, d.obj);
    worst_eq = std::max({worst_eq, std::abs(slip(0)), std::abs(slip(1))});
    const auto cone = friction_cone_residuals(F, d.obj);
    if (cone.minCoeff() < -1e-8)
      throw RejectedSolutionError("extract: friction cone violated at step " +
                                  std::to_string(k));

    SlipSlacks s;
    s.pdot_y_plus = std::max(z(sb + detail::SV_SP), 0.0);
    s.pdot_y_minus = std::max(z(sb + detail::SV_SM), 0.0);
    const double dAy = d.wbar * (std::cos(traj.theta[k + 1]) - std::cos(traj.theta[k]));
    const double dBx = d.wbar * (std::sin(traj.theta[k + 1]) - std::sin(traj.theta[k]));
    s.pdot_A_minus = std::max(-dAy, 0.0);
    s.pdot_A_plus = std::max(dAy, 0.0);
    s.pdot_B_plus = std::max(dBx, 0.0);
    s.pdot_B_minus = std::max(-dBx, 0.0);
    worst_comp = std::max(
        {worst_comp, s.pdot_y_plus * (d.obj.mu_P * F.f_nP - F.f_tP),
         s.pdot_y_minus * (d.obj.mu_P * F.f_nP + F.f_tP)});

    traj.controls[k] = {F.f_nP, F.f_tP};
    traj.forces[k] = F;
    traj.slips[k] = s;
  }
  if (worst_eq > eq_tol)
    throw RejectedSolutionError("extract: equilibrium residual " + std::to_string(worst_eq) +
                                " above tolerance");
  if (worst_comp > std::max(comp_tol, rep.final_delta))
    throw RejectedSolutionError("extract: complementarity residual above tolerance");

  if (d.robust()) {
    traj.worst_plus = kInf;
    traj.worst_minus = kInf;
    int arg_p = 0, arg_m = 0;
    for (int k = 0; k < d.N; ++k) {
      const int rb = d.rbase(k);
      const double ep = z(rb + detail::RV_EPSP), em = z(rb + detail::RV_EPSM);
      if (ep < traj.worst_plus) {
        traj.worst_plus = ep;
        arg_p = k;
      }
      if (em < traj.worst_minus) {
        traj.worst_minus = em;
        arg_m = k;
      }
    }
    const double near_cap = 0.999 * d.cap;
    traj.cap_active = z(d.rbase(arg_p) + detail::RV_EPSP) >= near_cap ||
                      z(d.rbase(arg_m) + detail::RV_EPSM) >= near_cap;
  }

  traj.stats.status = rep.converged() ? "converged" : "not-converged";
  traj.stats.iterations = rep.total_iterations;
  traj.stats.final_delta = rep.final_delta;
  traj.stats.eq_residual = worst_eq;
  traj.stats.comp_residual = std::max(worst_comp, rep.comp_residual);
  traj.stats.objective = rep.objective;
  traj.stats.runtime_s = rep.runtime_s;
  return traj;
}

/// Objective re-evaluated from an extracted trajectory; matches the
/// solver objective at a valid solution.
inline double nominal_objective(const Trajectory& traj, const OcpSpec& spec) {
  double f = 0.0;
  const double pg = std::isnan(spec.p_y_goal) ? 0.0 : spec.p_y_goal;
  for (int k = 0; k < traj.num_steps(); ++k) {
    const double dth = traj.theta[k] - spec.theta_goal;
    const double dpy = traj.p_y[k] - pg;
    f += spec.Q(0) * dth * dth + spec.Q(1) * dpy * dpy;
    f += spec.R(0) * traj.controls[k].f_nP * traj.controls[k].f_nP +
         spec.R(1) * traj.controls[k].f_tP * traj.controls[k].f_tP;
  }
  return f;
}

}  // namespace pivotal
