#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace pivotal {

using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sparse triplet pattern; duplicate (row, col) entries are summed.
using SparsityPattern = std::vector<std::pair<int, int>>;

/// Generic smooth constrained problem with optional complementarity
/// structure. Inequalities are feasible when nonnegative. Each
/// complementarity pair (i, j) names two inequality rows whose product is
/// driven to zero through the relaxation homotopy.
struct NlpProblem {
  std::string name;
  int num_vars{0};
  VectorXd lb, ub;
  VectorXd x0;

  int num_eq{0};
  int num_ineq{0};
  std::function<void(const VectorXd&, VectorXd&)> eval_eq;
  std::function<void(const VectorXd&, VectorXd&)> eval_ineq;
  std::function<double(const VectorXd&, VectorXd*)> eval_objective;

  SparsityPattern eq_jac_pattern;
  std::function<void(const VectorXd&, VectorXd&)> eval_eq_jac;
  SparsityPattern ineq_jac_pattern;
  std::function<void(const VectorXd&, VectorXd&)> eval_ineq_jac;

  // Lower-triangle entries of sigma*hess(f) + sum y_eq*hess(c_eq)
  //                                         + sum y_ineq*hess(c_ineq).
  SparsityPattern hess_pattern;
  std::function<void(const VectorXd&, double, const VectorXd&, const VectorXd&, VectorXd&)>
      eval_hess;

  std::vector<std::pair<int, int>> complementarity_pairs;
};

struct SolverOptions {
  double tol_stat{1e-6};
  double tol_feas{1e-8};
  double tol_comp{1e-6};
  std::vector<double> delta_schedule{1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  int max_iter_per_stage{400};
  double mu_init{1e-2};
  double bound_push{1e-3};
  int verbosity{-1};  // -1: read PIVOTAL_LOG, 0 silent, 1 stage lines, 2 iterations
};

struct SolveReport {
  enum class Status { Converged, MaxIter, Infeasible, Singular };
  Status status{Status::MaxIter};
  std::string message;
  std::vector<int> stage_iterations;
  int total_iterations{0};
  double final_delta{0.0};
  double kkt_residual{kInf};
  double eq_residual{kInf};
  double ineq_violation{kInf};
  double comp_residual{kInf};
  double objective{kInf};
  double runtime_s{0.0};
  VectorXd solution;
  VectorXd y_eq;    // equality multipliers
  VectorXd y_ineq;  // inequality multipliers (nonnegative, user rows only)

  bool converged() const { return status == Status::Converged; }
};

namespace detail {

inline int env_verbosity() {
  const char* v = std::getenv("PIVOTAL_LOG");
  if (!v) return 0;
  return std::atoi(v);
}

/// Problem augmented with one relaxed product row per complementarity
/// pair: delta - c_i*c_j >= 0. Patterns are prepared once; values follow
/// the user's inequality evaluations.
struct AugmentedProblem {
  const NlpProblem* p{nullptr};
  double delta{0.0};

  int m_ineq_aug{0};
  // Per user inequality row: the positions/columns of its jacobian entries.
  std::vector<std::vector<int>> row_entry_pos;
  std::vector<std::vector<int>> row_entry_col;

  explicit AugmentedProblem(const NlpProblem& prob) : p(&prob) {
    m_ineq_aug = prob.num_ineq + static_cast<int>(prob.complementarity_pairs.size());
    row_entry_pos.resize(prob.num_ineq);
    row_entry_col.resize(prob.num_ineq);
    for (int k = 0; k < static_cast<int>(prob.ineq_jac_pattern.size()); ++k) {
      const auto [r, c] = prob.ineq_jac_pattern[k];
      row_entry_pos[r].push_back(k);
      row_entry_col[r].push_back(c);
    }
  }

  void eval_ineq(const VectorXd& z, VectorXd& ci) const {
    ci.resize(m_ineq_aug);
    VectorXd user(p->num_ineq);
    if (p->num_ineq > 0) p->eval_ineq(z, user);
    ci.head(p->num_ineq) = user;
    for (int q = 0; q < static_cast<int>(p->complementarity_pairs.size()); ++q) {
      const auto [i, j] = p->complementarity_pairs[q];
      ci(p->num_ineq + q) = delta - user(i) * user(j);
    }
  }
};

struct Barrier {
  std::vector<int> lo_idx, up_idx;  // variables with finite bounds
};

}  // namespace detail

/// Primal-dual interior-point solver with a product-bound relaxation
/// homotopy over the complementarity pairs. Deterministic: fixed
/// iteration order, no randomized pivoting.
class InteriorPointSolver {
 public:
  explicit InteriorPointSolver(SolverOptions opts = {}) : opts_(opts) {
    if (opts_.verbosity < 0) opts_.verbosity = detail::env_verbosity();
  }

  SolveReport solve(const NlpProblem& prob) const {
    const auto t_start = std::chrono::steady_clock::now();
    SolveReport rep;
    rep.solution = prob.x0;

    std::vector<double> schedule = opts_.delta_schedule;
    if (prob.complementarity_pairs.empty()) schedule = {0.0};

    detail::AugmentedProblem aug(prob);
    State st = init_state(prob, aug);

    bool all_ok = true;
    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
      aug.delta = schedule[stage];
      st.mu = stage == 0 ? opts_.mu_init
                         : std::clamp(10.0 * aug.delta, 1e-7, opts_.mu_init);
      reset_slacks(prob, aug, st, stage == 0);
      const bool last = stage + 1 == schedule.size();
      const int iters = run_stage(prob, aug, st, last, rep);
      rep.stage_iterations.push_back(iters);
      rep.total_iterations += iters;
      if (iters < 0) {
        all_ok = false;
        rep.message = "stage " + std::to_string(stage) + " (delta=" +
                      std::to_string(aug.delta) + ") did not converge";
        break;
      }
      if (opts_.verbosity >= 1)
        std::printf("[pivotal] %-18s stage %zu delta=%.1e iters=%d obj=%.8g feas=%.2e\n",
                    prob.name.c_str(), stage, aug.delta, iters, st.f, st.feas);
    }

    finalize_report(prob, aug, st, rep, all_ok);
    rep.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
  }

  /// Compares the hand-coded jacobians and objective gradient against
  /// central finite differences at one point; returns the worst relative
  /// error.
  static double check_derivatives(const NlpProblem& prob, const VectorXd& z,
                                  double step = 1e-6) {
    const int n = prob.num_vars;
    double worst = 0.0;
    const auto rel = [](double fd, double an) {
      return std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
    };

    Eigen::MatrixXd Je = Eigen::MatrixXd::Zero(prob.num_eq, n);
    if (prob.num_eq > 0) {
      VectorXd vals(prob.eq_jac_pattern.size());
      prob.eval_eq_jac(z, vals);
      for (int k = 0; k < static_cast<int>(prob.eq_jac_pattern.size()); ++k)
        Je(prob.eq_jac_pattern[k].first, prob.eq_jac_pattern[k].second) += vals(k);
    }
    Eigen::MatrixXd Ji = Eigen::MatrixXd::Zero(prob.num_ineq, n);
    if (prob.num_ineq > 0) {
      VectorXd vals(prob.ineq_jac_pattern.size());
      prob.eval_ineq_jac(z, vals);
      for (int k = 0; k < static_cast<int>(prob.ineq_jac_pattern.size()); ++k)
        Ji(prob.ineq_jac_pattern[k].first, prob.ineq_jac_pattern[k].second) += vals(k);
    }
    VectorXd grad(n);
    prob.eval_objective(z, &grad);

    VectorXd zp = z, zm = z;
    VectorXd ep(prob.num_eq), em(prob.num_eq), ip(prob.num_ineq), im(prob.num_ineq);
    for (int c = 0; c < n; ++c) {
      const double h = step * std::max(1.0, std::abs(z(c)));
      zp(c) = z(c) + h;
      zm(c) = z(c) - h;
      if (prob.num_eq > 0) {
        prob.eval_eq(zp, ep);
        prob.eval_eq(zm, em);
        for (int r = 0; r < prob.num_eq; ++r)
          worst = std::max(worst, rel((ep(r) - em(r)) / (2 * h), Je(r, c)));
      }
      if (prob.num_ineq > 0) {
        prob.eval_ineq(zp, ip);
        prob.eval_ineq(zm, im);
        for (int r = 0; r < prob.num_ineq; ++r)
          worst = std::max(worst, rel((ip(r) - im(r)) / (2 * h), Ji(r, c)));
      }
      const double fp = prob.eval_objective(zp, nullptr);
      const double fm = prob.eval_objective(zm, nullptr);
      worst = std::max(worst, rel((fp - fm) / (2 * h), grad(c)));
      zp(c) = z(c);
      zm(c) = z(c);
    }
    return worst;
  }

 private:
  struct State {
    VectorXd z;           // primal variables
    VectorXd s;           // slacks for augmented inequalities
    VectorXd y_eq;        // equality multipliers
    VectorXd lam;         // inequality dual (positive)
    VectorXd zl, zu;      // bound duals (positive where finite)
    detail::Barrier bar;
    double mu{1e-2};
    double f{0.0};
    double feas{kInf};
    // filter entries (violation, barrier objective) for the line search
    std::vector<std::pair<double, double>> filter;
  };

  SolverOptions opts_;
  mutable double last_alpha_{0.0};
  mutable int dual_only_streak_{0};

  State init_state(const NlpProblem& prob, const detail::AugmentedProblem& aug) const {
    State st;
    st.z = prob.x0;
    const int n = prob.num_vars;
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(prob.lb(i))) st.bar.lo_idx.push_back(i);
      if (std::isfinite(prob.ub(i))) st.bar.up_idx.push_back(i);
      // push the start strictly inside the box
      const double lo = prob.lb(i), hi = prob.ub(i);
      if (std::isfinite(lo) && std::isfinite(hi)) {
        const double pad = std::min(opts_.bound_push * std::max(1.0, hi - lo), 0.4 * (hi - lo));
        st.z(i) = std::clamp(st.z(i), lo + pad, hi - pad);
      } else if (std::isfinite(lo)) {
        st.z(i) = std::max(st.z(i), lo + opts_.bound_push);
      } else if (std::isfinite(hi)) {
        st.z(i) = std::min(st.z(i), hi - opts_.bound_push);
      }
    }
    st.mu = opts_.mu_init;
    st.y_eq = VectorXd::Zero(prob.num_eq);
    st.lam = VectorXd::Constant(aug.m_ineq_aug, 1.0);
    st.zl = VectorXd::Zero(n);
    st.zu = VectorXd::Zero(n);
    for (int i : st.bar.lo_idx) st.zl(i) = st.mu / (st.z(i) - prob.lb(i));
    for (int i : st.bar.up_idx) st.zu(i) = st.mu / (prob.ub(i) - st.z(i));
    return st;
  }

  void reset_slacks(const NlpProblem& prob, const detail::AugmentedProblem& aug, State& st,
                    bool first_stage) const {
    VectorXd ci;
    aug.eval_ineq(st.z, ci);
    st.s.resize(aug.m_ineq_aug);
    // keep already-feasible rows exactly feasible; only lift slacks off
    // nonpositive values so the reset injects no artificial violation
    const double floor = first_stage ? 1e-6 : std::max(1e-10, 0.01 * aug.delta);
    for (int i = 0; i < aug.m_ineq_aug; ++i) st.s(i) = std::max(ci(i), floor);
    if (st.lam.size() != aug.m_ineq_aug) st.lam = VectorXd::Constant(aug.m_ineq_aug, 1.0);
    for (int i = 0; i < aug.m_ineq_aug; ++i)
      st.lam(i) = std::clamp(st.mu / st.s(i), 1e-6, 1e6);
  }

  // One homotopy stage: barrier loop at fixed delta. Returns iterations
  // or -1 on failure.
  int run_stage(const NlpProblem& prob, const detail::AugmentedProblem& aug, State& st,
                bool last_stage, SolveReport& rep) const {
    const int n = prob.num_vars;
    const int me = prob.num_eq;
    const int mi = aug.m_ineq_aug;

    VectorXd ce(me), ci(mi), grad(n);
    VectorXd user_ci(prob.num_ineq), user_jac(prob.ineq_jac_pattern.size());
    VectorXd eq_jac(prob.eq_jac_pattern.size());
    st.filter.clear();

    double dw_last = 0.0;
    for (int it = 0; it < opts_.max_iter_per_stage; ++it) {
      // residuals at the current point
      if (me > 0) prob.eval_eq(st.z, ce);
      aug.eval_ineq(st.z, ci);
      if (prob.num_ineq > 0) prob.eval_ineq(st.z, user_ci);
      st.f = prob.eval_objective(st.z, &grad);
      if (me > 0) prob.eval_eq_jac(st.z, eq_jac);
      if (prob.num_ineq > 0) prob.eval_ineq_jac(st.z, user_jac);

      // dual residual: grad f + Je^T y + Ji^T yI - zl + zu, yI = -lam
      VectorXd rd = grad;
      for (int k = 0; k < static_cast<int>(prob.eq_jac_pattern.size()); ++k)
        rd(prob.eq_jac_pattern[k].second) += eq_jac(k) * st.y_eq(prob.eq_jac_pattern[k].first);
      add_ineq_jac_transpose_product(prob, aug, user_ci, user_jac, -st.lam, rd);
      for (int i : st.bar.lo_idx) rd(i) -= st.zl(i);
      for (int i : st.bar.up_idx) rd(i) += st.zu(i);

      const double sd = dual_scale(st);
      const double r_stat = rd.lpNorm<Eigen::Infinity>() / sd;
      const double r_eq = me > 0 ? ce.lpNorm<Eigen::Infinity>() : 0.0;
      const double r_slack = (ci - st.s).lpNorm<Eigen::Infinity>();
      double r_cmu = 0.0, r_c0 = 0.0;
      for (int i = 0; i < mi; ++i) {
        r_cmu = std::max(r_cmu, std::abs(st.s(i) * st.lam(i) - st.mu));
        r_c0 = std::max(r_c0, st.s(i) * st.lam(i));
      }
      for (int i : st.bar.lo_idx) {
        r_cmu = std::max(r_cmu, std::abs((st.z(i) - prob.lb(i)) * st.zl(i) - st.mu));
        r_c0 = std::max(r_c0, (st.z(i) - prob.lb(i)) * st.zl(i));
      }
      for (int i : st.bar.up_idx) {
        r_cmu = std::max(r_cmu, std::abs((prob.ub(i) - st.z(i)) * st.zu(i) - st.mu));
        r_c0 = std::max(r_c0, (prob.ub(i) - st.z(i)) * st.zu(i));
      }
      st.feas = std::max(r_eq, r_slack);

      if (opts_.verbosity >= 2)
        std::printf("  it %3d  mu=%.1e  stat=%.2e  feas=%.2e  cmu=%.2e  f=%-12.8g a=%.2e dw=%.1e\n",
                    it, st.mu, r_stat, st.feas, r_cmu, st.f, last_alpha_, dw_last);
      if (opts_.verbosity >= 4) {
        int arg = 0;
        rd.cwiseAbs().maxCoeff(&arg);
        std::printf("      rd[max@%d]=%.3e sd=%.2e |yE|=%.2e |lam|=%.2e |zl|=%.2e |zu|=%.2e\n",
                    arg, rd(arg), sd, st.y_eq.size() ? st.y_eq.lpNorm<Eigen::Infinity>() : 0.0,
                    st.lam.lpNorm<Eigen::Infinity>(), st.zl.lpNorm<Eigen::Infinity>(),
                    st.zu.lpNorm<Eigen::Infinity>());
      }

      // stage exit test
      const double tol_stat = last_stage ? opts_.tol_stat : std::max(opts_.tol_stat, 1e-5);
      const double tol_feas = last_stage ? opts_.tol_feas : std::max(opts_.tol_feas, 1e-8);
      if (r_stat <= tol_stat && st.feas <= tol_feas && r_c0 / sd <= 10.0 * tol_stat &&
          st.mu <= std::max(1e-9, tol_stat))
        return it;

      // barrier update
      const double e_mu = std::max({r_stat, st.feas, r_cmu / sd});
      if (e_mu <= 10.0 * st.mu) {
        st.mu = std::max(std::min(opts_.tol_stat / 10.0, 1e-9) * 0.1,
                         std::min(0.2 * st.mu, std::pow(st.mu, 1.5)));
        st.mu = std::max(st.mu, 1e-12);
        st.filter.clear();
      }

      // assemble and solve the primal-dual system, escalating the
      // inertia regularization until a usable direction appears; always
      // try the unregularized model first so good steps stay Newton steps
      VectorXd dz, ds, dy, dlam;
      bool ok = false;
      double dw = 0.0;
      for (int attempt = 0; attempt < 14; ++attempt) {
        if (compute_step(prob, aug, st, ce, ci, user_ci, user_jac, eq_jac, grad, dw, dz, ds, dy,
                         dlam)) {
          ok = true;
          break;
        }
        if (dw <= 0.0)
          dw = dw_last > 0.0 ? std::max(1e-8, dw_last / 3.0) : 1e-4;
        else
          dw *= 10.0;
      }
      if (!ok) return -1;
      dw_last = dw;

      // fraction-to-boundary limits
      const double tau = std::max(0.99, 1.0 - st.mu);
      double a_pri = 1.0, a_dual = 1.0;
      for (int i = 0; i < mi; ++i)
        if (ds(i) < 0.0) a_pri = std::min(a_pri, -tau * st.s(i) / ds(i));
      for (int i : st.bar.lo_idx)
        if (dz(i) < 0.0) a_pri = std::min(a_pri, -tau * (st.z(i) - prob.lb(i)) / dz(i));
      for (int i : st.bar.up_idx)
        if (dz(i) > 0.0) a_pri = std::min(a_pri, tau * (prob.ub(i) - st.z(i)) / dz(i));
      VectorXd dzl = VectorXd::Zero(n), dzu = VectorXd::Zero(n);
      for (int i : st.bar.lo_idx) {
        const double d = st.z(i) - prob.lb(i);
        dzl(i) = (st.mu - st.zl(i) * d - st.zl(i) * dz(i)) / d;
        if (dzl(i) < 0.0) a_dual = std::min(a_dual, -tau * st.zl(i) / dzl(i));
      }
      for (int i : st.bar.up_idx) {
        const double d = prob.ub(i) - st.z(i);
        dzu(i) = (st.mu - st.zu(i) * d + st.zu(i) * dz(i)) / d;
        if (dzu(i) < 0.0) a_dual = std::min(a_dual, -tau * st.zu(i) / dzu(i));
      }
      for (int i = 0; i < mi; ++i)
        if (dlam(i) < 0.0) a_dual = std::min(a_dual, -tau * st.lam(i) / dlam(i));

      // filter line search: a trial point must improve either the
      // constraint violation or the barrier objective, measured against
      // the current point and every remembered filter corner
      const double theta0 = (me > 0 ? ce.lpNorm<1>() : 0.0) + (ci - st.s).lpNorm<1>();
      const double phi0 = barrier_phi(prob, st, st.z, st.s, st.f);
      double dphi = grad.dot(dz);
      for (int i = 0; i < mi; ++i) dphi -= st.mu * ds(i) / st.s(i);
      for (int i : st.bar.lo_idx) dphi -= st.mu * dz(i) / (st.z(i) - prob.lb(i));
      for (int i : st.bar.up_idx) dphi += st.mu * dz(i) / (prob.ub(i) - st.z(i));

      const double theta_min = 1e-4 * std::max(1.0, theta0);
      constexpr double g_th = 1e-2, g_ph = 1e-5, eta = 1e-4;
      double alpha = a_pri;
      bool accepted = false;
      bool f_type_step = false;
      VectorXd z_try, s_try;
      for (int ls = 0; ls < 45; ++ls) {
        z_try = st.z + alpha * dz;
        s_try = st.s + alpha * ds;
        const auto [phi_t, theta_t] = phi_and_theta(prob, aug, st, z_try, s_try);
        if (std::isfinite(phi_t)) {
          bool filter_ok = true;
          for (const auto& [th_j, ph_j] : st.filter) {
            if (!(theta_t < th_j || phi_t < ph_j)) {
              filter_ok = false;
              break;
            }
          }
          if (filter_ok) {
            if (theta0 <= theta_min && dphi < 0.0) {
              // objective step: plain Armijo on the barrier function
              if (phi_t <= phi0 + eta * alpha * dphi) {
                accepted = true;
                f_type_step = true;
                break;
              }
            } else if (theta_t <= (1.0 - g_th) * theta0 || phi_t <= phi0 - g_ph * theta0) {
              accepted = true;
              break;
            }
          }
        }
        alpha *= 0.5;
      }
      if (opts_.verbosity >= 3)
        std::printf("      |dz|=%.2e |dy|=%.2e |dl|=%.2e a_pri=%.2e a_dual=%.2e th0=%.2e "
                    "dphi=%.2e acc=%d ftype=%d nfilt=%zu\n",
                    dz.lpNorm<Eigen::Infinity>(),
                    dy.size() ? dy.lpNorm<Eigen::Infinity>() : 0.0,
                    dlam.lpNorm<Eigen::Infinity>(), a_pri, a_dual, theta0, dphi,
                    int(accepted), int(f_type_step), st.filter.size());
      if (!accepted) {
        if (theta0 <= 10.0 * opts_.tol_feas && dual_only_streak_ < 8) {
          // the point is feasible but off-center: advance the duals alone
          ++dual_only_streak_;
          st.lam += a_dual * dlam;
          for (int i : st.bar.lo_idx) st.zl(i) = std::max(st.zl(i) + a_dual * dzl(i), 1e-14);
          for (int i : st.bar.up_idx) st.zu(i) = std::max(st.zu(i) + a_dual * dzu(i), 1e-14);
          continue;
        }
        // fall back to a pure feasibility restoration step
        if (!restore_feasibility(prob, aug, st)) return -1;
        st.filter.clear();
        dual_only_streak_ = 0;
        continue;
      }
      dual_only_streak_ = 0;
      if (!f_type_step)
        st.filter.emplace_back((1.0 - g_th) * theta0, phi0 - g_ph * theta0);

      last_alpha_ = alpha;
      st.z = z_try;
      st.s = s_try;
      // equality multipliers follow the accepted primal step, bound and
      // slack duals their own fraction-to-boundary step
      st.y_eq += alpha * dy;
      st.lam += a_dual * dlam;
      for (int i : st.bar.lo_idx) st.zl(i) = std::max(st.zl(i) + a_dual * dzl(i), 1e-14);
      for (int i : st.bar.up_idx) st.zu(i) = std::max(st.zu(i) + a_dual * dzu(i), 1e-14);
      // keep bound duals within a sane corridor of mu/distance
      const double kap = 1e10;
      for (int i : st.bar.lo_idx) {
        const double d = st.z(i) - prob.lb(i);
        st.zl(i) = std::clamp(st.zl(i), st.mu / (kap * d), kap * st.mu / d);
      }
      for (int i : st.bar.up_idx) {
        const double d = prob.ub(i) - st.z(i);
        st.zu(i) = std::clamp(st.zu(i), st.mu / (kap * d), kap * st.mu / d);
      }
    }
    return -1;
  }

  double dual_scale(const State& st) const {
    const double total = (st.y_eq.size() ? st.y_eq.lpNorm<1>() : 0.0) + st.lam.lpNorm<1>() +
                         st.zl.lpNorm<1>() + st.zu.lpNorm<1>();
    const double cnt = std::max<std::size_t>(
        1, st.y_eq.size() + st.lam.size() + st.bar.lo_idx.size() + st.bar.up_idx.size());
    return std::max(1.0, (total / cnt) / 100.0);
  }

  double barrier_phi(const NlpProblem& prob, const State& st, const VectorXd& z,
                     const VectorXd& s, double f) const {
    double phi = f;
    for (int i = 0; i < s.size(); ++i) {
      if (s(i) <= 0.0) return kInf;
      phi -= st.mu * std::log(s(i));
    }
    for (int i : st.bar.lo_idx) {
      const double d = z(i) - prob.lb(i);
      if (d <= 0.0) return kInf;
      phi -= st.mu * std::log(d);
    }
    for (int i : st.bar.up_idx) {
      const double d = prob.ub(i) - z(i);
      if (d <= 0.0) return kInf;
      phi -= st.mu * std::log(d);
    }
    return phi;
  }

  std::pair<double, double> phi_and_theta(const NlpProblem& prob,
                                          const detail::AugmentedProblem& aug, const State& st,
                                          const VectorXd& z, const VectorXd& s) const {
    VectorXd ce(prob.num_eq), ci;
    if (prob.num_eq > 0) prob.eval_eq(z, ce);
    aug.eval_ineq(z, ci);
    const double f = prob.eval_objective(z, nullptr);
    const double theta = (prob.num_eq > 0 ? ce.lpNorm<1>() : 0.0) + (ci - s).lpNorm<1>();
    return {barrier_phi(prob, st, z, s, f), theta};
  }

  // y^T * J_aug applied transposed: out += J_aug^T * y, where the
  // augmented rows use grad(delta - ci*cj) = -cj*grad(ci) - ci*grad(cj).
  void add_ineq_jac_transpose_product(const NlpProblem& prob,
                                      const detail::AugmentedProblem& aug,
                                      const VectorXd& user_ci, const VectorXd& user_jac,
                                      const VectorXd& y, VectorXd& out) const {
    // effective user-row weights: own multiplier plus folded product terms
    VectorXd w = y.head(prob.num_ineq);
    for (int q = 0; q < static_cast<int>(prob.complementarity_pairs.size()); ++q) {
      const auto [i, j] = prob.complementarity_pairs[q];
      const double yp = y(prob.num_ineq + q);
      w(i) += yp * (-user_ci(j));
      w(j) += yp * (-user_ci(i));
    }
    for (int k = 0; k < static_cast<int>(prob.ineq_jac_pattern.size()); ++k)
      out(prob.ineq_jac_pattern[k].second) += user_jac(k) * w(prob.ineq_jac_pattern[k].first);
  }

  bool compute_step(const NlpProblem& prob, const detail::AugmentedProblem& aug,
                    const State& st, const VectorXd& ce, const VectorXd& ci,
                    const VectorXd& user_ci, const VectorXd& user_jac, const VectorXd& eq_jac,
                    const VectorXd& grad, double dw, VectorXd& dz, VectorXd& ds, VectorXd& dy,
                    VectorXd& dlam) const {
    const int n = prob.num_vars;
    const int me = prob.num_eq;
    const int mi = aug.m_ineq_aug;
    const int dim = n + me + mi;
    const double dc = 1e-8;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(prob.hess_pattern.size() * 2 + prob.eq_jac_pattern.size() * 2 +
                  prob.ineq_jac_pattern.size() * 4 + dim);

    // Lagrangian Hessian with product-row multipliers folded into the
    // user inequality weights.
    if (prob.eval_hess) {
      VectorXd y_ineq_eff = -st.lam.head(prob.num_ineq);
      for (int q = 0; q < static_cast<int>(prob.complementarity_pairs.size()); ++q) {
        const auto [i, j] = prob.complementarity_pairs[q];
        const double yp = -st.lam(prob.num_ineq + q);
        y_ineq_eff(i) += yp * (-user_ci(j));
        y_ineq_eff(j) += yp * (-user_ci(i));
      }
      VectorXd hv(prob.hess_pattern.size());
      prob.eval_hess(st.z, 1.0, st.y_eq, y_ineq_eff, hv);
      for (int k = 0; k < static_cast<int>(prob.hess_pattern.size()); ++k) {
        const auto [r, c] = prob.hess_pattern[k];
        trips.emplace_back(r, c, hv(k));
        if (r != c) trips.emplace_back(c, r, hv(k));
      }
    }
    // outer-product curvature of the relaxed product rows
    for (int q = 0; q < static_cast<int>(prob.complementarity_pairs.size()); ++q) {
      const auto [i, j] = prob.complementarity_pairs[q];
      const double yp = -st.lam(prob.num_ineq + q);
      for (std::size_t a = 0; a < aug.row_entry_pos[i].size(); ++a) {
        const double gi = user_jac(aug.row_entry_pos[i][a]);
        const int ca = aug.row_entry_col[i][a];
        for (std::size_t b = 0; b < aug.row_entry_pos[j].size(); ++b) {
          const double gj = user_jac(aug.row_entry_pos[j][b]);
          const int cb = aug.row_entry_col[j][b];
          const double v = -yp * gi * gj;
          trips.emplace_back(ca, cb, v);
          if (ca != cb) trips.emplace_back(cb, ca, v);
        }
      }
    }

    // barrier diagonal and inertia regularization
    VectorXd diag = VectorXd::Constant(n, dw);
    for (int i : st.bar.lo_idx) diag(i) += st.zl(i) / (st.z(i) - prob.lb(i));
    for (int i : st.bar.up_idx) diag(i) += st.zu(i) / (prob.ub(i) - st.z(i));
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, diag(i));

    // equality jacobian blocks
    for (int k = 0; k < static_cast<int>(prob.eq_jac_pattern.size()); ++k) {
      const auto [r, c] = prob.eq_jac_pattern[k];
      trips.emplace_back(n + r, c, eq_jac(k));
      trips.emplace_back(c, n + r, eq_jac(k));
    }
    for (int r = 0; r < me; ++r) trips.emplace_back(n + r, n + r, -dc);

    // inequality jacobian blocks: user rows verbatim, product rows via
    // the chain rule on delta - ci*cj
    const auto add_ineq_entry = [&](int row, int col, double v) {
      trips.emplace_back(n + me + row, col, v);
      trips.emplace_back(col, n + me + row, v);
    };
    for (int k = 0; k < static_cast<int>(prob.ineq_jac_pattern.size()); ++k) {
      const auto [r, c] = prob.ineq_jac_pattern[k];
      add_ineq_entry(r, c, user_jac(k));
    }
    for (int q = 0; q < static_cast<int>(prob.complementarity_pairs.size()); ++q) {
      const auto [i, j] = prob.complementarity_pairs[q];
      const int row = prob.num_ineq + q;
      for (std::size_t a = 0; a < aug.row_entry_pos[i].size(); ++a)
        add_ineq_entry(row, aug.row_entry_col[i][a],
                       -user_ci(j) * user_jac(aug.row_entry_pos[i][a]));
      for (std::size_t a = 0; a < aug.row_entry_pos[j].size(); ++a)
        add_ineq_entry(row, aug.row_entry_col[j][a],
                       -user_ci(i) * user_jac(aug.row_entry_pos[j][a]));
    }
    for (int r = 0; r < mi; ++r)
      trips.emplace_back(n + me + r, n + me + r, -(st.s(r) / st.lam(r)) - dc);

    Eigen::SparseMatrix<double> K(dim, dim);
    K.setFromTriplets(trips.begin(), trips.end());

    // The regularized KKT matrix is quasi-definite, so an unpivoted LDLt
    // factorization exists and its inertia must come out as (n, me+mi);
    // anything else means the model needs more primal regularization.
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(K);
    if (ldlt.info() != Eigen::Success) return false;
    {
      const VectorXd d = ldlt.vectorD();
      int pos = 0, neg = 0;
      for (int i = 0; i < d.size(); ++i) {
        if (d(i) > 0.0)
          ++pos;
        else if (d(i) < 0.0)
          ++neg;
        else
          return false;
      }
      if (pos != n || neg != me + mi) return false;
      if (!d.allFinite()) return false;
    }

    // right-hand side
    VectorXd rhs(dim);
    VectorXd rz = grad;
    for (int k = 0; k < static_cast<int>(prob.eq_jac_pattern.size()); ++k)
      rz(prob.eq_jac_pattern[k].second) += eq_jac(k) * st.y_eq(prob.eq_jac_pattern[k].first);
    add_ineq_jac_transpose_product(prob, aug, user_ci, user_jac, -st.lam, rz);
    for (int i : st.bar.lo_idx) rz(i) -= st.mu / (st.z(i) - prob.lb(i));
    for (int i : st.bar.up_idx) rz(i) += st.mu / (prob.ub(i) - st.z(i));
    rhs.head(n) = -rz;
    if (me > 0) rhs.segment(n, me) = -ce;
    for (int i = 0; i < mi; ++i) rhs(n + me + i) = -(ci(i) - st.mu / st.lam(i));

    const VectorXd sol = ldlt.solve(rhs);
    if (!sol.allFinite()) return false;

    dz = sol.head(n);
    dy = me > 0 ? VectorXd(sol.segment(n, me)) : VectorXd();
    const VectorXd dyi = sol.tail(mi);  // step in y_I = -lam
    dlam = -dyi;
    ds = VectorXd(mi);
    for (int i = 0; i < mi; ++i)
      ds(i) = (st.mu - st.s(i) * st.lam(i) - st.s(i) * dlam(i)) / st.lam(i);

    // reject wildly diverging directions so regularization escalates
    if (dz.lpNorm<Eigen::Infinity>() > 1e10) return false;
    return true;
  }

  bool restore_feasibility(const NlpProblem& prob, const detail::AugmentedProblem& aug,
                           State& st) const {
    // Gauss-Newton descent on the constraint violation only; never
    // increases the violation it reports back.
    const int n = prob.num_vars;
    VectorXd ce(prob.num_eq), ci;
    VectorXd eq_jac(prob.eq_jac_pattern.size()), user_jac(prob.ineq_jac_pattern.size());
    VectorXd user_ci(prob.num_ineq);

    for (int round = 0; round < 10; ++round) {
      if (prob.num_eq > 0) {
        prob.eval_eq(st.z, ce);
        prob.eval_eq_jac(st.z, eq_jac);
      }
      aug.eval_ineq(st.z, ci);
      if (prob.num_ineq > 0) {
        prob.eval_ineq(st.z, user_ci);
        prob.eval_ineq_jac(st.z, user_jac);
      }
      const VectorXd rs = ci - st.s;
      const double v0 = (prob.num_eq > 0 ? ce.squaredNorm() : 0.0) + rs.squaredNorm();
      if (v0 < 1e-20) return true;

      // gradient of 0.5*||c||^2 in z and s
      VectorXd gz = VectorXd::Zero(n);
      for (int k = 0; k < static_cast<int>(prob.eq_jac_pattern.size()); ++k)
        gz(prob.eq_jac_pattern[k].second) += eq_jac(k) * ce(prob.eq_jac_pattern[k].first);
      add_ineq_jac_transpose_product(prob, aug, user_ci, user_jac, rs, gz);
      const VectorXd gs = -rs;

      double alpha = 1.0;
      bool ok = false;
      for (int ls = 0; ls < 30; ++ls) {
        VectorXd z_try = st.z - alpha * gz;
        VectorXd s_try = st.s - alpha * gs;
        // stay inside bounds and keep slacks positive
        for (int i : st.bar.lo_idx)
          z_try(i) = std::max(z_try(i), prob.lb(i) + 1e-10);
        for (int i : st.bar.up_idx)
          z_try(i) = std::min(z_try(i), prob.ub(i) - 1e-10);
        for (int i = 0; i < s_try.size(); ++i) s_try(i) = std::max(s_try(i), 1e-10);
        VectorXd ce2(prob.num_eq), ci2;
        if (prob.num_eq > 0) prob.eval_eq(z_try, ce2);
        aug.eval_ineq(z_try, ci2);
        const double v1 =
            (prob.num_eq > 0 ? ce2.squaredNorm() : 0.0) + (ci2 - s_try).squaredNorm();
        if (v1 < v0 * (1.0 - 1e-6 * alpha)) {
          st.z = z_try;
          st.s = s_try;
          ok = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!ok) return round > 0;
    }
    return true;
  }

  void finalize_report(const NlpProblem& prob, const detail::AugmentedProblem& aug, State& st,
                       SolveReport& rep, bool all_ok) const {
    const int me = prob.num_eq;
    VectorXd ce(me), ci, grad(prob.num_vars);
    if (me > 0) prob.eval_eq(st.z, ce);
    aug.eval_ineq(st.z, ci);
    rep.objective = prob.eval_objective(st.z, &grad);
    rep.solution = st.z;
    rep.y_eq = st.y_eq;
    rep.y_ineq = st.lam.head(prob.num_ineq);
    rep.final_delta = aug.delta;
    rep.eq_residual = me > 0 ? ce.lpNorm<Eigen::Infinity>() : 0.0;

    VectorXd user_ci(prob.num_ineq);
    if (prob.num_ineq > 0) prob.eval_ineq(st.z, user_ci);
    double viol = 0.0;
    for (int i = 0; i < prob.num_ineq; ++i) viol = std::max(viol, -user_ci(i));
    rep.ineq_violation = viol;
    double comp = 0.0;
    for (const auto& [i, j] : prob.complementarity_pairs)
      comp = std::max(comp, user_ci(i) * user_ci(j));
    rep.comp_residual = comp;

    VectorXd rd = grad;
    VectorXd eq_jac(prob.eq_jac_pattern.size()), user_jac(prob.ineq_jac_pattern.size());
    if (me > 0) {
      prob.eval_eq_jac(st.z, eq_jac);
      for (int k = 0; k < static_cast<int>(prob.eq_jac_pattern.size()); ++k)
        rd(prob.eq_jac_pattern[k].second) += eq_jac(k) * st.y_eq(prob.eq_jac_pattern[k].first);
    }
    if (prob.num_ineq > 0) prob.eval_ineq_jac(st.z, user_jac);
    add_ineq_jac_transpose_product(prob, aug, user_ci, user_jac, -st.lam, rd);
    for (int i : st.bar.lo_idx) rd(i) -= st.zl(i);
    for (int i : st.bar.up_idx) rd(i) += st.zu(i);
    rep.kkt_residual = rd.lpNorm<Eigen::Infinity>() / dual_scale(st);

    const bool feas_ok = rep.eq_residual <= 10 * opts_.tol_feas + 1e-12 &&
                         rep.ineq_violation <= 10 * opts_.tol_feas + 1e-12;
    const bool comp_ok =
        prob.complementarity_pairs.empty() || rep.comp_residual <= opts_.tol_comp;
    if (all_ok && feas_ok && comp_ok && rep.kkt_residual <= 10 * opts_.tol_stat)
      rep.status = SolveReport::Status::Converged;
    else if (!all_ok && !feas_ok)
      rep.status = SolveReport::Status::Infeasible;
    else
      rep.status = SolveReport::Status::MaxIter;
  }
};

}  // namespace pivotal
