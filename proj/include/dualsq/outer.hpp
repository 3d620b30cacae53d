#pragma once

#include "dualsq/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <utility>

namespace dualsq {

struct RateParams {
  double mu_H = 0.0;
  double L_H = 0.0;
  double mu_F = 0.0;
  double L_F = 0.0;
  double kappa_F = 0.0;
  double rho = 0.0;
  CaseTag case_tag = CaseTag::general_convex;
};

/// Plug-in formulas. S = max_i sigma_max(A_i)^2/mu_i, Lh_n = L_{h*}/n,
/// (lmax, lmin) the extreme nonzero eigenvalues of the mixing operator.
inline RateParams rate_params_from(double S, double Lh_n, double mu_H, double lmax, double lmin, double rho,
                                   CaseTag tag) {
  RateParams r;
  r.case_tag = tag;
  r.rho = rho;
  r.mu_H = mu_H;
  r.L_H = S + rho * lmax + Lh_n;
  r.mu_F = lmin / r.L_H;
  const bool rho_only = tag == CaseTag::global_full_row_rank || tag == CaseTag::general_convex;
  if (rho_only) {
    if (!(rho > 0.0)) throw ConfigError("rho>0 is the only option for this instance");
    r.L_F = 1.0 / rho;
  } else {
    const double m = std::max(rho, mu_H / lmax);
    if (!(m > 0.0)) throw ConfigError("rate params: dual smoothness undefined (rho = 0 and mu_H = 0)");
    r.L_F = 1.0 / m;
  }
  r.kappa_F = r.L_F / r.mu_F;
  return r;
}

inline RateParams compute_case_params(const ProblemInstance& pr, const Mixing& mix, double rho) {
  const double n = static_cast<double>(pr.n());
  const double mu_H = compute_mu_H(pr, &mix, rho);
  return rate_params_from(pr.max_sigma2_over_mu(), pr.coupling().L_hstar() / n, mu_H, mix.lambda_max(),
                          mix.lambda_min_nz(), rho, pr.case_tag());
}

enum class RhoPolicy { zero, optimal, explicit_value };

/// (max_i sigma_max(A_i)^2/mu_i + L_{h*}/n) / lambda_max(mix)
inline double optimal_rho(const ProblemInstance& pr, double lambda_max_mix) {
  return (pr.max_sigma2_over_mu() + pr.coupling().L_hstar() / static_cast<double>(pr.n())) / lambda_max_mix;
}

inline double choose_rho(const ProblemInstance& pr, const Mixing& mix, RhoPolicy policy, double value = 0.0) {
  switch (policy) {
    case RhoPolicy::zero:
      if (pr.case_tag() == CaseTag::global_full_row_rank)
        throw ConfigError("rho>0 is the only option for instances relying on the global full-row-rank condition");
      if (pr.case_tag() == CaseTag::general_convex)
        throw ConfigError("rho>0 is the only option for general convex instances");
      return 0.0;
    case RhoPolicy::optimal:
      return optimal_rho(pr, mix.lambda_max());
    case RhoPolicy::explicit_value:
      if (!(value >= 0.0)) throw ConfigError("rho must be nonnegative");
      if (value == 0.0) return choose_rho(pr, mix, RhoPolicy::zero);
      return value;
  }
  return 0.0;
}

inline double beta_schedule(bool convex, double kappa_F, int k) {
  if (convex) return k / (k + 3.0);
  if (!(kappa_F >= 1.0)) throw DomainError("beta_schedule: kappa_F must be >= 1");
  const double s = std::sqrt(kappa_F);
  return (s - 1.0) / (s + 1.0);
}

/// Contraction factor of the inexactness schedule.
inline double error_theta(double c, double kappa_F) { return 1.0 - 1.0 / (c * std::sqrt(kappa_F)); }

inline constexpr double kErrorFloor = 1e-30;

struct ErrorLevels {
  double e_x = 0.0;
  double e_lambda = 0.0;
};

/// First-iteration error levels from a warm solution (lambda~, residuals r~):
///   Cb = (lambda~' M lambda~ + (lmax/mu_H^2)(r~_lambda + sigma r~_x/mu_f)^2) / (2 mu_F)
///   e_lambda = (mu_F/lmax)(sqrt(theta) - sqrt(1 - 1/sqrt(kappa_F)))^2 Cb
///   e_x = (sigma/mu_f)^2 e_lambda
inline ErrorLevels initial_error_levels(const RateParams& p, double theta, double lam_quad, double r_x,
                                        double r_lambda, const SaddleConsts& c, double lmax) {
  const double t = r_lambda + c.sigma_max * r_x / c.mu_f;
  const double Cb = (lam_quad + lmax / (p.mu_H * p.mu_H) * t * t) / (2.0 * p.mu_F);
  const double gapf = std::sqrt(theta) - std::sqrt(1.0 - 1.0 / std::sqrt(p.kappa_F));
  ErrorLevels e;
  e.e_lambda = p.mu_F / lmax * gapf * gapf * Cb;
  e.e_x = c.sigma_max * c.sigma_max / (c.mu_f * c.mu_f) * e.e_lambda;
  e.e_lambda = std::max(e.e_lambda, kErrorFloor);
  e.e_x = std::max(e.e_x, kErrorFloor);
  return e;
}

/// Convex mode: eps_1 = sqrt(lambda~' M lambda~) + sqrt(lmax)(r~_lambda + sigma r~_x/mu_f),
/// e_x1 = (sigma/mu_f)^2 eps_1^2 / lmax.
inline std::pair<double, double> initial_convex_levels(double lam_quad, double r_x, double r_lambda,
                                                       const SaddleConsts& c, double lmax) {
  const double eps = std::sqrt(lam_quad) + std::sqrt(lmax) * (r_lambda + c.sigma_max * r_x / c.mu_f);
  const double ex = c.sigma_max * c.sigma_max / (c.mu_f * c.mu_f) * eps * eps / lmax;
  return {std::max(eps, kErrorFloor), std::max(ex, kErrorFloor)};
}

struct OuterConfig {
  enum class Mode { automatic, convex, strongly_convex };
  Mode mode = Mode::automatic;
  RhoPolicy rho_policy = RhoPolicy::optimal;
  double rho_value = 0.0;
  double c = 2.0;
  double delta = 1.0;
  int max_outer = 1000;
  double target_gap = 1e-6;
  /// When positive, also require max(primal, dual) KKT residual <= target_kkt.
  double target_kkt = 0.0;
  bool use_chebyshev = false;
  bool dense_spectra = false;
  HstarStep hstar_step = HstarStep::prox;
  SolverCaps caps;
  bool store_iterates = false;
  double divergence_factor = 10.0;
  int divergence_window = 50;
};

struct RunResult {
  BlockVec x;
  BlockVec lambda;
  RunTrace trace;
  RateParams params;
  int K = 1;
  bool convex_mode = false;
  bool converged = false;
};

namespace kernel {

inline Vec w_update(const Vec& z, const Vec& mixlam, double inv_L) { return z + inv_L * mixlam; }

}  // namespace kernel

struct Monitor {
  double gap = 0.0;
  KktResidual kkt;
  double consensus = 0.0;
};

inline Vec row_mean(const BlockVec& b) {
  Vec m = b.front();
  for (std::size_t i = 1; i < b.size(); ++i) m += b[i];
  return m / static_cast<double>(b.size());
}

/// Gap against x_ref (relative to ||x_ref||, absolute if x_ref = 0), KKT at
/// the row mean of lambda, and the spread of lambda around that mean.
inline Monitor monitor(const ProblemInstance& pr, const BlockVec& x, const BlockVec& lambda, const BlockVec* x_ref) {
  Monitor m;
  const Vec mean = row_mean(lambda);
  m.kkt = kkt_residual(pr, x, mean);
  double s = 0.0;
  for (const auto& l : lambda) s += (l - mean).squaredNorm();
  m.consensus = std::sqrt(s);
  if (x_ref) {
    const double ref = std::sqrt(squared_norm(*x_ref));
    m.gap = distance(x, *x_ref) / (ref > 0.0 ? ref : 1.0);
  } else {
    m.gap = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

inline bool outer_converged(const Monitor& m, const OuterConfig& cfg, bool have_ref) {
  const double kkt = std::max(m.kkt.primal, m.kkt.dual);
  const bool primary = have_ref ? m.gap <= cfg.target_gap : kkt <= cfg.target_gap;
  return primary && (cfg.target_kkt <= 0.0 || kkt <= cfg.target_kkt);
}

/// Tracks the divergence guard: gap above factor * first gap for `window`
/// consecutive iterations.
class DivergenceGuard {
 public:
  explicit DivergenceGuard(const OuterConfig& cfg) : factor_(cfg.divergence_factor), window_(cfg.divergence_window) {}

  void observe(double value) {
    if (!std::isfinite(value)) throw DivergenceError("outer loop: non-finite iterate");
    if (!have_first_) {
      first_ = value;
      have_first_ = true;
      return;
    }
    streak_ = value > factor_ * first_ ? streak_ + 1 : 0;
    if (streak_ >= window_) throw DivergenceError("outer loop: gap stayed above the divergence threshold");
  }

 private:
  double factor_;
  int window_;
  double first_ = 0.0;
  bool have_first_ = false;
  int streak_ = 0;
};

/// Everything fixed before the first outer step.
struct OuterSetup {
  Mixing mix;
  double rho = 0.0;
  RateParams params;
  bool convex = false;
  SaddleSubproblem sp;
  double theta = 0.0;
  ErrorLevels first;  // strongly convex mode
  double eps1 = 0.0;  // convex mode
  double ex1 = 0.0;   // convex mode
};

inline OuterSetup prepare_outer(const ProblemInstance& pr, const GossipOperator& op, const OuterConfig& cfg) {
  if (!(cfg.c > 1.0)) throw ConfigError("c must exceed 1");
  if (!(cfg.delta > 0.0)) throw ConfigError("delta must be positive");
  OuterSetup s;
  s.mix = cfg.use_chebyshev ? Mixing::chebyshev(op, cfg.dense_spectra) : Mixing::plain(op);
  s.rho = choose_rho(pr, s.mix, cfg.rho_policy, cfg.rho_value);
  s.params = compute_case_params(pr, s.mix, s.rho);
  switch (cfg.mode) {
    case OuterConfig::Mode::automatic: s.convex = !(s.params.mu_H > 0.0); break;
    case OuterConfig::Mode::convex: s.convex = true; break;
    case OuterConfig::Mode::strongly_convex:
      if (!(s.params.mu_H > 0.0)) throw ConfigError("strongly convex mode needs mu_H > 0");
      s.convex = false;
      break;
  }
  const std::size_t N = pr.n();
  s.sp = make_subproblem(pr, &s.mix, s.rho, zero_blocks(N, pr.p()), cfg.hstar_step, s.params.mu_H);
  return s;
}

inline BlockVec zero_primal(const ProblemInstance& pr) {
  BlockVec x(pr.n());
  for (std::size_t i = 0; i < pr.n(); ++i) x[i] = Vec::Zero(pr.agent(i).dim());
  return x;
}

inline double mix_quadratic(const BlockVec& lambda, const BlockVec& mixlam) {
  double s = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) s += lambda[i].dot(mixlam[i]);
  return s;
}

/// Sets the first error levels from the warm solution at z = 0.
inline void set_initial_levels(OuterSetup& s, const SubproblemSolution& warm, double lam_quad) {
  const double lmax = s.mix.lambda_max();
  if (s.convex) {
    std::tie(s.eps1, s.ex1) = initial_convex_levels(lam_quad, warm.r_x, warm.r_lambda, s.sp.consts, lmax);
  } else {
    s.first = initial_error_levels(s.params, s.theta, lam_quad, warm.r_x, warm.r_lambda, s.sp.consts, lmax);
  }
}

/// Targets for the subproblem solved at outer step k (0-based).
inline Targets outer_targets(const OuterSetup& s, const OuterConfig& cfg, int k) {
  if (s.convex) {
    // e_x follows the squared lambda level, e_x1 / k^(4 + 2 delta); a slower
    // e_x1 / k^2 leaves x far less accurate than lambda.
    const double kk = k + 1.0;
    const double decay = std::pow(kk, 2.0 + cfg.delta);
    return Targets::convex_mode(std::max(s.ex1 / (decay * decay), kErrorFloor),
                                std::max(s.eps1 / decay, kErrorFloor));
  }
  const double f = std::pow(s.theta, k);
  return Targets::strongly_convex(std::max(s.first.e_x * f, kErrorFloor),
                                  std::max(s.first.e_lambda * f, kErrorFloor));
}

/// Outer recursion on the dual of the consensus-constrained dual:
///   (x, lambda) <- inexact saddle solve at z
///   w+ = z + (1/L_F) M lambda
///   z+ = w+ + beta (w+ - w)
/// with M the gossip matrix, or its Chebyshev polynomial when
/// cfg.use_chebyshev is set.
inline RunResult id2a(const ProblemInstance& pr, const GossipOperator& op, const OuterConfig& cfg,
                      const BlockVec* x_ref = nullptr) {
  if (op.n() != static_cast<int>(pr.n())) throw ConfigError("graph size does not match the number of agents");
  OuterSetup s = prepare_outer(pr, op, cfg);
  s.sp.mix = &s.mix;
  const std::size_t N = pr.n();
  const double inv_L = 1.0 / s.params.L_F;
  s.theta = error_theta(cfg.c, s.params.kappa_F);

  RunResult out;
  out.params = s.params;
  out.K = s.mix.rounds();
  out.convex_mode = s.convex;
  out.x = zero_primal(pr);
  out.lambda = zero_blocks(N, pr.p());
  BlockVec w = zero_blocks(N, pr.p());
  BlockVec z = zero_blocks(N, pr.p());

  {
    const SubproblemSolution warm = idapg_solve(s.sp, out.x, out.lambda, s.convex ? Targets::convex_mode(kInf, kInf) : Targets{}, cfg.caps);
    const BlockVec ml = s.mix.apply(warm.lambda);
    set_initial_levels(s, warm, mix_quadratic(warm.lambda, ml));
  }

  Counters total;
  DivergenceGuard guard(cfg);
  for (int k = 0; k < cfg.max_outer; ++k) {
    s.sp.z = z;
    SubproblemSolution sol = idapg_solve(s.sp, out.x, out.lambda, outer_targets(s, cfg, k), cfg.caps);
    total += sol.counters;
    out.x = std::move(sol.x);
    out.lambda = std::move(sol.lambda);

    const BlockVec ml = s.mix.apply(out.lambda);
    total.comm_rounds += s.mix.rounds();
    const double beta = beta_schedule(s.convex, s.params.kappa_F, k);
    for (std::size_t i = 0; i < N; ++i) {
      Vec wn = kernel::w_update(z[i], ml[i], inv_L);
      z[i] = kernel::extrapolate(wn, w[i], beta);
      w[i] = std::move(wn);
    }

    const Monitor m = monitor(pr, out.x, out.lambda, x_ref);
    TraceRow row;
    row.k = k + 1;
    row.gap = m.gap;
    row.primal_res = m.kkt.primal;
    row.dual_res = m.kkt.dual;
    row.consensus_res = m.consensus;
    row.comm_rounds = total.comm_rounds;
    row.oracle_A = total.oracle_A;
    row.oracle_B = total.oracle_B;
    row.inner_iters = sol.inner_iters;
    out.trace.rows.push_back(row);
    if (cfg.store_iterates) {
      out.trace.x_history.push_back(out.x);
      out.trace.z_history.push_back(z);
    }
    if (outer_converged(m, cfg, x_ref != nullptr)) {
      out.converged = true;
      break;
    }
    guard.observe(x_ref ? m.gap : std::max(m.kkt.primal, m.kkt.dual));
  }
  return out;
}

/// The same recursion with the gossip matrix replaced by its Chebyshev
/// polynomial P_K(C), K = max(1, floor(sqrt(kappa_C))).
inline RunResult mid2a(const ProblemInstance& pr, const GossipOperator& op, OuterConfig cfg,
                       const BlockVec* x_ref = nullptr) {
  cfg.use_chebyshev = true;
  return id2a(pr, op, cfg, x_ref);
}

}  // namespace dualsq
