#pragma once

#include "dualsq/gossip.hpp"
#include "dualsq/problem.hpp"
#include "dualsq/trace.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <utility>
#include <vector>

namespace dualsq {

/// Modulus of strong convexity of
///   H(lambda) = sum_i (f_i + g_i)*(-A_i' lambda_i) + sum_i h*(lambda_i)/n + (rho/2) lambda' Cbig lambda
/// over the stacked multipliers; 0 when no strong-convexity source applies.
/// `mix` may be null when rho == 0.
inline double compute_mu_H(const ProblemInstance& pr, const Mixing* mix, double rho) {
  const double n = static_cast<double>(pr.n());
  switch (pr.case_tag()) {
    case CaseTag::hstar_strongly_convex:
      return pr.coupling().mu_hstar() / n;
    case CaseTag::local_full_row_rank:
      return pr.min_sigma2_over_L();
    case CaseTag::global_full_row_rank: {
      if (!(rho > 0.0) || mix == nullptr)
        throw ConfigError("rho>0 is the only option for instances relying on the global full-row-rank condition");
      // lambda_min(blkdiag(A_i A_i') + rho L_f (M kron I_p)) / L_f, by dense eigensolve.
      const Index p = pr.p();
      const Index np = static_cast<Index>(pr.n()) * p;
      const Mat M = mix->dense();
      const double Lf = pr.L_f();
      Mat G = Mat::Zero(np, np);
      for (std::size_t i = 0; i < pr.n(); ++i) {
        const Index oi = static_cast<Index>(i) * p;
        G.block(oi, oi, p, p) += pr.agent(i).A * pr.agent(i).A.transpose();
        for (std::size_t j = 0; j < pr.n(); ++j)
          G.block(oi, static_cast<Index>(j) * p, p, p).diagonal().array() += rho * Lf * M(i, j);
      }
      Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
      return std::max(0.0, es.eigenvalues()[0]) / Lf;
    }
    case CaseTag::general_convex:
      if (!(rho > 0.0)) throw ConfigError("general convex instances need rho > 0");
      return 0.0;
  }
  return 0.0;
}

struct SaddleConsts {
  double mu_f = 0.0;
  double sigma_max = 0.0;  // max_i sigma_max(A_i)
  double mu_H = 0.0;
  double L_phi = 0.0;
  double lambda_max_mix = 0.0;
  /// Part of the strong convexity of h*/n moved into the smooth part so the
  /// accelerated momentum sees it.
  double m_split = 0.0;
};

enum class HstarStep { prox, gradient };

struct Targets {
  double e_x = kInf;       // squared distance target for x
  double e_lambda = kInf;  // squared distance target for lambda
  bool convex = false;
  double eps = kInf;  // convex mode: r_lambda <= eps / sqrt(lambda_max_mix)

  static Targets strongly_convex(double ex, double el) { return {ex, el, false, kInf}; }
  static Targets convex_mode(double ex, double eps) { return {ex, kInf, true, eps}; }

  /// Per-agent share when n agents stop independently.
  Targets per_agent(std::size_t n) const {
    const double nn = static_cast<double>(n);
    return {e_x / (4.0 * nn), e_lambda / (4.0 * nn), convex, eps / (2.0 * std::sqrt(nn))};
  }
};

struct ErrorBounds {
  double bound_x = 0.0;
  double bound_lambda = 0.0;
};

/// Distance bounds to the saddle point from the two subdifferential residuals.
inline ErrorBounds error_bounds(double r_x, double r_lambda, const SaddleConsts& c) {
  if (!(c.mu_H > 0.0)) throw ConfigError("error_bounds: mu_H must be positive");
  if (!(c.mu_f > 0.0)) throw ConfigError("error_bounds: mu_f must be positive");
  const double s = c.sigma_max;
  ErrorBounds b;
  b.bound_lambda = r_lambda / c.mu_H + s * r_x / (c.mu_f * c.mu_H);
  b.bound_x = s * r_lambda / (c.mu_f * c.mu_H) + (1.0 / c.mu_f + s * s / (c.mu_f * c.mu_f * c.mu_H)) * r_x;
  return b;
}

inline bool accepts(double r_x, double r_lambda, const SaddleConsts& c, const Targets& t) {
  if (t.convex) return r_lambda <= t.eps / std::sqrt(c.lambda_max_mix) && r_x / c.mu_f <= std::sqrt(t.e_x);
  const ErrorBounds b = error_bounds(r_x, r_lambda, c);
  return b.bound_x <= std::sqrt(t.e_x) && b.bound_lambda <= std::sqrt(t.e_lambda);
}

/// Largest x-residual that still leaves room for the lambda part of the test.
inline double x_residual_allowance(const SaddleConsts& c, const Targets& t) {
  if (t.convex) return 0.5 * c.mu_f * std::sqrt(t.e_x);
  const double s = c.sigma_max;
  double a = std::sqrt(t.e_x) / (1.0 / c.mu_f + s * s / (c.mu_f * c.mu_f * c.mu_H));
  if (s > 0.0) a = std::min(a, std::sqrt(t.e_lambda) * c.mu_f * c.mu_H / s);
  return 0.5 * a;
}

/// min-max over (x, lambda) of
///   f(x) + g(x) + lambda' Abig x - ( sum_i h*(lambda_i)/n + (rho/2) lambda' Mbig lambda + lambda' z ),
/// with Mbig = mix kron I_p.
struct SaddleSubproblem {
  const ProblemInstance* problem = nullptr;
  const Mixing* mix = nullptr;  // may be null when rho == 0
  double rho = 0.0;
  BlockVec z;
  SaddleConsts consts;
  /// Per-agent constants, used when rho == 0 and the agents decouple.
  std::vector<SaddleConsts> agent_consts;
  HstarStep hstar_step = HstarStep::prox;

  bool decoupled() const { return rho == 0.0; }
};

inline SaddleConsts agent_saddle_consts(const ProblemInstance& pr, std::size_t i, HstarStep step) {
  const auto& a = pr.agent(i);
  const double n = static_cast<double>(pr.n());
  SaddleConsts c;
  c.mu_f = a.f.mu();
  c.sigma_max = a.sigma_max();
  c.mu_H = pr.case_tag() == CaseTag::local_full_row_rank ? a.sigma_min_row() * a.sigma_min_row() / a.f.L()
                                                         : pr.coupling().mu_hstar() / n;
  c.L_phi = a.sigma_max() * a.sigma_max() / a.f.mu() + pr.coupling().L_hstar() / n;
  if (step == HstarStep::prox) c.m_split = std::min(pr.coupling().mu_hstar() / n, 0.5 * c.L_phi);
  return c;
}

inline SaddleSubproblem make_subproblem(const ProblemInstance& pr, const Mixing* mix, double rho, BlockVec z,
                                        HstarStep step = HstarStep::prox, double mu_H = -1.0) {
  if (rho < 0.0) throw ConfigError("rho must be nonnegative");
  if (rho > 0.0 && mix == nullptr) throw ConfigError("rho > 0 needs a mixing operator");
  if (z.size() != pr.n()) throw DomainError("subproblem: z needs one block per agent");
  if (step == HstarStep::gradient && !pr.coupling().has_hstar_grad())
    throw ConfigError("gradient lambda-step needs a differentiable h*");
  SaddleSubproblem sp;
  sp.problem = &pr;
  sp.mix = mix;
  sp.rho = rho;
  sp.z = std::move(z);
  sp.hstar_step = step;
  const double n = static_cast<double>(pr.n());
  SaddleConsts& c = sp.consts;
  c.mu_f = pr.mu_f();
  c.sigma_max = pr.sigma_max_blockdiag();
  c.mu_H = mu_H >= 0.0 ? mu_H : compute_mu_H(pr, mix, rho);
  c.lambda_max_mix = mix ? mix->lambda_max() : 0.0;
  c.L_phi = pr.max_sigma2_over_mu() + rho * c.lambda_max_mix + pr.coupling().L_hstar() / n;
  if (step == HstarStep::prox) c.m_split = std::min(pr.coupling().mu_hstar() / n, 0.5 * c.L_phi);
  if (sp.decoupled()) {
    for (std::size_t i = 0; i < pr.n(); ++i) {
      sp.agent_consts.push_back(agent_saddle_consts(pr, i, step));
      sp.agent_consts.back().lambda_max_mix = c.lambda_max_mix;
    }
  }
  return sp;
}

// ---------------------------------------------------------------------------
// Per-agent kernels. Both the centralized driver and the simulated agents
// call exactly these, so the two paths agree to the last bit.
// ---------------------------------------------------------------------------
namespace kernel {

inline Vec tilt(const AgentLocalProblem& a, const Vec& v) { return a.A.transpose() * v; }

/// lambda_i^+ from the extrapolated point v_i, its mixed value and A_i x_i.
inline Vec lambda_step(const Coupling& h, double n, const SaddleConsts& c, HstarStep mode, double rho,
                       const Vec& v, const Vec* mixv, const Vec& z, const Vec& Ax) {
  const double alpha = 1.0 / c.L_phi;
  Vec g = z - Ax;
  if (rho > 0.0) g += rho * (*mixv);
  if (mode == HstarStep::gradient) {
    g += h.hstar_grad(v) / n;
    return v - alpha * g;
  }
  if (c.m_split > 0.0) {
    g += c.m_split * v;
    const double shrink = 1.0 - c.m_split * alpha;
    return h.hstar_prox(alpha / (shrink * n), (v - alpha * g) / shrink);
  }
  return h.hstar_prox(alpha / n, v - alpha * g);
}

inline Vec extrapolate(const Vec& now, const Vec& prev, double beta) { return now + beta * (now - prev); }

inline double x_residual_sq(const AgentLocalProblem& a, const Vec& x, const Vec& lambda) {
  const double r = a.g.subdiff_dist(x, a.f.grad(x) + a.A.transpose() * lambda);
  return r * r;
}

inline double lambda_residual_sq(const Coupling& h, double n, double rho, const Vec& lambda, const Vec* mixlam,
                                 const Vec& z, const Vec& Ax) {
  Vec u = Ax - z;
  if (rho > 0.0) u -= rho * (*mixlam);
  const double r = h.hstar_dist(lambda, u, 1.0 / n);
  return r * r;
}

inline double inner_beta(const SaddleConsts& c, int j) {
  if (c.mu_H > 0.0) {
    const double sk = std::sqrt(c.L_phi / c.mu_H);
    return (sk - 1.0) / (sk + 1.0);
  }
  return j / (j + 3.0);
}

/// Inner tolerance of the j-th x-step; summable in j.
inline double x_tol(double allowance, int j) {
  const double jj = j + 1.0;
  return allowance / (4.0 * jj * jj);
}

}  // namespace kernel

struct Residuals {
  double r_x = 0.0;
  double r_lambda = 0.0;
};

inline Residuals subproblem_residuals(const SaddleSubproblem& sp, const BlockVec& x, const BlockVec& lambda) {
  const ProblemInstance& pr = *sp.problem;
  if (x.size() != pr.n() || lambda.size() != pr.n()) throw DomainError("subproblem_residuals: dimension mismatch");
  const double n = static_cast<double>(pr.n());
  BlockVec mixlam;
  if (sp.rho > 0.0) mixlam = sp.mix->apply(lambda);
  double sx = 0.0, sl = 0.0;
  for (std::size_t i = 0; i < pr.n(); ++i) {
    const auto& a = pr.agent(i);
    sx += kernel::x_residual_sq(a, x[i], lambda[i]);
    sl += kernel::lambda_residual_sq(pr.coupling(), n, sp.rho, lambda[i], sp.rho > 0.0 ? &mixlam[i] : nullptr,
                                     sp.z[i], a.A * x[i]);
  }
  return {std::sqrt(sx), std::sqrt(sl)};
}

struct SolverCaps {
  int max_inner = 200000;
};

struct SubproblemSolution {
  BlockVec x;
  BlockVec lambda;
  double r_x = 0.0;
  double r_lambda = 0.0;
  int inner_iters = 0;
  Counters counters;
};

/// One agent's inner loop when rho == 0. `local_iters[s]` holds the local
/// gradient/prox count of step s.
struct AgentInnerRun {
  Vec x;
  Vec lambda;
  std::vector<int> local_iters;
};

inline AgentInnerRun solve_agent_decoupled(const ProblemInstance& pr, std::size_t i, const SaddleConsts& c,
                                           HstarStep mode, const Vec& z, Vec x, Vec lambda, const Targets& t,
                                           const SolverCaps& caps) {
  const auto& a = pr.agent(i);
  const auto& h = pr.coupling();
  const double n = static_cast<double>(pr.n());
  auto residuals = [&](const Vec& xx, const Vec& ll) {
    const double sx = kernel::x_residual_sq(a, xx, ll);
    const double sl = kernel::lambda_residual_sq(h, n, 0.0, ll, nullptr, z, a.A * xx);
    return std::pair<double, double>(std::sqrt(sx), std::sqrt(sl));
  };
  AgentInnerRun run;
  auto [rx, rl] = residuals(x, lambda);
  if (!accepts(rx, rl, c, t)) {
    const double allowance = x_residual_allowance(c, t);
    Vec v = lambda;
    double best = rx + rl;
    for (int j = 0;; ++j) {
      if (j >= caps.max_inner) throw IterationCapError("inner solver: iteration cap exceeded", best);
      LocalSolve ls = local_argmin(a, kernel::tilt(a, v), kernel::x_tol(allowance, j), &x);
      x = std::move(ls.x);
      Vec next = kernel::lambda_step(h, n, c, mode, 0.0, v, nullptr, z, a.A * x);
      v = kernel::extrapolate(next, lambda, kernel::inner_beta(c, j));
      lambda = std::move(next);
      run.local_iters.push_back(ls.iters);
      std::tie(rx, rl) = residuals(x, lambda);
      if (!std::isfinite(rx) || !std::isfinite(rl)) throw DivergenceError("inner solver: non-finite residual");
      best = std::min(best, rx + rl);
      if (accepts(rx, rl, c, t)) break;
    }
  }
  run.x = std::move(x);
  run.lambda = std::move(lambda);
  return run;
}

/// Folds per-agent runs into lockstep counts: step s costs the largest local
/// count among agents still running at s.
inline void fold_lockstep(const std::vector<std::vector<int>>& per_agent, SubproblemSolution& out) {
  std::size_t steps = 0;
  for (const auto& v : per_agent) steps = std::max(steps, v.size());
  for (std::size_t s = 0; s < steps; ++s) {
    int m = 0;
    for (const auto& v : per_agent)
      if (s < v.size()) m = std::max(m, v[s]);
    out.counters.oracle_A += m;
    out.counters.oracle_B += 3;
  }
  out.inner_iters = static_cast<int>(steps);
}

/// Accelerated dual proximal gradient on the saddle subproblem, warm-started
/// at (x0, lambda0), stopped by the residual-based distance bounds.
inline SubproblemSolution idapg_solve(const SaddleSubproblem& sp, const BlockVec& x0, const BlockVec& lambda0,
                                      const Targets& t, const SolverCaps& caps = {}) {
  const ProblemInstance& pr = *sp.problem;
  const auto& h = pr.coupling();
  const std::size_t N = pr.n();
  const double n = static_cast<double>(N);
  if (x0.size() != N || lambda0.size() != N) throw DomainError("idapg_solve: init needs one block per agent");
  if (!t.convex && !(sp.consts.mu_H > 0.0) && !sp.decoupled())
    throw ConfigError("idapg_solve: strongly convex targets need mu_H > 0");
  SubproblemSolution out;

  if (sp.decoupled()) {
    const Targets ta = t.per_agent(N);
    std::vector<std::vector<int>> counts(N);
    out.x.resize(N);
    out.lambda.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      AgentInnerRun r = solve_agent_decoupled(pr, i, sp.agent_consts[i], sp.hstar_step, sp.z[i], x0[i], lambda0[i],
                                              ta, caps);
      out.x[i] = std::move(r.x);
      out.lambda[i] = std::move(r.lambda);
      counts[i] = std::move(r.local_iters);
    }
    fold_lockstep(counts, out);
    const Residuals res = subproblem_residuals(sp, out.x, out.lambda);
    out.r_x = res.r_x;
    out.r_lambda = res.r_lambda;
    return out;
  }

  const SaddleConsts& c = sp.consts;
  BlockVec x = x0, lambda = lambda0;
  Residuals res = subproblem_residuals(sp, x, lambda);
  if (!accepts(res.r_x, res.r_lambda, c, t)) {
    const double allowance = x_residual_allowance(c, t) / std::sqrt(n);
    BlockVec v = lambda;
    double best = res.r_x + res.r_lambda;
    for (int j = 0;; ++j) {
      if (j >= caps.max_inner) throw IterationCapError("inner solver: iteration cap exceeded", best);
      const BlockVec mixv = sp.mix->apply(v);
      out.counters.comm_rounds += sp.mix->rounds();
      int local_max = 0;
      for (std::size_t i = 0; i < N; ++i) {
        LocalSolve ls = local_argmin(pr.agent(i), kernel::tilt(pr.agent(i), v[i]), kernel::x_tol(allowance, j), &x[i]);
        x[i] = std::move(ls.x);
        local_max = std::max(local_max, ls.iters);
      }
      const double beta = kernel::inner_beta(c, j);
      for (std::size_t i = 0; i < N; ++i) {
        Vec next = kernel::lambda_step(h, n, c, sp.hstar_step, sp.rho, v[i], &mixv[i], sp.z[i], pr.agent(i).A * x[i]);
        v[i] = kernel::extrapolate(next, lambda[i], beta);
        lambda[i] = std::move(next);
      }
      out.counters.oracle_A += local_max;
      out.counters.oracle_B += 3;
      ++out.inner_iters;
      res = subproblem_residuals(sp, x, lambda);
      if (!std::isfinite(res.r_x) || !std::isfinite(res.r_lambda))
        throw DivergenceError("inner solver: non-finite residual");
      best = std::min(best, res.r_x + res.r_lambda);
      if (accepts(res.r_x, res.r_lambda, c, t)) break;
    }
  }
  out.x = std::move(x);
  out.lambda = std::move(lambda);
  out.r_x = res.r_x;
  out.r_lambda = res.r_lambda;
  return out;
}

// ---------------------------------------------------------------------------

struct FEval {
  double value = 0.0;
  BlockVec grad;
  BlockVec lambda;
};

/// Value and gradient of
///   F(y) = -min_lambda [ H(lambda) + y' sqrt(Mbig) lambda ]
/// by an accurate solve of the corresponding saddle subproblem.
inline FEval eval_F_rho(const ProblemInstance& pr, const Mixing& mix, double rho, const BlockVec& y, double tol) {
  if (!(tol > 0.0)) throw DomainError("eval_F_rho: tol must be positive");
  const std::size_t N = pr.n();
  if (y.size() != N) throw DomainError("eval_F_rho: y needs one block per agent");
  const Mat S = sqrt_psd(mix.dense());
  auto apply_S = [&](const BlockVec& b) {
    BlockVec out(N, Vec::Zero(pr.p()));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) out[i] += S(i, j) * b[j];
    return out;
  };
  SaddleSubproblem sp = make_subproblem(pr, &mix, rho, apply_S(y));
  if (!(sp.consts.mu_H > 0.0)) throw ConfigError("eval_F_rho: the inner minimum needs a strongly convex dual");
  BlockVec x0(N), l0 = zero_blocks(N, pr.p());
  for (std::size_t i = 0; i < N; ++i) x0[i] = Vec::Zero(pr.agent(i).dim());
  const SubproblemSolution sol = idapg_solve(sp, x0, l0, Targets::strongly_convex(tol * tol, tol * tol));
  const BlockVec& lam = sol.lambda;

  const double n = static_cast<double>(N);
  double H = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& a = pr.agent(i);
    const Vec w = a.A.transpose() * lam[i];
    const Vec xi = local_argmin(a, w, std::max(1e-14, 1e-3 * tol), &sol.x[i]).x;
    H += -(a.f.value(xi) + a.g.value(xi) + w.dot(xi));
    H += pr.coupling().hstar_value(lam[i]) / n;
    H += sp.z[i].dot(lam[i]);
  }
  if (rho > 0.0) {
    const BlockVec ml = mix.apply(lam);
    for (std::size_t i = 0; i < N; ++i) H += 0.5 * rho * lam[i].dot(ml[i]);
  }
  FEval out;
  out.value = -H;
  out.grad = apply_S(lam);
  for (auto& g : out.grad) g = -g;
  out.lambda = lam;
  return out;
}

}  // namespace dualsq
