#pragma once

#include "dualsq/functions.hpp"

#include <algorithm>
#include <string>
#include <utility>

namespace dualsq {

/// Which strong-convexity source the instance relies on.
enum class CaseTag {
  hstar_strongly_convex,  // h* is mu_{h*}-strongly convex
  local_full_row_rank,    // g_i = 0 and every A_i has full row rank
  global_full_row_rank,   // g_i = 0 and A = [A_1..A_n] has full row rank (needs rho > 0)
  general_convex,         // none of the above: only the convex-mode guarantees apply
};

inline const char* to_string(CaseTag t) {
  switch (t) {
    case CaseTag::hstar_strongly_convex: return "hstar_strongly_convex";
    case CaseTag::local_full_row_rank: return "local_full_row_rank";
    case CaseTag::global_full_row_rank: return "global_full_row_rank";
    case CaseTag::general_convex: return "general_convex";
  }
  return "?";
}

inline CaseTag case_tag_from_string(const std::string& s) {
  if (s == "hstar_strongly_convex") return CaseTag::hstar_strongly_convex;
  if (s == "local_full_row_rank") return CaseTag::local_full_row_rank;
  if (s == "global_full_row_rank") return CaseTag::global_full_row_rank;
  if (s == "general_convex") return CaseTag::general_convex;
  throw ConfigError("unknown case tag: " + s);
}

/// Private data of one agent: f_i, g_i and A_i (p x d_i).
struct AgentLocalProblem {
  SmoothFn f;
  ProxFn g;
  Mat A;

  AgentLocalProblem(SmoothFn f_, ProxFn g_, Mat A_)
      : f(std::move(f_)), g(std::move(g_)), A(std::move(A_)) {
    if (f.dim() != g.dim() || A.cols() != f.dim())
      throw ConfigError("agent: dimensions of f, g and A disagree");
    Eigen::JacobiSVD<Mat> svd(A);
    const auto& sv = svd.singularValues();
    sigma_max_ = sv.size() ? sv[0] : 0.0;
    // Full row rank needs p <= d_i; the p-th singular value is then the smallest.
    sigma_min_row_ = (A.rows() <= A.cols() && sv.size()) ? sv[A.rows() - 1] : 0.0;
  }

  Index dim() const { return f.dim(); }
  double sigma_max() const { return sigma_max_; }
  /// sigma_p(A_i) when p <= d_i, else 0.
  double sigma_min_row() const { return sigma_min_row_; }

 private:
  double sigma_max_ = 0.0;
  double sigma_min_row_ = 0.0;
};

/// min sum_i f_i(x_i) + g_i(x_i) + h(sum_i A_i x_i)
class ProblemInstance {
 public:
  ProblemInstance(std::vector<AgentLocalProblem> agents, Coupling coupling, CaseTag tag)
      : agents_(std::move(agents)), coupling_(std::move(coupling)), tag_(tag) {
    validate();
  }

  const std::vector<AgentLocalProblem>& agents() const { return agents_; }
  const AgentLocalProblem& agent(std::size_t i) const { return agents_[i]; }
  const Coupling& coupling() const { return coupling_; }
  CaseTag case_tag() const { return tag_; }
  std::size_t n() const { return agents_.size(); }
  Index p() const { return coupling_.dim(); }

  Index d() const {
    Index s = 0;
    for (const auto& a : agents_) s += a.dim();
    return s;
  }

  std::vector<Index> dims() const {
    std::vector<Index> out;
    for (const auto& a : agents_) out.push_back(a.dim());
    return out;
  }

  double mu_f() const {
    double m = kInf;
    for (const auto& a : agents_) m = std::min(m, a.f.mu());
    return m;
  }

  double L_f() const {
    double m = 0.0;
    for (const auto& a : agents_) m = std::max(m, a.f.L());
    return m;
  }

  /// sigma_max of the block-diagonal stack diag(A_1, ..., A_n).
  double sigma_max_blockdiag() const {
    double m = 0.0;
    for (const auto& a : agents_) m = std::max(m, a.sigma_max());
    return m;
  }

  /// max_i sigma_max(A_i)^2 / mu_i
  double max_sigma2_over_mu() const {
    double m = 0.0;
    for (const auto& a : agents_) m = std::max(m, a.sigma_max() * a.sigma_max() / a.f.mu());
    return m;
  }

  /// min_i sigma_min(A_i)^2 / L_i
  double min_sigma2_over_L() const {
    double m = kInf;
    for (const auto& a : agents_) m = std::min(m, a.sigma_min_row() * a.sigma_min_row() / a.f.L());
    return m;
  }

  /// A = [A_1, ..., A_n]
  Mat stacked_A() const {
    Mat A(p(), d());
    Index off = 0;
    for (const auto& a : agents_) {
      A.middleCols(off, a.dim()) = a.A;
      off += a.dim();
    }
    return A;
  }

  bool all_g_zero() const {
    return std::all_of(agents_.begin(), agents_.end(), [](const auto& a) { return a.g.is_zero(); });
  }

 private:
  void validate() const {
    if (agents_.empty()) throw ConfigError("problem: at least one agent is required");
    for (const auto& a : agents_) {
      if (a.A.rows() != p()) throw ConfigError("problem: every A_i must have p rows");
      if (!(a.f.mu() > 0.0)) throw ConfigError("problem: every f_i must be strongly convex");
    }
    switch (tag_) {
      case CaseTag::hstar_strongly_convex:
        if (!(coupling_.mu_hstar() > 0.0))
          throw ConfigError("case hstar_strongly_convex: h* is not strongly convex");
        break;
      case CaseTag::local_full_row_rank:
        if (!all_g_zero()) throw ConfigError("case local_full_row_rank: requires g_i = 0");
        for (const auto& a : agents_)
          if (!(a.sigma_min_row() > 1e-12 * std::max(1.0, a.sigma_max())))
            throw ConfigError("case local_full_row_rank: some A_i lacks full row rank");
        break;
      case CaseTag::global_full_row_rank: {
        if (!all_g_zero()) throw ConfigError("case global_full_row_rank: requires g_i = 0");
        Eigen::JacobiSVD<Mat> svd(stacked_A());
        const auto& sv = svd.singularValues();
        if (p() > d() || !(sv[p() - 1] > 1e-12 * std::max(1.0, sv[0])))
          throw ConfigError("case global_full_row_rank: A lacks full row rank");
        break;
      }
      case CaseTag::general_convex:
        break;
    }
  }

  std::vector<AgentLocalProblem> agents_;
  Coupling coupling_;
  CaseTag tag_;
};

// ---------------------------------------------------------------------------

struct LocalSolve {
  Vec x;
  int iters = 0;        // gradient+prox pairs spent (closed form counts as one)
  double residual = 0;  // subdiff distance at x
};

inline constexpr int kLocalArgminCap = 10000;

/// Approximately solves min_x f(x) + g(x) + <w, x> to subdifferential
/// residual tol. Quadratic f with g = 0 is solved in closed form; everything
/// else runs accelerated proximal gradient warm-started at `warm`.
inline LocalSolve local_argmin(const AgentLocalProblem& agent, const Vec& w, double tol,
                               const Vec* warm = nullptr) {
  if (!(tol > 0.0)) throw DomainError("local_argmin: tol must be positive");
  if (w.size() != agent.dim()) throw DomainError("local_argmin: dimension mismatch");
  require_finite(w, "local_argmin");
  const SmoothFn& f = agent.f;
  const ProxFn& g = agent.g;

  if (f.is_quadratic() && g.kind() == ProxFn::Kind::zero) {
    LocalSolve out;
    out.x = f.solve(-(f.q() + w));
    out.iters = 1;
    out.residual = (f.grad(out.x) + w).norm();
    return out;
  }

  const double L = f.L();
  const double step = 1.0 / L;
  const double sq = std::sqrt(L / f.mu());
  const double momentum = (sq - 1.0) / (sq + 1.0);

  Vec x = warm ? *warm : Vec::Zero(agent.dim());
  if (!g.in_domain(x)) x = g.prox(step, x);
  Vec y = x;
  double best = kInf;
  Vec best_x = x;
  for (int it = 1; it <= kLocalArgminCap; ++it) {
    Vec x_next = g.prox(step, y - step * (f.grad(y) + w));
    y = x_next + momentum * (x_next - x);
    x = std::move(x_next);
    const Vec gx = f.grad(x) + w;
    const double res = g.subdiff_dist(x, gx);
    if (res < best) {
      best = res;
      best_x = x;
    }
    // Residuals near the rounding floor of the gradient cannot be improved.
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() *
                         (1.0 + gx.cwiseAbs().maxCoeff() + w.cwiseAbs().maxCoeff() +
                          L * x.cwiseAbs().maxCoeff());
    if (res <= std::max(tol, floor)) return {std::move(x), it, res};
  }
  throw IterationCapError("local_argmin: iteration cap exceeded", best);
}

struct KktResidual {
  double primal = 0.0;
  double dual = 0.0;
};

/// primal = sum_i dist(0, grad f_i(x_i) + A_i' lambda + dg_i(x_i)),
/// dual = min_{s in dh*(lambda)} ||A x - s||.
inline KktResidual kkt_residual(const ProblemInstance& pr, const BlockVec& x, const Vec& lambda) {
  if (x.size() != pr.n() || lambda.size() != pr.p())
    throw DomainError("kkt_residual: dimension mismatch");
  if (!pr.coupling().in_hstar_domain(lambda))
    throw DomainError("kkt_residual: lambda outside dom(h*)");
  KktResidual r;
  Vec Ax = Vec::Zero(pr.p());
  for (std::size_t i = 0; i < pr.n(); ++i) {
    const auto& a = pr.agent(i);
    if (x[i].size() != a.dim()) throw DomainError("kkt_residual: block size mismatch");
    r.primal += a.g.subdiff_dist(x[i], a.f.grad(x[i]) + a.A.transpose() * lambda);
    Ax += a.A * x[i];
  }
  r.dual = pr.coupling().hstar_dist(lambda, Ax);
  return r;
}

}  // namespace dualsq
