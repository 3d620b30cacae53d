#pragma once

#include "dualsq/outer.hpp"

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <utility>
#include <vector>

namespace dualsq {

/// Synchronous message passing over a fixed undirected graph. Every call to
/// exchange_round is one network-wide round: each node sends one vector to
/// all of its neighbors.
class Network {
 public:
  /// Messages received by one node, sorted by sender.
  using Inbox = std::vector<std::pair<int, Vec>>;

  struct LogEntry {
    std::int64_t round;
    int from;
    int to;
    bool operator==(const LogEntry&) const = default;
  };

  explicit Network(const Graph& g, bool keep_log = false) : graph_(&g), keep_log_(keep_log) {}

  std::vector<Inbox> exchange_round(const BlockVec& payload) { return deliver(payload, rounds_); }

  /// Exchange used only for stopping tests; tallied apart from comm_rounds.
  std::vector<Inbox> monitoring_round(const BlockVec& payload) { return deliver(payload, monitoring_rounds_); }

  std::int64_t rounds() const { return rounds_; }
  std::int64_t monitoring_rounds() const { return monitoring_rounds_; }
  const std::vector<LogEntry>& log() const { return log_; }

 private:
  std::vector<Inbox> deliver(const BlockVec& payload, std::int64_t& counter) {
    const int n = graph_->n();
    if (static_cast<int>(payload.size()) != n) throw DomainError("exchange_round: need one payload per node");
    const std::int64_t round = rounds_ + monitoring_rounds_;
    std::vector<Inbox> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      for (int j : graph_->neighbors(i)) {
        out[i].emplace_back(j, payload[j]);
        if (keep_log_) log_.push_back({round, j, i});
      }
    ++counter;
    return out;
  }

  const Graph* graph_;
  bool keep_log_;
  std::int64_t rounds_ = 0;
  std::int64_t monitoring_rounds_ = 0;
  std::vector<LogEntry> log_;
};

/// One simulated agent. It owns its local problem data, its gossip row and
/// its iterates; everything else arrives through the network.
struct AgentRuntime {
  int id = 0;
  std::vector<int> neighbors;
  const AgentLocalProblem* local = nullptr;
  GossipRow row;
  Vec x, lambda, w, z, v;

  /// sum_j c_ij value_j over the agent's row, using its own value and the
  /// neighbors' messages only.
  Vec mix_from(const Vec& own, const Network::Inbox& inbox) const {
    return combine(row, [&](int j) -> const Vec& {
      if (j == id) return own;
      const auto it = std::lower_bound(inbox.begin(), inbox.end(), j,
                                       [](const auto& m, int key) { return m.first < key; });
      if (it == inbox.end() || it->first != j) throw GraphError("agent read a value from a non-neighbor");
      return it->second;
    });
  }
};

enum class Algorithm { id2a, mid2a };

namespace detail {

/// Applies the mixing operator across the agents: one exchange for plain
/// gossip, K exchanges for the Chebyshev recurrence.
inline BlockVec agents_mix(const std::vector<AgentRuntime>& agents, Network& net, const Mixing& mix,
                           const BlockVec& values, bool monitoring) {
  const std::size_t N = agents.size();
  auto round = [&](const BlockVec& payload) {
    return monitoring ? net.monitoring_round(payload) : net.exchange_round(payload);
  };
  auto mixed_once = [&](const BlockVec& payload) {
    const auto inbox = round(payload);
    BlockVec out(N);
    for (std::size_t i = 0; i < N; ++i) out[i] = agents[i].mix_from(payload[i], inbox[i]);
    return out;
  };
  if (!mix.accelerated()) return mixed_once(values);
  const ChebyshevParams& cp = mix.params();
  BlockVec prev = values;
  BlockVec Cx = mixed_once(prev);
  BlockVec cur(N);
  for (std::size_t i = 0; i < N; ++i) cur[i] = cheb_first(cp, prev[i], Cx[i]);
  for (int k = 1; k < cp.K; ++k) {
    Cx = mixed_once(cur);
    BlockVec next(N);
    for (std::size_t i = 0; i < N; ++i) next[i] = cheb_next(cp, cur[i], Cx[i], prev[i]);
    prev = std::move(cur);
    cur = std::move(next);
  }
  const double aK = cheb_scalar(cp, cp.K);
  BlockVec out(N);
  for (std::size_t i = 0; i < N; ++i) out[i] = cheb_output(values[i], cur[i], aK);
  return out;
}

inline BlockVec gather(const std::vector<AgentRuntime>& agents, Vec AgentRuntime::*field) {
  BlockVec out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.*field);
  return out;
}

/// Subproblem residuals computed agent by agent; the sums are a monitoring
/// reduction in agent order.
inline Residuals agents_residuals(std::vector<AgentRuntime>& agents, Network& net, const SaddleSubproblem& sp) {
  const ProblemInstance& pr = *sp.problem;
  const double n = static_cast<double>(agents.size());
  BlockVec mixlam;
  if (sp.rho > 0.0) mixlam = agents_mix(agents, net, *sp.mix, gather(agents, &AgentRuntime::lambda), true);
  double sx = 0.0, sl = 0.0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const AgentRuntime& a = agents[i];
    sx += kernel::x_residual_sq(*a.local, a.x, a.lambda);
    sl += kernel::lambda_residual_sq(pr.coupling(), n, sp.rho, a.lambda, sp.rho > 0.0 ? &mixlam[i] : nullptr, a.z,
                                     a.local->A * a.x);
  }
  return {std::sqrt(sx), std::sqrt(sl)};
}

/// Inner solve executed by the agents (the subproblem's z lives in each
/// agent's state). Returns the counters and the inner iteration count.
inline SubproblemSolution agents_inner_solve(std::vector<AgentRuntime>& agents, Network& net,
                                             const SaddleSubproblem& sp, const Targets& t, const SolverCaps& caps) {
  const ProblemInstance& pr = *sp.problem;
  const auto& h = pr.coupling();
  const std::size_t N = agents.size();
  const double n = static_cast<double>(N);
  SubproblemSolution out;

  if (sp.decoupled()) {
    const Targets ta = t.per_agent(N);
    std::vector<std::vector<int>> counts(N);
    for (std::size_t i = 0; i < N; ++i) {
      AgentRuntime& a = agents[i];
      AgentInnerRun r = solve_agent_decoupled(pr, i, sp.agent_consts[i], sp.hstar_step, a.z, a.x, a.lambda, ta, caps);
      a.x = std::move(r.x);
      a.lambda = std::move(r.lambda);
      counts[i] = std::move(r.local_iters);
    }
    fold_lockstep(counts, out);
    const Residuals res = agents_residuals(agents, net, sp);
    out.r_x = res.r_x;
    out.r_lambda = res.r_lambda;
    return out;
  }

  const SaddleConsts& c = sp.consts;
  Residuals res = agents_residuals(agents, net, sp);
  if (!accepts(res.r_x, res.r_lambda, c, t)) {
    const double allowance = x_residual_allowance(c, t) / std::sqrt(n);
    for (auto& a : agents) a.v = a.lambda;
    double best = res.r_x + res.r_lambda;
    for (int j = 0;; ++j) {
      if (j >= caps.max_inner) throw IterationCapError("inner solver: iteration cap exceeded", best);
      const BlockVec mixv = agents_mix(agents, net, *sp.mix, gather(agents, &AgentRuntime::v), false);
      int local_max = 0;
      for (auto& a : agents) {
        LocalSolve ls = local_argmin(*a.local, kernel::tilt(*a.local, a.v), kernel::x_tol(allowance, j), &a.x);
        a.x = std::move(ls.x);
        local_max = std::max(local_max, ls.iters);
      }
      const double beta = kernel::inner_beta(c, j);
      for (std::size_t i = 0; i < N; ++i) {
        AgentRuntime& a = agents[i];
        Vec next = kernel::lambda_step(h, n, c, sp.hstar_step, sp.rho, a.v, &mixv[i], a.z, a.local->A * a.x);
        a.v = kernel::extrapolate(next, a.lambda, beta);
        a.lambda = std::move(next);
      }
      out.counters.oracle_A += local_max;
      out.counters.oracle_B += 3;
      ++out.inner_iters;
      res = agents_residuals(agents, net, sp);
      if (!std::isfinite(res.r_x) || !std::isfinite(res.r_lambda))
        throw DivergenceError("inner solver: non-finite residual");
      best = std::min(best, res.r_x + res.r_lambda);
      if (accepts(res.r_x, res.r_lambda, c, t)) break;
    }
  }
  out.r_x = res.r_x;
  out.r_lambda = res.r_lambda;
  return out;
}

}  // namespace detail

/// Runs iD2A / MiD2A as per-agent state machines over a simulated network.
/// comm_rounds in the trace are the network's round counter; rounds spent on
/// stopping tests are reported in trace.monitoring_rounds.
inline RunResult run_decentralized(Algorithm algo, const ProblemInstance& pr, const GossipOperator& op,
                                   OuterConfig cfg, const BlockVec* x_ref = nullptr, Network* net_out = nullptr) {
  if (op.n() != static_cast<int>(pr.n())) throw ConfigError("graph size does not match the number of agents");
  cfg.use_chebyshev = algo == Algorithm::mid2a;
  OuterSetup s = prepare_outer(pr, op, cfg);
  s.sp.mix = &s.mix;
  s.theta = error_theta(cfg.c, s.params.kappa_F);
  const std::size_t N = pr.n();
  const double inv_L = 1.0 / s.params.L_F;

  Network local_net(op.graph());
  Network& net = net_out ? *net_out : local_net;

  std::vector<AgentRuntime> agents(N);
  for (std::size_t i = 0; i < N; ++i) {
    AgentRuntime& a = agents[i];
    a.id = static_cast<int>(i);
    a.neighbors = op.graph().neighbors(a.id);
    a.local = &pr.agent(i);
    a.row = op.row(a.id);
    a.x = Vec::Zero(a.local->dim());
    a.lambda = Vec::Zero(pr.p());
    a.w = Vec::Zero(pr.p());
    a.z = Vec::Zero(pr.p());
    a.v = Vec::Zero(pr.p());
  }

  {
    const SubproblemSolution warm = detail::agents_inner_solve(agents, net, s.sp, s.convex ? Targets::convex_mode(kInf, kInf) : Targets{}, cfg.caps);
    const BlockVec lam = detail::gather(agents, &AgentRuntime::lambda);
    const BlockVec ml = detail::agents_mix(agents, net, s.mix, lam, true);
    set_initial_levels(s, warm, mix_quadratic(lam, ml));
  }

  RunResult out;
  out.params = s.params;
  out.K = s.mix.rounds();
  out.convex_mode = s.convex;
  Counters total;
  DivergenceGuard guard(cfg);
  for (int k = 0; k < cfg.max_outer; ++k) {
    const SubproblemSolution sol = detail::agents_inner_solve(agents, net, s.sp, outer_targets(s, cfg, k), cfg.caps);
    total.oracle_A += sol.counters.oracle_A;
    total.oracle_B += sol.counters.oracle_B;

    const BlockVec ml = detail::agents_mix(agents, net, s.mix, detail::gather(agents, &AgentRuntime::lambda), false);
    const double beta = beta_schedule(s.convex, s.params.kappa_F, k);
    for (std::size_t i = 0; i < N; ++i) {
      AgentRuntime& a = agents[i];
      Vec wn = kernel::w_update(a.z, ml[i], inv_L);
      a.z = kernel::extrapolate(wn, a.w, beta);
      a.w = std::move(wn);
    }
    total.comm_rounds = net.rounds();

    const BlockVec x = detail::gather(agents, &AgentRuntime::x);
    const BlockVec lam = detail::gather(agents, &AgentRuntime::lambda);
    const Monitor m = monitor(pr, x, lam, x_ref);
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
      out.trace.x_history.push_back(x);
      out.trace.z_history.push_back(detail::gather(agents, &AgentRuntime::z));
    }
    if (outer_converged(m, cfg, x_ref != nullptr)) {
      out.converged = true;
      break;
    }
    guard.observe(x_ref ? m.gap : std::max(m.kkt.primal, m.kkt.dual));
  }
  out.x = detail::gather(agents, &AgentRuntime::x);
  out.lambda = detail::gather(agents, &AgentRuntime::lambda);
  out.trace.monitoring_rounds = net.monitoring_rounds();
  return out;
}

}  // namespace dualsq
