// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace dualsq;
using dualsq::testing::Gen;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* what, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::printf("criterion %2d %s: %s (%.1f s) %s\n", id, o.pass ? "PASS" : "FAIL", what, seconds_since(t0),
              o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

/// Desk instance of a family with its reference solution.
struct Desk {
  std::string family;
  ProblemInstance pr;
  GossipOperator op;
  ReferenceSolution ref;
};

std::vector<Desk>& desk_instances() {
  static std::vector<Desk> all = [] {
    std::vector<Desk> out;
    for (const char* fam : {"elastic_net", "constrained_regression", "resource_allocation"}) {
      const ExperimentSpec s = default_spec(fam);
      ProblemInstance pr = generate(s);
      GossipOperator op = build_gossip(parse_graph_spec(s.graph_spec()));
      ReferenceSolution ref = reference_solve(pr, 1e-11);
      out.push_back(Desk{fam, std::move(pr), std::move(op), std::move(ref)});
    }
    return out;
  }();
  return all;
}

RunResult run(Algorithm algo, const ProblemInstance& pr, const GossipOperator& op, const OuterConfig& cfg,
              const BlockVec* ref) {
  return algo == Algorithm::id2a ? id2a(pr, op, cfg, ref) : mid2a(pr, op, cfg, ref);
}

const char* name(Algorithm a) { return a == Algorithm::id2a ? "iD2A" : "MiD2A"; }

double kkt_max(const TraceRow& r) { return std::max(r.primal_res, r.dual_res); }

/// Least-squares slope of log(gap) against k, returned as a per-iteration factor.
double fitted_rate(const std::vector<TraceRow>& rows) {
  double sk = 0, sy = 0, skk = 0, sky = 0;
  const double m = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double y = std::log(r.gap);
    sk += r.k;
    sy += y;
    skk += static_cast<double>(r.k) * r.k;
    sky += r.k * y;
  }
  return std::exp((m * sky - sk * sy) / (m * skk - sk * sk));
}

/// Nonzero spectrum of a symmetric matrix with a one-dimensional nullspace.
std::pair<double, double> nonzero_extremes(const Mat& M) {
  const Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(M, Eigen::EigenvaluesOnly).eigenvalues();
  return {ev[1], ev[ev.size() - 1]};
}

// ---------------------------------------------------------------------------

Outcome chebyshev_bound() {
  Gen g(101);
  const auto t0 = Clock::now();
  double worst_kappa = 0.0;
  int outside = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(5, 30);
    const GossipOperator op = build_gossip(erdos_renyi_connected(n, g.uniform(0.15, 0.5), 1000 + trial));
    const auto [cmin, cmax] = nonzero_extremes(op.dense());
    const double kappa_C = cmax / cmin;
    const int K = static_cast<int>(std::floor(std::sqrt(kappa_C)));
    if (K != chebyshev_rounds(op.kappa())) return {false, "K mismatch at trial " + std::to_string(trial)};
    // P_K(C) column by column through the message-passing recurrence
    Mat P(n, n);
    for (int j = 0; j < n; ++j) {
      BlockVec e(n, Vec::Zero(1));
      e[j][0] = 1.0;
      const BlockVec col = accelerated_gossip(e, op, K);
      for (int i = 0; i < n; ++i) P(i, j) = col[i][0];
    }
    P = (0.5 * (P + P.transpose())).eval();
    const auto [pmin, pmax] = nonzero_extremes(P);
    worst_kappa = std::max(worst_kappa, pmax / pmin);
    const auto [lo, hi] = chebyshev_eig_bounds(kappa_C, K);
    const double slack = 1e-9;
    if (pmin < lo - slack || pmax > hi + slack) ++outside;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_kappa <= 4.0 + 1e-9 && outside == 0 && secs < 10.0;
  o.detail = "max kappa(P_K)=" + fmt("%.6f", worst_kappa) + " (tol 4+1e-9), graphs outside bracket=" +
             std::to_string(outside) + ", runtime " + fmt("%.2f", secs) + " s (limit 10)";
  return o;
}

Outcome gradient_oracle() {
  Gen g(102);
  const auto t0 = Clock::now();
  double worst = 0.0;
  struct Shape {
    int n;
    Index p, di;
    bool sc;
  };
  const Shape shapes[5] = {{3, 2, 2, true}, {2, 3, 3, true}, {6, 1, 2, true}, {3, 2, 3, false}, {2, 2, 2, false}};
  for (const Shape& sh : shapes) {
    const ProblemInstance pr = dualsq::testing::smooth_instance(g, sh.n, sh.p, sh.di, sh.sc);
    const GossipOperator op = build_gossip(sh.n == 2 ? path_graph(2) : ring_graph(sh.n));
    const Mixing mix = Mixing::plain(op);
    for (double rho : {0.0, optimal_rho(pr, mix.lambda_max())}) {
      const BlockVec y = dualsq::testing::random_blocks(g, std::vector<Index>(sh.n, sh.p));
      const FEval F = eval_F_rho(pr, mix, rho, y, 1e-10);
      const double h = 1e-4;
      double num = 0.0, den = 0.0;
      for (int i = 0; i < sh.n; ++i)
        for (Index j = 0; j < sh.p; ++j) {
          BlockVec yp = y, ym = y;
          yp[i][j] += h;
          ym[i][j] -= h;
          const double fd =
              (eval_F_rho(pr, mix, rho, yp, 1e-10).value - eval_F_rho(pr, mix, rho, ym, 1e-10).value) / (2 * h);
          num += (fd - F.grad[i][j]) * (fd - F.grad[i][j]);
          den += F.grad[i][j] * F.grad[i][j];
        }
      worst = std::max(worst, std::sqrt(num / den));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 30.0, "max relative FD error " + fmt("%.2e", worst) + " (tol 1e-4), runtime " +
                                            fmt("%.2f", secs) + " s (limit 30)"};
}

Outcome solution_correctness() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  for (const Desk& D : desk_instances()) {
    for (Algorithm a : {Algorithm::id2a, Algorithm::mid2a}) {
      OuterConfig cfg;
      cfg.target_gap = 1e-6;
      cfg.target_kkt = 1e-5;
      cfg.max_outer = 20000;
      const RunResult r = run(a, D.pr, D.op, cfg, &D.ref.x_star);
      const TraceRow& last = r.trace.rows.back();
      const bool good = last.gap <= 1e-6 && kkt_max(last) <= 1e-5;
      ok = ok && good;
      d << D.family << '/' << name(a) << ": k=" << last.k << " gap=" << fmt("%.1e", last.gap)
        << " kkt=" << fmt("%.1e", kkt_max(last)) << "; ";
    }
  }
  const double secs = seconds_since(t0);
  d << "tol gap 1e-6, kkt 1e-5, runtime " << fmt("%.1f", secs) << " s (limit 300)";
  return {ok && secs < 300.0, d.str()};
}

Outcome linear_rate() {
  bool ok = true;
  std::ostringstream d;
  std::vector<std::pair<std::string, const Desk*>> cases;
  for (const Desk& D : desk_instances())
    if (D.pr.case_tag() != CaseTag::general_convex) cases.push_back({D.family, &D});
  // the local full-row-rank case comes from the sharing family
  static const Desk sharing = [] {
    const ExperimentSpec s = default_spec("resource_sharing");
    ProblemInstance pr = generate(s);
    GossipOperator op = build_gossip(parse_graph_spec(s.graph_spec()));
    ReferenceSolution ref = reference_solve(pr, 1e-12);
    return Desk{"resource_sharing", std::move(pr), std::move(op), std::move(ref)};
  }();
  cases.push_back({sharing.family, &sharing});
  for (const auto& [fam, D] : cases) {
    for (Algorithm a : {Algorithm::id2a, Algorithm::mid2a}) {
      OuterConfig cfg;
      cfg.mode = OuterConfig::Mode::strongly_convex;
      cfg.c = 2.0;
      cfg.target_gap = 1e-9;
      cfg.max_outer = 20000;
      const RunResult r = run(a, D->pr, D->op, cfg, &D->ref.x_star);
      // tail: second half of the iterations whose gap sits above the reference accuracy
      std::vector<TraceRow> above;
      for (const auto& row : r.trace.rows)
        if (row.gap >= 1e-9) above.push_back(row);
      const std::vector<TraceRow> tail(above.begin() + static_cast<long>(above.size() / 2), above.end());
      const double rate = tail.size() >= 2 ? fitted_rate(tail) : 0.0;
      const double kF = r.params.kappa_F;
      const double bound = std::sqrt(std::max(1.0 - 1.0 / std::sqrt(kF), error_theta(2.0, kF))) + 0.05;
      ok = ok && rate <= bound;
      d << fam << '/' << name(a) << ": rate=" << fmt("%.4f", rate) << " bound=" << fmt("%.4f", bound) << "; ";
    }
  }
  d << "tol +0.05";
  return {ok, d.str()};
}

Outcome convex_convergence() {
  const Desk& D = desk_instances()[2];
  OuterConfig cfg;
  cfg.mode = OuterConfig::Mode::convex;
  cfg.rho_policy = RhoPolicy::optimal;
  cfg.delta = 1.0;
  cfg.target_gap = 0.0;
  cfg.max_outer = 2000;
  const RunResult r = id2a(D.pr, D.op, cfg, &D.ref.x_star);
  const auto& rows = r.trace.rows;
  if (rows.size() != 2000) return {false, "stopped after " + std::to_string(rows.size()) + " iterations"};
  double first = 0.0, last = 0.0;
  for (int k = 0; k < 200; ++k) {
    first += rows[k].gap / 200.0;
    last += rows[1800 + k].gap / 200.0;
  }
  const double ratio = first / last;
  return {ratio >= 100.0, "first-tenth mean gap " + fmt("%.3e", first) + ", last-tenth " + fmt("%.3e", last) +
                              ", decrease " + fmt("%.1f", ratio) + "x (need >= 100x), rho=" +
                              fmt("%.4g", r.params.rho)};
}

Outcome ring_scaling() {
  bool ok = true;
  std::ostringstream d;
  std::vector<int> it_id, it_mid;
  std::vector<double> kC;
  for (int n : {6, 12, 24}) {
    ExperimentSpec s = default_spec("resource_sharing");
    s.n = n;
    s.d = 3 * n;
    s.graph = "ring:" + std::to_string(n);
    const ProblemInstance pr = generate(s);
    const GossipOperator op = build_gossip(ring_graph(n));
    const ReferenceSolution ref = reference_solve(pr, 1e-12);
    const auto [cmin, cmax] = nonzero_extremes(op.dense());
    kC.push_back(cmax / cmin);
    OuterConfig cfg;
    cfg.rho_policy = RhoPolicy::optimal;
    cfg.target_gap = 1e-6;
    cfg.max_outer = 20000;
    const RunResult a = id2a(pr, op, cfg, &ref.x_star);
    const RunResult b = mid2a(pr, op, cfg, &ref.x_star);
    ok = ok && a.converged && b.converged;
    it_id.push_back(a.trace.rows.back().k);
    it_mid.push_back(b.trace.rows.back().k);
    const double rel = std::abs(a.params.kappa_F - 2.0 * kC.back()) / (2.0 * kC.back());
    ok = ok && rel <= 1e-9 && b.params.kappa_F <= 8.0 + 1e-9;
    d << "n=" << n << ": kappa_C=" << fmt("%.2f", kC.back()) << " kappa_F(iD2A)=" << fmt("%.2f", a.params.kappa_F)
      << " kappa_F(MiD2A)=" << fmt("%.3f", b.params.kappa_F) << " outer iD2A=" << it_id.back()
      << " MiD2A=" << it_mid.back() << "; ";
  }
  const int mid_max = *std::max_element(it_mid.begin(), it_mid.end());
  const int mid_min = *std::min_element(it_mid.begin(), it_mid.end());
  const bool spread = mid_max < 2 * mid_min;
  const bool monotone = kC[0] < kC[1] && kC[1] < kC[2] && it_id[0] < it_id[1] && it_id[1] < it_id[2];
  d << "MiD2A spread " << fmt("%.2f", static_cast<double>(mid_max) / mid_min) << "x (need < 2x), iD2A monotone "
    << (monotone ? "yes" : "no") << ", kappa_F tol rel 1e-9 / 8+1e-9";
  return {ok && spread && monotone, d.str()};
}

Outcome comm_accounting() {
  bool ok = true;
  int rows = 0;
  std::ostringstream d;
  auto audit = [&](const std::string& label, const RunResult& r, const Network& net, bool rho_zero) {
    std::int64_t prev = 0;
    for (const TraceRow& row : r.trace.rows) {
      const std::int64_t expect = rho_zero ? row.k : prev + static_cast<std::int64_t>(r.K) * (1 + row.inner_iters);
      if (row.comm_rounds != expect) {
        ok = false;
        d << label << " row " << row.k << " has " << row.comm_rounds << " expected " << expect << "; ";
        return;
      }
      prev = row.comm_rounds;
      ++rows;
    }
    if (r.trace.rows.back().comm_rounds != net.rounds()) {
      ok = false;
      d << label << " network counted " << net.rounds() << "; ";
    }
  };
  for (const Desk& D : desk_instances()) {
    for (Algorithm a : {Algorithm::id2a, Algorithm::mid2a}) {
      OuterConfig cfg;
      cfg.max_outer = 60;
      Network net(D.op.graph());
      const RunResult r = run_decentralized(a, D.pr, D.op, cfg, &D.ref.x_star, &net);
      audit(D.family + "/" + name(a), r, net, false);
    }
    if (D.pr.case_tag() == CaseTag::hstar_strongly_convex) {
      OuterConfig cfg;
      cfg.rho_policy = RhoPolicy::zero;
      cfg.max_outer = 60;
      Network net(D.op.graph());
      const RunResult r = run_decentralized(Algorithm::id2a, D.pr, D.op, cfg, &D.ref.x_star, &net);
      audit(D.family + "/iD2A/rho=0", r, net, true);
    }
  }
  d << rows << " rows audited, exact equality";
  return {ok, d.str()};
}

Outcome decentralized_equivalence() {
  bool ok = true;
  std::ostringstream d;
  for (const Desk& D : desk_instances()) {
    for (Algorithm a : {Algorithm::id2a, Algorithm::mid2a}) {
      OuterConfig cfg;
      cfg.target_gap = 1e-6;
      cfg.max_outer = 20000;
      const RunResult c = run(a, D.pr, D.op, cfg, &D.ref.x_star);
      const RunResult s = run_decentralized(a, D.pr, D.op, cfg, &D.ref.x_star);
      bool same = c.trace.rows.size() == s.trace.rows.size() && c.x.size() == s.x.size();
      for (std::size_t i = 0; same && i < c.x.size(); ++i)
        same = c.x[i] == s.x[i] && c.lambda[i] == s.lambda[i];
      ok = ok && same;
      d << D.family << '/' << name(a) << (same ? " identical" : " DIFFERS") << " after " << c.trace.rows.size()
        << "; ";
    }
  }
  d << "bitwise comparison";
  return {ok, d.str()};
}

Outcome error_bound_soundness() {
  Gen g(109);
  int violations = 0, checks = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.integer(2, 4);
    const bool sc = trial % 2 == 0;
    const ProblemInstance pr = dualsq::testing::smooth_instance(g, n, 2, g.integer(2, 3), sc);
    const GossipOperator op = build_gossip(erdos_renyi_connected(n, 0.6, 500 + trial));
    const Mixing mix = Mixing::plain(op);
    const double rho = sc && trial % 4 == 0 ? 0.0 : g.uniform(0.1, 3.0);
    const BlockVec z = dualsq::testing::random_blocks(g, std::vector<Index>(n, 2));
    const SaddleSubproblem sp = make_subproblem(pr, &mix, rho, z);
    const dualsq::testing::Saddle s = dualsq::testing::brute_saddle(pr, op.dense(), rho, z);
    for (int t = 0; t < 10; ++t) {
      BlockVec x = s.x, lam = s.lambda;
      const double scale = std::pow(10.0, g.uniform(-4.0, 0.0));
      for (auto& b : x) b += g.vec(b.size(), scale);
      for (auto& b : lam) b += g.vec(b.size(), scale);
      const Residuals r = subproblem_residuals(sp, x, lam);
      const ErrorBounds eb = error_bounds(r.r_x, r.r_lambda, sp.consts);
      const double dx = distance(x, s.x), dl = distance(lam, s.lambda);
      worst = std::max({worst, dx / eb.bound_x, dl / eb.bound_lambda});
      if (dx > eb.bound_x * (1 + 1e-9)) ++violations;
      if (dl > eb.bound_lambda * (1 + 1e-9)) ++violations;
      checks += 2;
    }
  }
  return {violations == 0, std::to_string(checks) + " checks, " + std::to_string(violations) +
                               " violations, max distance/bound " + fmt("%.3f", worst) + " (tol 1+1e-9)"};
}

Outcome rho_tradeoff() {
  const Desk& D = desk_instances()[0];
  auto oracle_to = [&](RhoPolicy pol, bool& inner_free) {
    OuterConfig cfg;
    cfg.rho_policy = pol;
    cfg.target_gap = 1e-4;
    cfg.max_outer = 20000;
    const RunResult r = id2a(D.pr, D.op, cfg, &D.ref.x_star);
    inner_free = true;
    for (const TraceRow& row : r.trace.rows) inner_free = inner_free && row.comm_rounds == row.k;
    for (const TraceRow& row : r.trace.rows)
      if (row.gap <= 1e-4) return row.oracle_A;
    return std::int64_t{-1};
  };
  bool free_opt = false, free_zero = false;
  const std::int64_t a_opt = oracle_to(RhoPolicy::optimal, free_opt);
  const std::int64_t a_zero = oracle_to(RhoPolicy::zero, free_zero);
  const bool ok = a_opt > 0 && a_zero > 0 && a_opt < a_zero && free_zero;
  return {ok, "oracle_A to gap 1e-4: rho*=" + std::to_string(a_opt) + ", rho=0=" + std::to_string(a_zero) +
                  "; rho=0 inner communication " + (free_zero ? "none" : "present")};
}

}  // namespace

int main() {
  report(1, "Chebyshev bound", chebyshev_bound);
  report(2, "gradient oracle", gradient_oracle);
  report(3, "solution correctness", solution_correctness);
  report(4, "linear-rate envelope", linear_rate);
  report(5, "convex-mode convergence", convex_convergence);
  report(6, "outer-iteration scaling on rings", ring_scaling);
  report(7, "communication accounting", comm_accounting);
  report(8, "centralized/decentralized equivalence", decentralized_equivalence);
  report(9, "error-bound soundness", error_bound_soundness);
  report(10, "rho tradeoff", rho_tradeoff);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
