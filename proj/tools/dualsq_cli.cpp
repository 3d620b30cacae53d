#include "dualsq/dualsq.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dualsq;

namespace {

// Output files land in $DUALSQ_OUT_DIR when set, else in the working directory.
fs::path out_path(const std::string& name) {
  if (name.empty()) return {};
  fs::path p(name);
  if (p.is_absolute()) return p;
  const char* dir = std::getenv("DUALSQ_OUT_DIR");
  if (dir && *dir) {
    fs::create_directories(dir);
    return fs::path(dir) / p;
  }
  return p;
}

struct InstanceArgs {
  std::string experiment = "elastic_net";
  std::string instance;  // JSON file; overrides the generator
  std::uint64_t seed = 0;
  int n = 0, p = 0, d = 0;
  double alpha = 100.0;
  double rho_en = 0.1;
  std::string data = "synthetic";
  std::string graph;

  void add(CLI::App* app) {
    app->add_option("--experiment", experiment, "elastic_net | constrained_regression | resource_allocation | resource_sharing");
    app->add_option("--instance", instance, "Load an instance file instead of generating one");
    app->add_option("--seed", seed, "Generator seed");
    app->add_option("--n", n, "Number of agents");
    app->add_option("--p", p, "Coupling dimension");
    app->add_option("--d", d, "Total primal dimension");
    app->add_option("--alpha", alpha, "Regularization weight");
    app->add_option("--rho-en", rho_en, "Elastic-net l1 share");
    app->add_option("--data", data, "synthetic or csv:<path>");
    app->add_option("--graph", graph, "er:n:p:seed | ring:n | path:n | complete:n | star:n | file:path");
  }

  ExperimentSpec spec() const {
    ExperimentSpec s = default_spec(experiment);
    if (n > 0) {
      // Keep the per-agent block size of the family when only n changes.
      if (d <= 0 && s.d % s.n == 0) s.d = s.d / s.n * n;
      s.n = n;
    }
    if (p > 0) s.p = p;
    if (d > 0) s.d = d;
    s.alpha = alpha;
    s.rho_en = rho_en;
    s.seed = seed;
    s.data = data;
    s.graph = graph;
    return s;
  }
};

struct SolverArgs {
  std::string algo = "id2a";
  std::string rho = "optimal";
  std::string mode = "auto";
  double target_gap = 1e-6;
  double target_kkt = 0.0;
  int max_outer = 1000;
  bool decentralized = false;
  bool dense_spectra = false;
  bool no_reference = false;
  double ref_tol = 1e-10;

  void add(CLI::App* app) {
    app->add_option("--algo", algo, "id2a | mid2a")->check(CLI::IsMember({"id2a", "mid2a"}));
    app->add_option("--rho", rho, "zero | optimal | <value>");
    app->add_option("--mode", mode, "auto | convex | sc")->check(CLI::IsMember({"auto", "convex", "sc"}));
    app->add_option("--target-gap", target_gap, "Stop at this relative gap (KKT residual without reference)");
    app->add_option("--target-kkt", target_kkt, "Also require this KKT residual");
    app->add_option("--max-outer", max_outer, "Outer iteration cap");
    app->add_flag("--decentralized", decentralized, "Run the per-agent simulation");
    app->add_flag("--dense-spectra", dense_spectra, "Use exact spectra of P_K(C)");
    app->add_flag("--no-reference", no_reference, "Skip the reference solve; stop on KKT residuals");
    app->add_option("--ref-tol", ref_tol, "Reference solve tolerance");
  }

  OuterConfig config() const {
    OuterConfig c;
    if (rho == "zero") {
      c.rho_policy = RhoPolicy::zero;
    } else if (rho == "optimal") {
      c.rho_policy = RhoPolicy::optimal;
    } else {
      c.rho_policy = RhoPolicy::explicit_value;
      try {
        c.rho_value = std::stod(rho);
      } catch (const std::exception&) {
        throw ConfigError("--rho expects zero, optimal or a number, got " + rho);
      }
      if (c.rho_value == 0.0) c.rho_policy = RhoPolicy::zero;
    }
    c.mode = mode == "convex" ? OuterConfig::Mode::convex
             : mode == "sc"   ? OuterConfig::Mode::strongly_convex
                              : OuterConfig::Mode::automatic;
    c.target_gap = target_gap;
    c.target_kkt = target_kkt;
    c.max_outer = max_outer;
    c.dense_spectra = dense_spectra;
    return c;
  }
};

ProblemInstance load_or_generate(const InstanceArgs& ia) {
  return ia.instance.empty() ? generate(ia.spec()) : load_instance(ia.instance);
}

std::string graph_spec_for(const InstanceArgs& ia, const ProblemInstance& pr) {
  if (!ia.graph.empty()) return ia.graph;
  ExperimentSpec s = ia.instance.empty() ? ia.spec() : ExperimentSpec{};
  s.n = static_cast<int>(pr.n());
  s.seed = ia.seed;
  return s.graph_spec();
}

void write_iterates(const fs::path& path, const RunTrace& t) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char buf[64];
  for (std::size_t r = 0; r < t.x_history.size(); ++r) {
    out << t.rows[r].k;
    const Vec x = flatten(t.x_history[r]);
    for (Index j = 0; j < x.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17e", x[j]);
      out << buf;
    }
    out << '\n';
  }
}

struct RunOutcome {
  RunResult result;
  std::optional<ReferenceSolution> ref;
};

RunOutcome solve(const ProblemInstance& pr, const Graph& g, const SolverArgs& sa, bool store_iterates) {
  RunOutcome o;
  if (!sa.no_reference) o.ref = reference_solve(pr, sa.ref_tol);
  const GossipOperator op = build_gossip(g);
  OuterConfig cfg = sa.config();
  cfg.store_iterates = store_iterates;
  const BlockVec* xr = o.ref ? &o.ref->x_star : nullptr;
  const bool mid = sa.algo == "mid2a";
  if (sa.decentralized)
    o.result = run_decentralized(mid ? Algorithm::mid2a : Algorithm::id2a, pr, op, cfg, xr);
  else
    o.result = mid ? mid2a(pr, op, cfg, xr) : id2a(pr, op, cfg, xr);
  return o;
}

void print_summary(std::ostream& os, const RunOutcome& o) {
  const RunResult& r = o.result;
  const TraceRow last = r.trace.rows.empty() ? TraceRow{} : r.trace.rows.back();
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "outer=%d gap=%.6e kkt=%.6e comm_rounds=%lld oracle_A=%lld oracle_B=%lld rho=%.6e kappa_F=%.6e K=%d "
                "mode=%s converged=%s",
                last.k, last.gap, std::max(last.primal_res, last.dual_res), static_cast<long long>(last.comm_rounds),
                static_cast<long long>(last.oracle_A), static_cast<long long>(last.oracle_B), r.params.rho,
                r.params.kappa_F, r.K, r.convex_mode ? "convex" : "sc", r.converged ? "yes" : "no");
  os << buf << '\n';
}

int cmd_generate(const InstanceArgs& ia, const std::string& out) {
  const ProblemInstance pr = generate(ia.spec());
  const fs::path path = out_path(out);
  save_instance(path.string(), pr);
  std::cout << "wrote " << path.string() << " (n=" << pr.n() << " p=" << pr.p() << " d=" << pr.d()
            << " case=" << to_string(pr.case_tag()) << ")\n";
  return 0;
}

int cmd_run(const InstanceArgs& ia, const SolverArgs& sa, const std::string& trace, const std::string& iterates) {
  const ProblemInstance pr = load_or_generate(ia);
  const Graph g = parse_graph_spec(graph_spec_for(ia, pr));
  const RunOutcome o = solve(pr, g, sa, !iterates.empty());
  if (!trace.empty()) write_trace_csv(out_path(trace).string(), o.result.trace);
  if (!iterates.empty()) write_iterates(out_path(iterates), o.result.trace);
  print_summary(std::cout, o);
  return 0;
}

int cmd_spectra(const std::string& graph, const std::string& method, double scale) {
  const Graph g = parse_graph_spec(graph);
  const GossipOperator op = build_gossip(
      g, method == "laplacian" ? GossipOperator::Method::laplacian : GossipOperator::Method::metropolis_half, scale);
  const Mixing mix = Mixing::chebyshev(op, true);
  const int K = mix.accelerated() ? mix.params().K : 1;
  const auto [lo, hi] = mix.accelerated() ? chebyshev_eig_bounds(op.kappa(), K) : std::pair{op.lambda_min_nz(), op.lambda_max()};
  std::printf("n=%d edges=%zu\n", g.n(), g.edges().size());
  std::printf("lambda_max=%.12e\nlambda_min_nz=%.12e\nkappa_C=%.12e\nK=%d\n", op.lambda_max(), op.lambda_min_nz(),
              op.kappa(), K);
  std::printf("cheb_bounds=[%.12e, %.12e]\nkappa_PK=%.12e\n", lo, hi, mix.kappa());
  return 0;
}

/// The same graph family with n nodes; file graphs cannot be resized.
std::string resize_graph_spec(const std::string& spec, int n) {
  if (spec.empty()) return spec;
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  if (kind == "file") throw ConfigError("sweep: a file graph cannot follow the n axis");
  if (colon == std::string::npos) return spec;
  const auto next = spec.find(':', colon + 1);
  return kind + ":" + std::to_string(n) + (next == std::string::npos ? "" : spec.substr(next));
}

int cmd_sweep(const InstanceArgs& ia, SolverArgs sa, const std::string& axis, const std::vector<std::string>& values,
              const std::string& prefix) {
  if (values.empty()) throw ConfigError("sweep: --values is empty");
  for (const std::string& v : values) {
    InstanceArgs iv = ia;
    SolverArgs sv = sa;
    if (axis == "rho") {
      sv.rho = v;
    } else if (axis == "algo") {
      if (v != "id2a" && v != "mid2a") throw ConfigError("sweep: unknown algo " + v);
      sv.algo = v;
    } else if (axis == "seed") {
      iv.seed = std::stoull(v);
    } else if (axis == "graph") {
      iv.graph = v;
    } else if (axis == "n") {
      iv.n = std::stoi(v);
      iv.graph = resize_graph_spec(iv.graph, iv.n);
    } else {
      throw ConfigError("sweep: unknown axis " + axis);
    }
    const ProblemInstance pr = load_or_generate(iv);
    const Graph g = parse_graph_spec(graph_spec_for(iv, pr));
    const RunOutcome o = solve(pr, g, sv, false);
    std::string tag = v;
    for (char& c : tag)
      if (c == ':' || c == '/' || c == '\\') c = '_';
    const fs::path path = out_path(prefix + "_" + axis + "_" + tag + ".csv");
    write_trace_csv(path.string(), o.result.trace);
    std::cout << axis << "=" << v << " ";
    print_summary(std::cout, o);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized dual-of-dual solvers: instance generation, runs and diagnostics"};
  app.require_subcommand(1);

  InstanceArgs gen_ia;
  std::string gen_out = "instance.json";
  CLI::App* gen = app.add_subcommand("generate", "Write a generated instance to a JSON file");
  gen_ia.add(gen);
  gen->add_option("--out", gen_out, "Output file");

  InstanceArgs run_ia;
  SolverArgs run_sa;
  std::string run_trace = "trace.csv", run_iter;
  CLI::App* run = app.add_subcommand("run", "Solve one instance, write the trace and print a summary");
  run_ia.add(run);
  run_sa.add(run);
  run->add_option("--trace", run_trace, "Trace CSV (empty disables)");
  run->add_option("--store-iterates", run_iter, "Write x after every outer step to this CSV");

  std::string sp_graph, sp_method = "metropolis_half";
  double sp_scale = 1.0;
  CLI::App* spectra = app.add_subcommand("spectra", "Gossip matrix and Chebyshev diagnostics");
  spectra->add_option("--graph", sp_graph, "Graph spec")->required();
  spectra->add_option("--method", sp_method, "metropolis_half | laplacian")
      ->check(CLI::IsMember({"metropolis_half", "laplacian"}));
  spectra->add_option("--scale", sp_scale, "Laplacian scale c");

  InstanceArgs sw_ia;
  SolverArgs sw_sa;
  std::string sw_axis, sw_prefix = "sweep";
  std::vector<std::string> sw_values;
  CLI::App* sweep = app.add_subcommand("sweep", "Vary one axis, one trace CSV per point");
  sw_ia.add(sweep);
  sw_sa.add(sweep);
  sweep->add_option("--axis", sw_axis, "rho | algo | seed | graph | n")->required();
  sweep->add_option("--values", sw_values, "Comma separated values")->required()->delimiter(',');
  sweep->add_option("--prefix", sw_prefix, "Output file prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(gen_ia, gen_out);
    if (*run) return cmd_run(run_ia, run_sa, run_trace, run_iter);
    if (*spectra) return cmd_spectra(sp_graph, sp_method, sp_scale);
    if (*sweep) return cmd_sweep(sw_ia, sw_sa, sw_axis, sw_values, sw_prefix);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
