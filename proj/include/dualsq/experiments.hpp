#pragma once

#include "dualsq/problem.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dualsq {

struct ExperimentSpec {
  std::string family = "elastic_net";  // elastic_net | constrained_regression | resource_allocation | resource_sharing
  int n = 8;
  int p = 20;
  int d = 9;                // total primal dimension (elastic net / regression)
  std::vector<int> d_i;     // explicit partition; empty means contiguous default
  double alpha = 100.0;
  double rho_en = 0.1;      // elastic-net mixing weight
  std::uint64_t seed = 0;
  std::string data = "synthetic";  // or csv:<path>
  std::string graph;               // empty means er:<n>:0.1:<seed>

  std::string graph_spec() const {
    return graph.empty() ? "er:" + std::to_string(n) + ":0.1:" + std::to_string(seed) : graph;
  }
};

/// Desk-scale defaults of each family.
inline ExperimentSpec default_spec(const std::string& family) {
  ExperimentSpec s;
  s.family = family;
  if (family == "elastic_net") {
    s.n = 8, s.p = 20, s.d = 9;
  } else if (family == "constrained_regression") {
    s.n = 8, s.p = 9, s.d = 9;
  } else if (family == "resource_allocation") {
    s.n = 20, s.p = 10, s.d = 40;
  } else if (family == "resource_sharing") {
    s.n = 6, s.p = 2, s.d = 18;
  } else {
    throw ConfigError("unknown experiment family: " + family);
  }
  return s;
}

/// d split into n contiguous blocks; the last (d mod n) blocks get one extra column.
inline std::vector<int> partition_sizes(const ExperimentSpec& s) {
  if (!s.d_i.empty()) {
    if (static_cast<int>(s.d_i.size()) != s.n) throw ConfigError("partition: need one block size per agent");
    int tot = 0;
    for (int v : s.d_i) {
      if (v < 1) throw ConfigError("partition: block sizes must be positive");
      tot += v;
    }
    if (tot != s.d) throw ConfigError("partition: block sizes must sum to d");
    return s.d_i;
  }
  if (s.n < 1 || s.d < s.n) throw ConfigError("partition: need d >= n >= 1");
  std::vector<int> out(static_cast<std::size_t>(s.n), s.d / s.n);
  const int rem = s.d % s.n;
  for (int k = 0; k < rem; ++k) out[static_cast<std::size_t>(s.n - 1 - k)] += 1;
  return out;
}

/// Features and label read from a CSV file: every row is one sample, the last
/// column is the label. A non-numeric first line is treated as a header.
struct Dataset {
  Mat X;  // samples x features
  Vec y;
};

inline Dataset read_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError("data file: non-numeric entry in line: " + line);
    }
    first = false;
    if (!rows.empty() && r.size() != rows.front().size()) throw ConfigError("data file: ragged rows");
    rows.push_back(std::move(r));
  }
  if (rows.empty() || rows.front().size() < 2) throw ConfigError("data file: need at least one feature and a label");
  Dataset ds;
  const Index m = static_cast<Index>(rows.size()), c = static_cast<Index>(rows.front().size());
  ds.X.resize(m, c - 1);
  ds.y.resize(m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j + 1 < c; ++j) ds.X(i, j) = rows[i][j];
    ds.y[i] = rows[i][c - 1];
  }
  return ds;
}

namespace detail {

inline Mat normal_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> N(0.0, 1.0);
  Mat M(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) M(i, j) = N(rng);
  return M;
}

inline Vec normal_vector(std::mt19937_64& rng, Index r) { return normal_matrix(rng, r, 1).col(0); }

/// Standard-normal features with columns rescaled by 10^U(0,1), so the
/// instance is moderately ill-conditioned.
inline Mat synthetic_features(std::mt19937_64& rng, Index rows, Index cols) {
  Mat X = normal_matrix(rng, rows, cols);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (Index j = 0; j < cols; ++j) X.col(j) *= std::pow(10.0, U(rng));
  return X;
}

inline std::vector<Mat> split_columns(const Mat& X, const std::vector<int>& sizes) {
  std::vector<Mat> out;
  Index off = 0;
  for (int s : sizes) {
    out.push_back(X.middleCols(off, s));
    off += s;
  }
  return out;
}

}  // namespace detail

/// Elastic-net regression split by features:
///   f_i = alpha(1-rho_en)/2 ||x_i||^2, g_i = alpha rho_en ||x_i||_1, A_i = X_i,
///   h(u) = ||u - y||^2/(2p), with X = [X', 1].
inline ProblemInstance gen_elastic_net(const ExperimentSpec& s) {
  if (!(s.rho_en >= 0.0 && s.rho_en < 1.0))
    throw ConfigError("elastic_net: rho_en must lie in [0, 1) so that f stays strongly convex");
  if (!(s.alpha > 0.0)) throw ConfigError("elastic_net: alpha must be positive");
  std::mt19937_64 rng(s.seed);
  Mat X;
  Vec y;
  if (s.data.rfind("csv:", 0) == 0) {
    Dataset ds = read_csv_dataset(s.data.substr(4));
    if (ds.X.rows() != s.p || ds.X.cols() + 1 != s.d)
      throw ConfigError("elastic_net: data shape does not match p x (d-1)");
    X.resize(s.p, s.d);
    X << ds.X, Vec::Ones(s.p);
    y = ds.y;
  } else if (s.data == "synthetic") {
    const Mat Xr = detail::synthetic_features(rng, s.p, s.d - 1);
    X.resize(s.p, s.d);
    X << Xr, Vec::Ones(s.p);
    const Vec theta = detail::normal_vector(rng, s.d - 1);
    y = Xr * theta + Vec::Ones(s.p) + 0.1 * detail::normal_vector(rng, s.p);
  } else {
    throw ConfigError("unknown data source: " + s.data);
  }
  const auto sizes = partition_sizes(s);
  const auto blocks = detail::split_columns(X, sizes);
  std::vector<AgentLocalProblem> agents;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Index di = sizes[i];
    agents.emplace_back(SmoothFn::scaled_sq_norm(di, s.alpha * (1.0 - s.rho_en)), ProxFn::l1(di, s.alpha * s.rho_en),
                        blocks[i]);
  }
  return ProblemInstance(std::move(agents), Coupling::shifted_quadratic(static_cast<double>(s.p), y),
                         CaseTag::hstar_strongly_convex);
}

/// Nonnegativity-constrained regression:
///   f_i = (alpha/2)||x_i||^2, g_i = 0, A_i = X_i,
///   h(u) = ||u - y||^2/(2p) + indicator(u >= 0).
inline ProblemInstance gen_constrained_regression(const ExperimentSpec& s) {
  if (!(s.alpha > 0.0)) throw ConfigError("constrained_regression: alpha must be positive");
  std::mt19937_64 rng(s.seed);
  Mat X;
  Vec y;
  if (s.data.rfind("csv:", 0) == 0) {
    Dataset ds = read_csv_dataset(s.data.substr(4));
    if (ds.X.rows() != s.p || ds.X.cols() != s.d) throw ConfigError("constrained_regression: data shape must be p x d");
    X = ds.X;
    y = ds.y;
  } else if (s.data == "synthetic") {
    X = detail::synthetic_features(rng, s.p, s.d);
    y = X * detail::normal_vector(rng, s.d) + 0.1 * detail::normal_vector(rng, s.p);
  } else {
    throw ConfigError("unknown data source: " + s.data);
  }
  Eigen::JacobiSVD<Mat> svd(X);
  const Vec& sv = svd.singularValues();
  const double smin = s.p <= s.d ? sv[s.p - 1] : 0.0;
  if (!(smin > 1e-10 * sv[0]))
    throw ConfigError("constrained_regression: feature matrix lacks full row rank (sigma_min = " +
                      std::to_string(smin) + ")");
  const auto sizes = partition_sizes(s);
  const auto blocks = detail::split_columns(X, sizes);
  std::vector<AgentLocalProblem> agents;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    agents.emplace_back(SmoothFn::scaled_sq_norm(sizes[i], s.alpha), ProxFn::zero(sizes[i]), blocks[i]);
  return ProblemInstance(std::move(agents), Coupling::clipped_quadratic(static_cast<double>(s.p), y),
                         CaseTag::global_full_row_rank);
}

/// Resource allocation with box constraints:
///   f_i = 1/2 x'P_i x + q_i'x, P_i = Q diag(U[1,1000]) Q', g_i = box[0, u_i],
///   A_i = B_i, h = indicator(y <= b).
inline ProblemInstance gen_resource_allocation(const ExperimentSpec& s) {
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> U(1.0, 1000.0);
  const auto sizes = partition_sizes(s);
  std::vector<AgentLocalProblem> agents;
  for (int di : sizes) {
    const Mat G = detail::normal_matrix(rng, di, di);
    const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ() * Mat::Identity(di, di);
    Vec ev(di);
    for (int k = 0; k < di; ++k) ev[k] = U(rng);
    Mat P = Q * ev.asDiagonal() * Q.transpose();
    P = (0.5 * (P + P.transpose())).eval();
    const Vec q = detail::normal_vector(rng, di);
    const Mat B = detail::normal_matrix(rng, s.p, di);
    const Vec u = detail::normal_vector(rng, di).cwiseAbs();
    agents.emplace_back(SmoothFn::quadratic(P, q), ProxFn::box(Vec::Zero(di), u), B);
  }
  Vec b(s.p);
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 1000) throw ConfigError("resource_allocation: could not draw a positive budget");
    b = detail::normal_vector(rng, s.p).cwiseAbs();
    if ((b.array() > 0.0).all()) break;
  }
  return ProblemInstance(std::move(agents), Coupling::linear_nonneg(b), CaseTag::general_convex);
}

/// Equality-constrained sharing: f_i = 1/2 x'P_i x + q_i'x, g_i = 0, A_i
/// p x d_i with full row rank (d_i >= p), h = indicator({b}).
inline ProblemInstance gen_resource_sharing(const ExperimentSpec& s) {
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> U(1.0, 10.0);
  const auto sizes = partition_sizes(s);
  std::vector<AgentLocalProblem> agents;
  for (int di : sizes) {
    if (di < s.p) throw ConfigError("resource_sharing: every block needs d_i >= p");
    const Mat G = detail::normal_matrix(rng, di, di);
    const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ() * Mat::Identity(di, di);
    Vec ev(di);
    for (int k = 0; k < di; ++k) ev[k] = U(rng);
    Mat P = Q * ev.asDiagonal() * Q.transpose();
    P = (0.5 * (P + P.transpose())).eval();
    agents.emplace_back(SmoothFn::quadratic(P, detail::normal_vector(rng, di)), ProxFn::zero(di),
                        detail::normal_matrix(rng, s.p, di));
  }
  return ProblemInstance(std::move(agents), Coupling::linear(detail::normal_vector(rng, s.p)),
                         CaseTag::local_full_row_rank);
}

inline ProblemInstance generate(const ExperimentSpec& s) {
  if (s.family == "elastic_net") return gen_elastic_net(s);
  if (s.family == "constrained_regression") return gen_constrained_regression(s);
  if (s.family == "resource_allocation") return gen_resource_allocation(s);
  if (s.family == "resource_sharing") return gen_resource_sharing(s);
  throw ConfigError("unknown experiment family: " + s.family);
}

// ---------------------------------------------------------------------------
// Reference solutions
// ---------------------------------------------------------------------------

struct ReferenceSolution {
  BlockVec x_star;
  Vec lambda_star;
  double tol = 0.0;  // max(primal, dual) KKT residual reached
  int iterations = 0;
};

namespace detail {

/// argmin_x f(x) + g(x) + w'x by restarted FISTA, or in closed form when
/// f is quadratic and g vanishes.
inline Vec reference_primal(const AgentLocalProblem& a, const Vec& w, const Vec& start, double tol) {
  if (a.f.is_quadratic() && a.g.kind() == ProxFn::Kind::zero) return a.f.solve(-(a.f.q() + w));
  const double t = 1.0 / a.f.L();
  Vec x = a.g.prox(t, start), y = x;
  double theta = 1.0;
  for (int it = 0; it < 200000; ++it) {
    const Vec xn = a.g.prox(t, y - t * (a.f.grad(y) + w));
    const double thn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    if ((y - xn).dot(xn - x) > 0.0) {
      y = xn;
      theta = 1.0;
    } else {
      y = xn + ((theta - 1.0) / thn) * (xn - x);
      theta = thn;
    }
    x = xn;
    const Vec gr = a.f.grad(x) + w;
    const double scale = 1.0 + gr.cwiseAbs().maxCoeff() + w.cwiseAbs().maxCoeff();
    if (a.g.subdiff_dist(x, gr) <= std::max(tol, 1e-15 * scale)) break;
  }
  return x;
}

}  // namespace detail

/// Centralized high-accuracy solve on the p-dimensional dual
///   min_lambda sum_i (f_i + g_i)*(-A_i' lambda) + h*(lambda)
/// by restarted accelerated proximal gradient, primal recovered per agent.
/// Stops when both KKT residuals fall below tol.
inline ReferenceSolution reference_solve(const ProblemInstance& pr, double tol = 1e-10, int max_iter = 2000000) {
  const std::size_t N = pr.n();
  const auto& h = pr.coupling();
  double L = 0.0;
  for (const auto& a : pr.agents()) L += a.sigma_max() * a.sigma_max() / a.f.mu();
  if (!(L > 0.0)) throw ConfigError("reference_solve: coupling matrices vanish");
  const double t = 1.0 / L;
  const double inner_tol = 1e-3 * tol;

  BlockVec x(N);
  for (std::size_t i = 0; i < N; ++i) x[i] = Vec::Zero(pr.agent(i).dim());
  auto primal = [&](const Vec& lam) {
    Vec Ax = Vec::Zero(pr.p());
    for (std::size_t i = 0; i < N; ++i) {
      const auto& a = pr.agent(i);
      x[i] = detail::reference_primal(a, a.A.transpose() * lam, x[i], inner_tol);
      Ax += a.A * x[i];
    }
    return Ax;
  };

  Vec lam = h.hstar_prox(t, Vec::Zero(pr.p()));
  Vec y = lam;
  double theta = 1.0;
  ReferenceSolution out;
  double best = kInf;
  for (int it = 1; it <= max_iter; ++it) {
    const Vec Ax = primal(y);
    const Vec ln = h.hstar_prox(t, y + t * Ax);
    const double thn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    if ((y - ln).dot(ln - lam) > 0.0) {
      y = ln;
      theta = 1.0;
    } else {
      y = ln + ((theta - 1.0) / thn) * (ln - lam);
      theta = thn;
    }
    lam = ln;
    if (it % 10 == 0 || it == max_iter) {
      primal(lam);
      const KktResidual r = kkt_residual(pr, x, lam);
      const double res = std::max(r.primal, r.dual);
      best = std::min(best, res);
      if (res <= tol) {
        out.x_star = x;
        out.lambda_star = lam;
        out.tol = res;
        out.iterations = it;
        return out;
      }
    }
  }
  throw IterationCapError("reference_solve: iteration cap exceeded", best);
}

}  // namespace dualsq
