#pragma once

#include "dualsq/graph.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <utility>
#include <vector>

namespace dualsq {

struct SpectralInfo {
  double lambda_max = 0.0;     // largest eigenvalue
  double lambda_min_nz = 0.0;  // smallest eigenvalue above 1e-10 * lambda_max
  double kappa = 0.0;
};

/// Dense symmetric eigensolve of a gossip-type matrix with a one-dimensional
/// nullspace.
inline SpectralInfo spectral_info(const Mat& C) {
  if (C.rows() != C.cols()) throw DomainError("spectral_info: matrix must be square");
  if (C.rows() < 2) throw DomainError("spectral_info: need at least two nodes");
  Eigen::SelfAdjointEigenSolver<Mat> es(C, Eigen::EigenvaluesOnly);
  const Vec& ev = es.eigenvalues();
  SpectralInfo s;
  s.lambda_max = ev[ev.size() - 1];
  if (!(s.lambda_max > 0.0)) throw GraphError("spectral_info: matrix has no positive eigenvalue");
  const double cut = 1e-10 * s.lambda_max;
  if (ev[0] < -cut) throw DomainError("spectral_info: matrix is not positive semidefinite");
  int zeros = 0;
  s.lambda_min_nz = s.lambda_max;
  for (Index k = 0; k < ev.size(); ++k) {
    if (ev[k] <= cut) {
      ++zeros;
    } else {
      s.lambda_min_nz = ev[k];
      break;
    }
  }
  if (zeros > 1) throw GraphError("graph disconnected");
  s.kappa = s.lambda_max / s.lambda_min_nz;
  return s;
}

/// One row of a sparse symmetric mixing matrix: (column, weight) sorted by column.
using GossipRow = std::vector<std::pair<int, double>>;

/// sum_j c_ij * block(j), accumulated in increasing j.
template <class Getter>
Vec combine(const GossipRow& row, Getter&& block) {
  Vec out = row.front().second * block(row.front().first);
  for (std::size_t t = 1; t < row.size(); ++t) out += row[t].second * block(row[t].first);
  return out;
}

class GossipOperator {
 public:
  enum class Method { metropolis_half, laplacian };

  GossipOperator(Graph graph, Mat C) : graph_(std::move(graph)), C_(std::move(C)) {
    const int n = graph_.n();
    if (C_.rows() != n || C_.cols() != n) throw DomainError("gossip: matrix size does not match graph");
    if ((C_ - C_.transpose()).cwiseAbs().maxCoeff() > 0.0)
      throw DomainError("gossip: matrix is not symmetric");
    rows_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j || graph_.has_edge(i, j)) {
          rows_[i].emplace_back(j, C_(i, j));
        } else if (C_(i, j) != 0.0) {
          throw GraphError("gossip: nonzero weight outside the graph's edges");
        }
      }
    spec_ = spectral_info(C_);
  }

  int n() const { return graph_.n(); }
  const Graph& graph() const { return graph_; }
  const Mat& dense() const { return C_; }
  const GossipRow& row(int i) const { return rows_[static_cast<std::size_t>(i)]; }
  const SpectralInfo& spectra() const { return spec_; }
  double lambda_max() const { return spec_.lambda_max; }
  double lambda_min_nz() const { return spec_.lambda_min_nz; }
  double kappa() const { return spec_.kappa; }

 private:
  Graph graph_;
  Mat C_;
  std::vector<GossipRow> rows_;
  SpectralInfo spec_;
};

/// metropolis_half: W' from Metropolis weights, W = (I + W')/2, C = (I - W)/2.
/// laplacian: C = L / c.
inline GossipOperator build_gossip(const Graph& g,
                                   GossipOperator::Method method = GossipOperator::Method::metropolis_half,
                                   double c = 1.0) {
  if (!g.connected()) throw GraphError("graph disconnected");
  const int n = g.n();
  Mat C = Mat::Zero(n, n);
  if (method == GossipOperator::Method::metropolis_half) {
    Mat Wp = Mat::Zero(n, n);
    for (auto [i, j] : g.edges()) {
      const double w = 1.0 / (1.0 + std::max(g.degree(i), g.degree(j)));
      Wp(i, j) = w;
      Wp(j, i) = w;
    }
    for (int i = 0; i < n; ++i) Wp(i, i) = 1.0 - Wp.row(i).sum();
    const Mat W = 0.5 * (Mat::Identity(n, n) + Wp);
    C = 0.5 * (Mat::Identity(n, n) - W);
  } else {
    if (!(c > 0.0)) throw ConfigError("laplacian gossip: scale must be positive");
    for (auto [i, j] : g.edges()) {
      C(i, j) = -1.0 / c;
      C(j, i) = -1.0 / c;
    }
    for (int i = 0; i < n; ++i) C(i, i) = g.degree(i) / c;
  }
  // Exact symmetry: off-diagonals were written pairwise, diagonals are scalars.
  return GossipOperator(g, std::move(C));
}

/// Row-wise mixing (C kron I_p) Lambda; one communication round.
inline BlockVec apply_gossip_block(const GossipOperator& op, const BlockVec& lambda) {
  if (static_cast<int>(lambda.size()) != op.n()) throw DomainError("apply_gossip_block: need one row per node");
  const Index p = lambda.front().size();
  for (const auto& r : lambda)
    if (r.size() != p) throw DomainError("apply_gossip_block: ragged rows");
  BlockVec out(lambda.size());
  for (int i = 0; i < op.n(); ++i)
    out[i] = combine(op.row(i), [&](int j) -> const Vec& { return lambda[j]; });
  return out;
}

// ---------------------------------------------------------------------------
// Chebyshev acceleration
// ---------------------------------------------------------------------------

inline constexpr double kChebyshevDegenerate = 1.0 + 1e-9;

struct ChebyshevParams {
  int K = 1;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
};

inline int chebyshev_rounds(double kappa) {
  return std::max(1, static_cast<int>(std::floor(std::sqrt(kappa))));
}

inline ChebyshevParams chebyshev_params(double kappa, double lambda_max, int K = 0) {
  if (!(kappa > kChebyshevDegenerate))
    throw DomainError("chebyshev: condition number too close to 1; use the gossip matrix itself");
  ChebyshevParams cp;
  cp.K = K > 0 ? K : chebyshev_rounds(kappa);
  const double sk = std::sqrt(kappa);
  cp.c1 = (sk - 1.0) / (sk + 1.0);
  cp.c2 = (kappa + 1.0) / (kappa - 1.0);
  cp.c3 = 2.0 / ((1.0 + 1.0 / kappa) * lambda_max);
  return cp;
}

/// Bracket [lower, upper] for the nonzero spectrum of P_K(C).
inline std::pair<double, double> chebyshev_eig_bounds(double kappa, int K) {
  if (K < 1) throw DomainError("chebyshev_eig_bounds: K must be >= 1");
  if (!(kappa >= 1.0)) throw DomainError("chebyshev_eig_bounds: kappa must be >= 1");
  const double sk = std::sqrt(kappa);
  const double c1 = (sk - 1.0) / (sk + 1.0);
  const double cK = std::pow(c1, K);
  const double off = 2.0 * cK / (1.0 + cK * cK);
  return {1.0 - off, 1.0 + off};
}

// Per-row recurrence kernels shared by the centralized and per-agent paths.
// first:  x1 = c2 (x0 - c3 (C x0))
// next:   x_{k+1} = 2 c2 (x_k - c3 (C x_k)) - x_{k-1}
// output: Lambda - x_K / a_K
inline Vec cheb_first(const ChebyshevParams& cp, const Vec& x0, const Vec& Cx0) {
  return cp.c2 * (x0 - cp.c3 * Cx0);
}

inline Vec cheb_next(const ChebyshevParams& cp, const Vec& xk, const Vec& Cxk, const Vec& xprev) {
  return 2.0 * cp.c2 * (xk - cp.c3 * Cxk) - xprev;
}

inline Vec cheb_output(const Vec& lambda, const Vec& xK, double aK) {
  return lambda - xK / aK;
}

/// a_0 = 1, a_1 = c2, a_{k+1} = 2 c2 a_k - a_{k-1}; returns a_K.
inline double cheb_scalar(const ChebyshevParams& cp, int K) {
  double prev = 1.0, cur = cp.c2;
  for (int k = 1; k < K; ++k) {
    const double next = 2.0 * cp.c2 * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// P_K(C) Lambda via the three-term recurrence; K communication rounds.
inline BlockVec accelerated_gossip(const BlockVec& lambda, const GossipOperator& op, const ChebyshevParams& cp) {
  if (cp.K < 1) throw DomainError("accelerated_gossip: K must be >= 1");
  BlockVec prev = lambda;
  BlockVec Cx = apply_gossip_block(op, prev);
  BlockVec cur(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) cur[i] = cheb_first(cp, prev[i], Cx[i]);
  for (int k = 1; k < cp.K; ++k) {
    Cx = apply_gossip_block(op, cur);
    BlockVec next(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) next[i] = cheb_next(cp, cur[i], Cx[i], prev[i]);
    prev = std::move(cur);
    cur = std::move(next);
  }
  const double aK = cheb_scalar(cp, cp.K);
  BlockVec out(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) out[i] = cheb_output(lambda[i], cur[i], aK);
  return out;
}

inline BlockVec accelerated_gossip(const BlockVec& lambda, const GossipOperator& op, int K) {
  if (!(op.kappa() > kChebyshevDegenerate))
    throw DomainError("accelerated_gossip: degenerate spectrum (kappa_C ~ 1); use the gossip matrix itself");
  return accelerated_gossip(lambda, op, chebyshev_params(op.kappa(), op.lambda_max(), K));
}

/// Dense P_K(C) = I - T_K(c2 (I - c3 C)) / T_K(c2).
inline Mat dense_chebyshev(const Mat& C, const ChebyshevParams& cp) {
  const Index n = C.rows();
  const Mat I = Mat::Identity(n, n);
  const Mat B = cp.c2 * (I - cp.c3 * C);
  Mat prev = I, cur = B;
  for (int k = 1; k < cp.K; ++k) {
    Mat next = 2.0 * B * cur - prev;
    prev = std::move(cur);
    cur = std::move(next);
  }
  return I - cur / cheb_scalar(cp, cp.K);
}

/// Symmetric square root of a PSD matrix (negative rounding noise clipped).
inline Mat sqrt_psd(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  const Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Mixing: the operator applied wherever the algorithms multiply by the
// stacked gossip matrix. Either C itself (one round) or P_K(C) (K rounds).
// ---------------------------------------------------------------------------

class Mixing {
 public:
  /// Plain gossip matrix.
  static Mixing plain(const GossipOperator& op) {
    Mixing m;
    m.op_ = &op;
    m.lambda_max_ = op.lambda_max();
    m.lambda_min_nz_ = op.lambda_min_nz();
    return m;
  }

  /// P_K(C) with K = max(1, floor(sqrt(kappa_C))). Falls back to plain C
  /// when kappa_C <= 1 + 1e-9. Spectra come from the Chebyshev bracket unless
  /// dense_spectra is set.
  static Mixing chebyshev(const GossipOperator& op, bool dense_spectra = false) {
    if (!(op.kappa() > kChebyshevDegenerate)) return plain(op);
    Mixing m;
    m.op_ = &op;
    m.accelerated_ = true;
    m.cp_ = chebyshev_params(op.kappa(), op.lambda_max());
    if (dense_spectra) {
      const SpectralInfo s = spectral_info(dense_chebyshev(op.dense(), m.cp_));
      m.lambda_max_ = s.lambda_max;
      m.lambda_min_nz_ = s.lambda_min_nz;
    } else {
      const auto [lo, hi] = chebyshev_eig_bounds(op.kappa(), m.cp_.K);
      m.lambda_max_ = hi;
      m.lambda_min_nz_ = lo;
    }
    return m;
  }

  const GossipOperator& op() const { return *op_; }
  bool accelerated() const { return accelerated_; }
  const ChebyshevParams& params() const { return cp_; }
  /// Communication rounds per application.
  int rounds() const { return accelerated_ ? cp_.K : 1; }
  double lambda_max() const { return lambda_max_; }
  double lambda_min_nz() const { return lambda_min_nz_; }
  double kappa() const { return lambda_max_ / lambda_min_nz_; }

  BlockVec apply(const BlockVec& lambda) const {
    return accelerated_ ? accelerated_gossip(lambda, *op_, cp_) : apply_gossip_block(*op_, lambda);
  }

  /// Dense n x n matrix of the operator (tests and diagnostics).
  Mat dense() const { return accelerated_ ? dense_chebyshev(op_->dense(), cp_) : op_->dense(); }

 private:
  const GossipOperator* op_ = nullptr;
  bool accelerated_ = false;
  ChebyshevParams cp_;
  double lambda_max_ = 0.0;
  double lambda_min_nz_ = 0.0;
};

}  // namespace dualsq
