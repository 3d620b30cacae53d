#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualsq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// One vector per agent; entry i is owned by agent i. Used both for stacked
/// primal iterates (ragged, dimension d_i) and for n x p dual blocks.
using BlockVec = std::vector<Vec>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain of a function or operator.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

/// An iterative routine hit its iteration cap. Carries the best residual seen.
class IterationCapError : public Error {
 public:
  IterationCapError(const std::string& what, double best_residual)
      : Error(what + " (best residual " + std::to_string(best_residual) + ")"),
        best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

inline void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw DomainError(std::string(what) + ": non-finite component");
}

inline BlockVec zero_blocks(std::size_t n, Index width) {
  return BlockVec(n, Vec::Zero(width));
}

/// Sum of squared norms, accumulated in agent order.
inline double squared_norm(const BlockVec& b) {
  double s = 0.0;
  for (const auto& v : b) s += v.squaredNorm();
  return s;
}

inline double distance(const BlockVec& a, const BlockVec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]).squaredNorm();
  return std::sqrt(s);
}

/// Concatenates a block vector into one column.
inline Vec flatten(const BlockVec& b) {
  Index total = 0;
  for (const auto& v : b) total += v.size();
  Vec out(total);
  Index off = 0;
  for (const auto& v : b) {
    out.segment(off, v.size()) = v;
    off += v.size();
  }
  return out;
}

/// Splits a column into blocks of the given sizes.
inline BlockVec unflatten(const Vec& flat, const std::vector<Index>& sizes) {
  BlockVec out;
  out.reserve(sizes.size());
  Index off = 0;
  for (Index s : sizes) {
    out.push_back(flat.segment(off, s));
    off += s;
  }
  return out;
}

}  // namespace dualsq
