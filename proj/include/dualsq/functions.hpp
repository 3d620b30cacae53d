#pragma once

#include "dualsq/core.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <utility>

namespace dualsq {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Smooth strongly convex local objectives f_i.
// ---------------------------------------------------------------------------

/// A mu-strongly convex, L-smooth function. The built-in family is the
/// quadratic 1/2 x'Px + q'x (which includes (beta/2)||x||^2); a custom kind
/// accepts user-supplied value/gradient callbacks with declared moduli.
class SmoothFn {
 public:
  enum class Kind { quadratic, custom };

  using ValueFn = std::function<double(const Vec&)>;
  using GradFn = std::function<Vec(const Vec&)>;

  /// 1/2 x'(P + shift I)x + q'x. P must be symmetric; the shifted matrix must
  /// be positive definite.
  static SmoothFn quadratic(Mat P, Vec q, double shift = 0.0) {
    if (P.rows() != P.cols() || P.rows() != q.size())
      throw ConfigError("quadratic: P must be square and match q");
    if (!P.allFinite() || !q.allFinite()) throw DomainError("quadratic: non-finite data");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + P.cwiseAbs().maxCoeff()))
      throw ConfigError("quadratic: P must be symmetric");
    if (shift < 0.0) throw ConfigError("quadratic: shift must be nonnegative");
    SmoothFn f;
    f.kind_ = Kind::quadratic;
    f.dim_ = q.size();
    P = (0.5 * (P + P.transpose())).eval();
    P.diagonal().array() += shift;
    Eigen::SelfAdjointEigenSolver<Mat> es(P, Eigen::EigenvaluesOnly);
    f.mu_ = es.eigenvalues().minCoeff();
    f.L_ = es.eigenvalues().maxCoeff();
    if (!(f.mu_ > 0.0))
      throw ConfigError("quadratic: strong convexity modulus must be positive (add a shift >= 1e-12)");
    f.P_ = std::move(P);
    f.q_ = std::move(q);
    f.llt_ = std::make_shared<const Eigen::LLT<Mat>>(f.P_);
    return f;
  }

  /// (beta/2)||x||^2.
  static SmoothFn scaled_sq_norm(Index dim, double beta) {
    if (!(beta > 0.0)) throw ConfigError("scaled_sq_norm: beta must be positive");
    SmoothFn f = quadratic(beta * Mat::Identity(dim, dim), Vec::Zero(dim));
    f.isotropic_ = true;
    f.beta_ = beta;
    f.mu_ = beta;
    f.L_ = beta;
    return f;
  }

  static SmoothFn custom(Index dim, ValueFn value, GradFn grad, double mu, double L) {
    if (!(mu > 0.0) || L < mu) throw ConfigError("custom smooth fn: need 0 < mu <= L");
    SmoothFn f;
    f.kind_ = Kind::custom;
    f.dim_ = dim;
    f.mu_ = mu;
    f.L_ = L;
    f.value_ = std::move(value);
    f.grad_ = std::move(grad);
    return f;
  }

  double value(const Vec& x) const {
    if (kind_ == Kind::custom) return value_(x);
    if (isotropic_) return 0.5 * beta_ * x.squaredNorm();
    return 0.5 * x.dot(P_ * x) + q_.dot(x);
  }

  Vec grad(const Vec& x) const {
    if (kind_ == Kind::custom) return grad_(x);
    if (isotropic_) return beta_ * x;
    return P_ * x + q_;
  }

  /// Solves (P + shift I) x = rhs; quadratic kind only.
  Vec solve(const Vec& rhs) const {
    if (isotropic_) return rhs / beta_;
    return llt_->solve(rhs);
  }

  Kind kind() const { return kind_; }
  bool is_quadratic() const { return kind_ == Kind::quadratic; }
  bool is_isotropic() const { return isotropic_; }
  /// beta of the isotropic kind.
  double beta() const { return beta_; }
  Index dim() const { return dim_; }
  double mu() const { return mu_; }
  double L() const { return L_; }
  const Mat& P() const { return P_; }
  const Vec& q() const { return q_; }

 private:
  SmoothFn() = default;

  Kind kind_ = Kind::quadratic;
  Index dim_ = 0;
  double mu_ = 0.0;
  double L_ = 0.0;
  bool isotropic_ = false;
  double beta_ = 0.0;
  Mat P_;
  Vec q_;
  std::shared_ptr<const Eigen::LLT<Mat>> llt_;
  ValueFn value_;
  GradFn grad_;
};

// ---------------------------------------------------------------------------
// Proximal-friendly nonsmooth terms g_i.
// ---------------------------------------------------------------------------

/// Closed proper convex function with a cheap proximal operator and an exact
/// distance-to-subdifferential routine.
class ProxFn {
 public:
  enum class Kind { zero, l1, box, singleton, custom };

  using ValueFn = std::function<double(const Vec&)>;
  using ProxOp = std::function<Vec(double, const Vec&)>;
  using DistFn = std::function<double(const Vec&, const Vec&)>;

  static ProxFn zero(Index dim) {
    ProxFn g;
    g.kind_ = Kind::zero;
    g.dim_ = dim;
    return g;
  }

  /// weight * ||x||_1
  static ProxFn l1(Index dim, double weight) {
    if (!(weight >= 0.0)) throw ConfigError("l1: weight must be nonnegative");
    ProxFn g;
    g.kind_ = Kind::l1;
    g.dim_ = dim;
    g.weight_ = weight;
    return g;
  }

  /// Indicator of {lo <= x <= hi}.
  static ProxFn box(Vec lo, Vec hi) {
    if (lo.size() != hi.size()) throw ConfigError("box: bound sizes differ");
    if ((lo.array() > hi.array()).any()) throw ConfigError("box: empty box");
    ProxFn g;
    g.kind_ = Kind::box;
    g.dim_ = lo.size();
    g.a_ = std::move(lo);
    g.b_ = std::move(hi);
    return g;
  }

  /// Indicator of {b}.
  static ProxFn singleton(Vec b) {
    ProxFn g;
    g.kind_ = Kind::singleton;
    g.dim_ = b.size();
    g.a_ = std::move(b);
    return g;
  }

  /// The distance routine must return min_{s in dg(x)} ||v + s|| exactly;
  /// there is no generic fallback.
  static ProxFn custom(Index dim, ValueFn value, ProxOp prox, DistFn dist) {
    if (!value || !prox || !dist) throw ConfigError("custom prox fn: all three callbacks are required");
    ProxFn g;
    g.kind_ = Kind::custom;
    g.dim_ = dim;
    g.value_ = std::move(value);
    g.prox_ = std::move(prox);
    g.dist_ = std::move(dist);
    return g;
  }

  Kind kind() const { return kind_; }
  Index dim() const { return dim_; }
  bool is_zero() const { return kind_ == Kind::zero || (kind_ == Kind::l1 && weight_ == 0.0); }
  double weight() const { return weight_; }
  const Vec& lower() const { return a_; }
  const Vec& upper() const { return b_; }

  bool in_domain(const Vec& x) const {
    switch (kind_) {
      case Kind::box:
        return (x.array() >= a_.array()).all() && (x.array() <= b_.array()).all();
      case Kind::singleton:
        return x == a_;
      case Kind::custom:
        return std::isfinite(value_(x));
      default:
        return true;
    }
  }

  double value(const Vec& x) const {
    switch (kind_) {
      case Kind::zero:
        return 0.0;
      case Kind::l1:
        return weight_ * x.lpNorm<1>();
      case Kind::box:
      case Kind::singleton:
        return in_domain(x) ? 0.0 : kInf;
      case Kind::custom:
        return value_(x);
    }
    return kInf;
  }

  /// argmin_y g(y) + ||y - v||^2 / (2 alpha)
  Vec prox(double alpha, const Vec& v) const {
    if (!(alpha > 0.0)) throw DomainError("prox: step must be positive");
    require_finite(v, "prox");
    switch (kind_) {
      case Kind::zero:
        return v;
      case Kind::l1: {
        const double t = alpha * weight_;
        return v.unaryExpr([t](double s) {
          return s > t ? s - t : (s < -t ? s + t : 0.0);
        });
      }
      case Kind::box:
        return v.cwiseMax(a_).cwiseMin(b_);
      case Kind::singleton:
        return a_;
      case Kind::custom:
        return prox_(alpha, v);
    }
    return v;
  }

  /// min_{s in dg(x)} ||v + s||
  double subdiff_dist(const Vec& x, const Vec& v) const {
    switch (kind_) {
      case Kind::zero:
        return v.norm();
      case Kind::l1: {
        double s = 0.0;
        for (Index j = 0; j < x.size(); ++j) {
          double r;
          if (x[j] > 0.0)
            r = v[j] + weight_;
          else if (x[j] < 0.0)
            r = v[j] - weight_;
          else
            r = std::max(std::abs(v[j]) - weight_, 0.0);
          s += r * r;
        }
        return std::sqrt(s);
      }
      case Kind::box: {
        if (!in_domain(x)) throw DomainError("subdiff_dist: x outside the box");
        double s = 0.0;
        for (Index j = 0; j < x.size(); ++j) {
          double r;
          if (a_[j] == b_[j])
            r = 0.0;
          else if (x[j] == a_[j])
            r = std::max(-v[j], 0.0);  // normal cone (-inf, 0]
          else if (x[j] == b_[j])
            r = std::max(v[j], 0.0);  // normal cone [0, inf)
          else
            r = v[j];
          s += r * r;
        }
        return std::sqrt(s);
      }
      case Kind::singleton:
        if (!in_domain(x)) throw DomainError("subdiff_dist: x differs from the singleton");
        return 0.0;
      case Kind::custom:
        if (!in_domain(x)) throw DomainError("subdiff_dist: x outside dom(g)");
        return dist_(x, v);
    }
    return kInf;
  }

 private:
  ProxFn() = default;

  Kind kind_ = Kind::zero;
  Index dim_ = 0;
  double weight_ = 0.0;
  Vec a_, b_;
  ValueFn value_;
  ProxOp prox_;
  DistFn dist_;
};

inline Vec prox_apply(const ProxFn& g, double alpha, const Vec& v) {
  if (v.size() != g.dim()) throw DomainError("prox_apply: dimension mismatch");
  return g.prox(alpha, v);
}

inline double subdiff_distance(const ProxFn& g, const Vec& x, const Vec& v) {
  if (x.size() != g.dim() || v.size() != g.dim())
    throw DomainError("subdiff_distance: dimension mismatch");
  return g.subdiff_dist(x, v);
}

// ---------------------------------------------------------------------------
// The coupling function h and its conjugate h*.
// ---------------------------------------------------------------------------

/// A conjugate pair (h, h*) on R^p. Every built-in h* has a closed-form prox;
/// the smooth ones also expose a gradient.
class Coupling {
 public:
  enum class Kind {
    shifted_quadratic,  // h = ||. - y||^2/(2s),            h* = (s/2)||w||^2 + y'w
    clipped_quadratic,  // h = ||. - y||^2/(2s) + i_{>=0},   h*_j piecewise (C^1)
    linear,             // h = i_{b},                        h* = b'w
    linear_nonneg,      // h = i_{<= b},                     h* = b'w + i_{>=0}
  };

  static Coupling shifted_quadratic(double scale, Vec y) {
    if (!(scale > 0.0)) throw ConfigError("shifted_quadratic: scale must be positive");
    Coupling c;
    c.kind_ = Kind::shifted_quadratic;
    c.s_ = scale;
    c.v_ = std::move(y);
    c.L_ = scale;
    c.mu_ = scale;
    return c;
  }

  static Coupling clipped_quadratic(double scale, Vec y) {
    if (!(scale > 0.0)) throw ConfigError("clipped_quadratic: scale must be positive");
    Coupling c;
    c.kind_ = Kind::clipped_quadratic;
    c.s_ = scale;
    c.v_ = std::move(y);
    c.L_ = scale;
    c.mu_ = 0.0;
    return c;
  }

  static Coupling linear(Vec b) {
    Coupling c;
    c.kind_ = Kind::linear;
    c.v_ = std::move(b);
    return c;
  }

  static Coupling linear_nonneg(Vec b) {
    Coupling c;
    c.kind_ = Kind::linear_nonneg;
    c.v_ = std::move(b);
    return c;
  }

  Kind kind() const { return kind_; }
  Index dim() const { return v_.size(); }
  double scale() const { return s_; }
  /// y for the quadratic kinds, b for the linear kinds.
  const Vec& offset() const { return v_; }
  double L_hstar() const { return L_; }
  double mu_hstar() const { return mu_; }
  bool has_hstar_grad() const { return kind_ != Kind::linear_nonneg; }
  bool has_hstar_prox() const { return true; }

  bool in_hstar_domain(const Vec& w) const {
    if (kind_ == Kind::linear_nonneg) return (w.array() >= 0.0).all();
    return w.allFinite();
  }

  /// h(x), +inf outside dom(h).
  double h_value(const Vec& x) const {
    switch (kind_) {
      case Kind::shifted_quadratic:
        return (x - v_).squaredNorm() / (2.0 * s_);
      case Kind::clipped_quadratic:
        return (x.array() >= 0.0).all() ? (x - v_).squaredNorm() / (2.0 * s_) : kInf;
      case Kind::linear:
        return x == v_ ? 0.0 : kInf;
      case Kind::linear_nonneg:
        return (x.array() <= v_.array()).all() ? 0.0 : kInf;
    }
    return kInf;
  }

  double hstar_value(const Vec& w) const {
    switch (kind_) {
      case Kind::shifted_quadratic:
        return 0.5 * s_ * w.squaredNorm() + v_.dot(w);
      case Kind::clipped_quadratic: {
        double total = 0.0;
        for (Index j = 0; j < w.size(); ++j) {
          const double kink = -v_[j] / s_;
          total += w[j] >= kink ? 0.5 * s_ * w[j] * w[j] + v_[j] * w[j]
                                : -v_[j] * v_[j] / (2.0 * s_);
        }
        return total;
      }
      case Kind::linear:
        return v_.dot(w);
      case Kind::linear_nonneg:
        return in_hstar_domain(w) ? v_.dot(w) : kInf;
    }
    return kInf;
  }

  Vec hstar_grad(const Vec& w) const {
    switch (kind_) {
      case Kind::shifted_quadratic:
        return s_ * w + v_;
      case Kind::clipped_quadratic: {
        Vec g(w.size());
        for (Index j = 0; j < w.size(); ++j)
          g[j] = w[j] >= -v_[j] / s_ ? s_ * w[j] + v_[j] : 0.0;
        return g;
      }
      case Kind::linear:
        return v_;
      case Kind::linear_nonneg:
        break;
    }
    throw DomainError("hstar_grad: h* is not differentiable for this coupling");
  }

  /// prox_{step h*}(u)
  Vec hstar_prox(double step, const Vec& u) const {
    if (!(step > 0.0)) throw DomainError("hstar_prox: step must be positive");
    switch (kind_) {
      case Kind::shifted_quadratic:
        return (u - step * v_) / (1.0 + step * s_);
      case Kind::clipped_quadratic: {
        Vec out(u.size());
        for (Index j = 0; j < u.size(); ++j)
          out[j] = u[j] >= -v_[j] / s_ ? (u[j] - step * v_[j]) / (1.0 + step * s_) : u[j];
        return out;
      }
      case Kind::linear:
        return u - step * v_;
      case Kind::linear_nonneg:
        return (u - step * v_).cwiseMax(0.0);
    }
    return u;
  }

  /// min_{s in dh*(w)} ||u - weight * s||
  double hstar_dist(const Vec& w, const Vec& u, double weight = 1.0) const {
    if (!in_hstar_domain(w)) throw DomainError("hstar_dist: point outside dom(h*)");
    if (kind_ != Kind::linear_nonneg) return (u - weight * hstar_grad(w)).norm();
    double s = 0.0;
    for (Index j = 0; j < w.size(); ++j) {
      // dh*_j(w) = b_j + N_{>=0}(w_j)
      const double r = u[j] - weight * v_[j];
      const double d = w[j] > 0.0 ? r : std::max(r, 0.0);
      s += d * d;
    }
    return std::sqrt(s);
  }

 private:
  Coupling() = default;

  Kind kind_ = Kind::linear;
  double s_ = 0.0;
  Vec v_;
  double L_ = 0.0;
  double mu_ = 0.0;
};

}  // namespace dualsq
