#ifndef HTBO_GP_HPP
#define HTBO_GP_HPP

// Exact GP regression with a Matern(5/2) ARD kernel, a constant mean and
// optional per-dimension Beta-CDF input warping.

#include "htbo/core.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace htbo {

struct BetaWarp {
  double alpha = 1.0;
  double beta = 1.0;
  bool operator==(const BetaWarp&) const = default;
};

struct Hyperparams {
  double amplitude = 1.0;
  Vector length_scales;
  double noise_var = 0.0;
  double mean_const = 0.0;
  std::optional<std::vector<BetaWarp>> warp;

  Index dim() const { return Index(length_scales.size()); }
  bool warped() const { return warp.has_value(); }

  bool operator==(const Hyperparams& o) const {
    return amplitude == o.amplitude && length_scales == o.length_scales && noise_var == o.noise_var &&
           mean_const == o.mean_const && warp == o.warp;
  }
};

inline void validate(const Hyperparams& hp, Index d) {
  auto bad = [](const std::string& what) { throw InvalidHyperparameter("hyperparameter: " + what); };
  if (!std::isfinite(hp.amplitude) || hp.amplitude <= 0.0) bad("amplitude must be positive and finite");
  if (hp.dim() != d) bad("length_scales has dimension " + std::to_string(hp.dim()) + ", expected " + std::to_string(d));
  for (double l : hp.length_scales)
    if (!std::isfinite(l) || l <= 0.0) bad("length scales must be positive and finite");
  if (!std::isfinite(hp.noise_var) || hp.noise_var < 0.0) bad("noise variance must be nonnegative and finite");
  if (!std::isfinite(hp.mean_const)) bad("mean constant must be finite");
  if (hp.warp) {
    if (hp.warp->size() != d) bad("warp has wrong dimension");
    for (const auto& w : *hp.warp)
      if (!std::isfinite(w.alpha) || !std::isfinite(w.beta) || w.alpha <= 0.0 || w.beta <= 0.0)
        bad("warp parameters must be positive and finite");
  }
}

/// Regularised incomplete beta I_u(a, b), evaluated in double precision.
inline double beta_cdf(double a, double b, double u) {
  using policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return boost::math::ibeta(a, b, u, policy());
}

/// Normalises x into the unit box and pushes each coordinate through the
/// Beta CDF I_u(alpha_k, beta_k). Without warp parameters this is the
/// normalisation alone.
inline Vector warp_input(const Vector& x, const Bounds& bounds, const Hyperparams& hp) {
  Vector u = bounds.normalise(x);
  if (!hp.warp) return u;
  const auto& w = *hp.warp;
  if (Index(u.size()) != w.size()) throw InvalidHyperparameter("warp has wrong dimension");
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double a = w[Index(k)].alpha, b = w[Index(k)].beta;
    if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0)
      throw InvalidHyperparameter("warp parameters must be positive and finite");
    const double uk = std::clamp(u[k], 0.0, 1.0);
    u[k] = beta_cdf(a, b, uk);
  }
  return u;
}

/// Coordinates the kernel sees: raw inputs, or warped unit-box inputs.
inline Vector feature(const Vector& x, const Bounds& bounds, const Hyperparams& hp) {
  return hp.warped() ? warp_input(x, bounds, hp) : x;
}

/// Rows of X mapped affinely into the unit box and clamped to it.
inline Matrix normalise_rows(const Matrix& X, const Bounds& bounds) {
  Matrix U(X.rows(), X.cols());
  for (Eigen::Index k = 0; k < X.cols(); ++k) {
    const double w = bounds.upper[k] - bounds.lower[k];
    if (w > 0.0)
      U.col(k) = ((X.col(k).array() - bounds.lower[k]) / w).max(0.0).min(1.0).matrix();
    else
      U.col(k).setZero();
  }
  return U;
}

/// Beta-CDF warp of column k of a unit-box matrix, written into F.
inline void warp_column(const Matrix& U, Eigen::Index k, const BetaWarp& w, Matrix& F) {
  if (!std::isfinite(w.alpha) || !std::isfinite(w.beta) || w.alpha <= 0.0 || w.beta <= 0.0)
    throw InvalidHyperparameter("warp parameters must be positive and finite");
  for (Eigen::Index i = 0; i < U.rows(); ++i) F(i, k) = beta_cdf(w.alpha, w.beta, U(i, k));
}

inline Matrix feature_matrix(const Matrix& X, const Bounds& bounds, const Hyperparams& hp) {
  if (!hp.warped()) return X;
  const Matrix U = normalise_rows(X, bounds);
  Matrix F(U.rows(), U.cols());
  for (Eigen::Index k = 0; k < U.cols(); ++k) warp_column(U, k, (*hp.warp)[Index(k)], F);
  return F;
}

namespace detail {

inline double matern52(double amplitude, double r) {
  const double s = std::sqrt(5.0) * r;
  return amplitude * std::exp(-s) * (1.0 + s + s * s / 3.0);
}

}  // namespace detail

/// Matern(5/2) ARD covariance between two feature-space points.
inline double kernel(const Vector& x, const Vector& x2, const Hyperparams& hp) {
  const double r2 = ((x - x2).array() / hp.length_scales.array()).square().sum();
  return detail::matern52(hp.amplitude, std::sqrt(r2));
}

/// Gram matrix over the rows of F (feature space), built from exact differences.
inline Matrix gram(const Matrix& F, const Hyperparams& hp) {
  const Eigen::Index n = F.rows();
  const Matrix S = F * hp.length_scales.cwiseInverse().asDiagonal();
  Matrix K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = hp.amplitude;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double r = (S.row(i) - S.row(j)).norm();
      K(i, j) = K(j, i) = detail::matern52(hp.amplitude, r);
    }
  }
  return K;
}

/// Cross covariance between rows of A and rows of B (both feature space).
inline Matrix cross_kernel(const Matrix& A, const Matrix& B, const Hyperparams& hp) {
  const Vector inv = hp.length_scales.cwiseInverse();
  const Matrix SA = A * inv.asDiagonal();
  const Matrix SB = B * inv.asDiagonal();
  Matrix R2 = (-2.0 * SA * SB.transpose()).eval();
  R2.colwise() += SA.rowwise().squaredNorm();
  R2.rowwise() += SB.rowwise().squaredNorm().transpose();
  const Eigen::ArrayXXd s = std::sqrt(5.0) * R2.array().max(0.0).sqrt();
  return (hp.amplitude * (-s).exp() * (1.0 + s + s.square() / 3.0)).matrix();
}

struct JitterPolicy {
  double initial = 1e-10;  // relative to amplitude
  double maximum = 1e-4;
  double factor = 10.0;
};

struct CholeskyResult {
  Matrix lower;
  double jitter = 0.0;
};

/// Cholesky of K + noise*I + jitter*I, escalating jitter until success.
inline CholeskyResult jittered_cholesky(const Matrix& K, double noise_var, double amplitude,
                                        const JitterPolicy& policy = {}) {
  const Eigen::Index n = K.rows();
  double jitter = policy.initial * amplitude;
  const double max_jitter = policy.maximum * amplitude * (1.0 + 1e-12);
  for (;;) {
    Matrix A = K;
    A.diagonal().array() += noise_var + jitter;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() == Eigen::Success) {
      Matrix L = llt.matrixL();
      bool ok = true;
      for (Eigen::Index i = 0; i < n && ok; ++i) ok = std::isfinite(L(i, i)) && L(i, i) > 0.0;
      if (ok) return {std::move(L), jitter};
    }
    if (jitter * policy.factor > max_jitter) throw IllConditionedKernel(jitter);
    jitter *= policy.factor;
  }
}

/// Log marginal likelihood of y given feature-space inputs F.
inline double log_marginal_likelihood(const Matrix& F, const Vector& y, const Hyperparams& hp) {
  const auto chol = jittered_cholesky(gram(F, hp), hp.noise_var, hp.amplitude);
  const auto L = chol.lower.triangularView<Eigen::Lower>();
  const Vector v = L.solve((y.array() - hp.mean_const).matrix());
  const double logdet = 2.0 * chol.lower.diagonal().array().log().sum();
  return -0.5 * (v.squaredNorm() + logdet + double(y.size()) * std::log(2.0 * std::numbers::pi));
}

inline double log_marginal_likelihood(const Dataset& data, const Hyperparams& hp) {
  if (data.empty()) throw Error("log_marginal_likelihood: empty dataset");
  validate(hp, data.dim());
  return log_marginal_likelihood(feature_matrix(data.input_matrix(), data.bounds(), hp), data.output_vector(), hp);
}

struct Prediction {
  double mean = 0.0;
  double var = 0.0;
};

/// Fitted GP for one hyper-parameter setting. Immutable once built, so
/// concurrent predict() calls are safe.
class GpPosterior {
public:
  static GpPosterior fit(const Dataset& data, const Hyperparams& hp) {
    if (data.empty()) throw Error("fit: empty dataset");
    validate(hp, data.dim());
    GpPosterior gp;
    gp.bounds_ = data.bounds();
    gp.hp_ = hp;
    gp.inputs_ = data.input_matrix();
    gp.features_ = feature_matrix(gp.inputs_, gp.bounds_, hp);
    auto chol = jittered_cholesky(gram(gp.features_, hp), hp.noise_var, hp.amplitude);
    gp.chol_ = std::move(chol.lower);
    gp.jitter_ = chol.jitter;
    const auto L = gp.chol_.triangularView<Eigen::Lower>();
    const Vector v = L.solve((data.output_vector().array() - hp.mean_const).matrix());
    gp.alpha_ = gp.chol_.transpose().triangularView<Eigen::Upper>().solve(v);
    gp.chol_inv_ = L.solve(Matrix::Identity(gp.chol_.rows(), gp.chol_.cols()));
    return gp;
  }

  const Hyperparams& hyperparams() const { return hp_; }
  const Bounds& bounds() const { return bounds_; }
  const Matrix& inputs() const { return inputs_; }
  const Matrix& chol() const { return chol_; }
  const Vector& alpha() const { return alpha_; }
  double jitter() const { return jitter_; }
  Index size() const { return Index(inputs_.rows()); }

  Prediction predict(const Vector& x) const {
    const Vector f = feature(x, bounds_, hp_);
    Vector k(features_.rows());
    for (Eigen::Index i = 0; i < k.size(); ++i) k[i] = kernel(features_.row(i).transpose(), f, hp_);
    const Vector v = chol_.triangularView<Eigen::Lower>().solve(k);
    return {hp_.mean_const + k.dot(alpha_), std::max(0.0, hp_.amplitude - v.squaredNorm())};
  }

  /// Predicts every row of X (raw inputs). Uses dense products against the
  /// inverse Cholesky factor, which is fast for many queries.
  void predict_batch(const Matrix& X, Vector& mean, Vector& var) const {
    const Matrix Ks = cross_kernel(feature_matrix(X, bounds_, hp_), features_, hp_);
    mean = (Ks * alpha_).array() + hp_.mean_const;
    const Matrix V = Ks * chol_inv_.transpose();
    var = (hp_.amplitude - V.rowwise().squaredNorm().array()).max(0.0).matrix();
  }

  /// Posterior with no data: the prior itself. Used as a fallback when a
  /// leaf sample cannot be factorised.
  Prediction prior() const { return {hp_.mean_const, hp_.amplitude}; }

private:
  GpPosterior() = default;

  Bounds bounds_;
  Hyperparams hp_;
  Matrix inputs_;
  Matrix features_;
  Matrix chol_;
  Matrix chol_inv_;
  Vector alpha_;
  double jitter_ = 0.0;
};

}  // namespace htbo

#endif  // HTBO_GP_HPP
