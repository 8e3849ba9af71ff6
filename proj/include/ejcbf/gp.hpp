#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ejcbf/errors.hpp"
#include "ejcbf/optim.hpp"
#include "ejcbf/rng.hpp"

namespace ejcbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Samples (x, u, y) of the control-affine regression y = f(x) + G(x)u + w.
struct TrainingSet {
  MatrixXd X;  // N x 4m states
  MatrixXd U;  // N x m controls
  MatrixXd Y;  // N x m noisy x4dot targets
  double noise_std = 0.0;

  int count() const { return static_cast<int>(X.rows()); }
  int state_dim() const { return static_cast<int>(X.cols()); }
  int input_dim() const { return static_cast<int>(U.cols()); }

  void validate() const {
    if (U.rows() != X.rows() || Y.rows() != X.rows())
      throw std::invalid_argument("TrainingSet: row counts differ");
    if (Y.cols() != U.cols()) throw std::invalid_argument("TrainingSet: Y/U widths differ");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("TrainingSet: noise_std must be >= 0");
  }
};

/// Squared-exponential kernel with ARD lengthscales.
struct SeKernel {
  double signal_std = 1.0;
  VectorXd lengthscales;

  double operator()(const VectorXd& a, const VectorXd& b) const {
    const double r2 = ((a - b).array() / lengthscales.array()).square().sum();
    return signal_std * signal_std * std::exp(-0.5 * r2);
  }

  double variance() const { return signal_std * signal_std; }

  void validate() const {
    if (!(signal_std > 0.0) || !(lengthscales.minCoeff() > 0.0))
      throw std::invalid_argument("SeKernel: hyperparameters must be positive");
  }
};

/// One SE kernel per f_i plus one per g_ij, composing k_i = k_fi + sum_j uj k_gij uj'.
struct KernelParams {
  std::vector<SeKernel> kf;               // m entries
  std::vector<std::vector<SeKernel>> kg;  // m x m entries

  int output_dim() const { return static_cast<int>(kf.size()); }

  void validate() const {
    if (kg.size() != kf.size()) throw std::invalid_argument("KernelParams: kg outer size != m");
    for (const auto& k : kf) k.validate();
    for (const auto& row : kg) {
      if (row.size() != kf.size()) throw std::invalid_argument("KernelParams: kg row size != m");
      for (const auto& k : row) k.validate();
    }
  }

  static KernelParams isotropic(int m, int state_dim, double sf, double lf, double sg, double lg) {
    KernelParams kp;
    SeKernel f{sf, VectorXd::Constant(state_dim, lf)};
    SeKernel g{sg, VectorXd::Constant(state_dim, lg)};
    kp.kf.assign(m, f);
    kp.kg.assign(m, std::vector<SeKernel>(m, g));
    return kp;
  }
};

/// Prior mean functions f_hat, G_hat of the approximate model.
struct Prior {
  std::function<VectorXd(const VectorXd&)> f_hat;
  std::function<MatrixXd(const VectorXd&)> g_hat;

  static Prior zero(int m) {
    Prior p;
    p.f_hat = [m](const VectorXd&) { return VectorXd::Zero(m).eval(); };
    p.g_hat = [m](const VectorXd&) { return MatrixXd::Zero(m, m).eval(); };
    return p;
  }
};

/// Gram matrix of the composite kernel k_i on the training pairs:
/// K_i = K_fi + sum_j U_j K_gij U_j.
inline MatrixXd composite_gram(const TrainingSet& tset, const KernelParams& kp, int i) {
  const int N = tset.count(), m = kp.output_dim();
  MatrixXd K(N, N);
  for (int a = 0; a < N; ++a) {
    for (int b = a; b < N; ++b) {
      const VectorXd xa = tset.X.row(a), xb = tset.X.row(b);
      double v = kp.kf[i](xa, xb);
      for (int j = 0; j < m; ++j) v += tset.U(a, j) * kp.kg[i][j](xa, xb) * tset.U(b, j);
      K(a, b) = K(b, a) = v;
    }
  }
  return K;
}

struct FitOptions {
  bool optimize = false;  // hyperparameter search via multi-start Nelder-Mead
  int restarts = 3;
  int max_evals = 500;
  std::uint64_t seed = 0;
};

namespace detail {

/// Cholesky of K + noise_var*I with an escalating jitter ladder.
inline MatrixXd jittered_cholesky(MatrixXd K, double noise_var) {
  const int N = static_cast<int>(K.rows());
  K.diagonal().array() += noise_var;
  double jitter = 1e-10 * K.trace() / N;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LLT<MatrixXd> llt(K);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    if (jitter > 1e-4) break;
    K.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw CholeskyFailure("gp: Gram matrix indefinite after jitter ladder");
}

}  // namespace detail

/// Fitted control-affine GP. Immutable after construction; predictions are
/// pure and thread-safe.
class GpModel {
 public:
  GpModel() = default;

  GpModel(TrainingSet tset, Prior prior, KernelParams kp, double beta, double delta)
      : tset_(std::move(tset)), prior_(std::move(prior)), kp_(std::move(kp)),
        beta_(beta), delta_(delta) {
    if (!(beta_ >= 0.0)) throw std::invalid_argument("GpModel: beta must be non-negative");
    if (!(delta_ > 0.0 && delta_ < 1.0)) throw std::invalid_argument("GpModel: delta in (0,1)");
    kp_.validate();
    tset_.validate();
    const int N = tset_.count(), m = kp_.output_dim();
    resid_ = center_targets(tset_, prior_);
    L_.resize(m);
    alpha_.resize(m);
    if (N == 0) return;
    const double noise_var = tset_.noise_std * tset_.noise_std;
    for (int i = 0; i < m; ++i) {
      L_[i] = detail::jittered_cholesky(composite_gram(tset_, kp_, i), noise_var);
      alpha_[i] = L_[i].template triangularView<Eigen::Lower>().solve(resid_.col(i));
      L_[i].template triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_[i]);
    }
  }

  static MatrixXd center_targets(const TrainingSet& tset, const Prior& prior) {
    const int N = tset.count(), m = tset.input_dim();
    MatrixXd resid(N, m);
    for (int n = 0; n < N; ++n) {
      const VectorXd x = tset.X.row(n);
      const VectorXd r = tset.Y.row(n).transpose() - prior.f_hat(x) -
                         prior.g_hat(x) * tset.U.row(n).transpose();
      resid.row(n) = r.transpose();
    }
    return resid;
  }

  int output_dim() const { return kp_.output_dim(); }
  int count() const { return tset_.count(); }
  double beta() const { return beta_; }
  double delta() const { return delta_; }
  const TrainingSet& training_set() const { return tset_; }
  const KernelParams& kernel_params() const { return kp_; }
  const Prior& prior() const { return prior_; }

  /// Per-output posterior mean and standard deviation of f.
  void predict_f(const VectorXd& x, VectorXd& mu_f, VectorXd& sigma_f) const {
    const int N = tset_.count(), m = output_dim();
    mu_f = prior_.f_hat(x);
    sigma_f.resize(m);
    VectorXd k(N), v(N);
    for (int i = 0; i < m; ++i) {
      if (N == 0) {
        sigma_f(i) = kp_.kf[i].signal_std;
        continue;
      }
      for (int n = 0; n < N; ++n) k(n) = kp_.kf[i](x, tset_.X.row(n));
      mu_f(i) += k.dot(alpha_[i]);
      v = L_[i].template triangularView<Eigen::Lower>().solve(k);
      sigma_f(i) = std::sqrt(std::max(0.0, kp_.kf[i].variance() - v.squaredNorm()));
    }
  }

  /// Entrywise posterior mean and standard deviation of G.
  void predict_g(const VectorXd& x, MatrixXd& mu_G, MatrixXd& sigma_G) const {
    const int N = tset_.count(), m = output_dim();
    mu_G = prior_.g_hat(x);
    sigma_G.resize(m, m);
    VectorXd k(N), v(N);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (N == 0) {
          sigma_G(i, j) = kp_.kg[i][j].signal_std;
          continue;
        }
        for (int n = 0; n < N; ++n) k(n) = tset_.U(n, j) * kp_.kg[i][j](x, tset_.X.row(n));
        mu_G(i, j) += k.dot(alpha_[i]);
        v = L_[i].template triangularView<Eigen::Lower>().solve(k);
        sigma_G(i, j) = std::sqrt(std::max(0.0, kp_.kg[i][j].variance() - v.squaredNorm()));
      }
    }
  }

  /// Lemma 1 envelopes: sqrt(beta)*sigma_f per output and the Frobenius bound
  /// sqrt(beta * sum_ij sigma_gij^2).
  void error_envelopes(const VectorXd& x, VectorXd& f_bound, double& g_frobenius_bound) const {
    VectorXd mu_f, sigma_f;
    MatrixXd mu_G, sigma_G;
    predict_f(x, mu_f, sigma_f);
    predict_g(x, mu_G, sigma_G);
    f_bound = std::sqrt(beta_) * sigma_f;
    g_frobenius_bound = std::sqrt(beta_ * sigma_G.array().square().sum());
  }

  /// Per-output log marginal likelihood given the stored Cholesky factors.
  double log_marginal_likelihood(int i) const {
    const int N = tset_.count();
    double logdet = 0.0;
    for (int n = 0; n < N; ++n) logdet += std::log(L_[i](n, n));
    return -0.5 * resid_.col(i).dot(alpha_[i]) - logdet - 0.5 * N * std::log(2.0 * M_PI);
  }

 private:
  TrainingSet tset_;
  Prior prior_;
  KernelParams kp_;
  double beta_ = 1.0;
  double delta_ = 0.05;
  MatrixXd resid_;
  std::vector<MatrixXd> L_;
  std::vector<VectorXd> alpha_;
};

namespace detail {

/// log marginal likelihood of output i for the packed log-parameters
/// [log sf_i, log lf_i(1..d), log sg_i1, log lg_i1(1..d), ...].
inline VectorXd pack_output_params(const KernelParams& kp, int i) {
  const int m = kp.output_dim(), d = static_cast<int>(kp.kf[i].lengthscales.size());
  VectorXd p((1 + d) * (1 + m));
  int at = 0;
  auto put = [&](const SeKernel& k) {
    p(at++) = std::log(k.signal_std);
    for (int q = 0; q < d; ++q) p(at++) = std::log(k.lengthscales(q));
  };
  put(kp.kf[i]);
  for (int j = 0; j < m; ++j) put(kp.kg[i][j]);
  return p;
}

inline void unpack_output_params(const VectorXd& p, KernelParams& kp, int i) {
  const int m = kp.output_dim(), d = static_cast<int>(kp.kf[i].lengthscales.size());
  int at = 0;
  auto take = [&](SeKernel& k) {
    k.signal_std = std::exp(std::clamp(p(at++), -10.0, 10.0));
    for (int q = 0; q < d; ++q)
      k.lengthscales(q) = std::exp(std::clamp(p(at++), -10.0, 10.0));
  };
  take(kp.kf[i]);
  for (int j = 0; j < m; ++j) take(kp.kg[i][j]);
}

inline double neg_lml_output(const TrainingSet& tset, const KernelParams& kp, int i,
                             const MatrixXd& resid) {
  const int N = tset.count();
  MatrixXd L;
  try {
    L = jittered_cholesky(composite_gram(tset, kp, i), tset.noise_std * tset.noise_std);
  } catch (const CholeskyFailure&) {
    return 1e100;
  }
  VectorXd a = L.triangularView<Eigen::Lower>().solve(resid.col(i));
  double logdet = 0.0;
  for (int n = 0; n < N; ++n) logdet += std::log(L(n, n));
  return 0.5 * a.squaredNorm() + logdet + 0.5 * N * std::log(2.0 * M_PI);
}

}  // namespace detail

/// Fits the model: centers targets against the prior, factorizes the Gram
/// matrices, and optionally maximizes the per-output log marginal likelihood.
inline GpModel fit(const TrainingSet& tset, const Prior& prior, KernelParams kp, double beta,
                   double delta, const FitOptions& opts = {}) {
  tset.validate();
  kp.validate();
  if (opts.optimize && tset.count() > 0) {
    const MatrixXd resid = GpModel::center_targets(tset, prior);
    RandomStream rng(opts.seed);
    for (int i = 0; i < kp.output_dim(); ++i) {
      const VectorXd p0 = detail::pack_output_params(kp, i);
      VectorXd best_p = p0;
      double best_v = detail::neg_lml_output(tset, kp, i, resid);
      for (int r = 0; r < opts.restarts; ++r) {
        VectorXd start = p0;
        if (r > 0)
          for (int q = 0; q < start.size(); ++q) start(q) += rng.uniform(-1.0, 1.0);
        KernelParams trial = kp;
        auto objective = [&](const VectorXd& p) {
          detail::unpack_output_params(p, trial, i);
          return detail::neg_lml_output(tset, trial, i, resid);
        };
        double value = 0.0;
        const VectorXd p = nelder_mead(objective, start, 0.3, opts.max_evals, &value);
        if (value < best_v) {
          best_v = value;
          best_p = p;
        }
      }
      detail::unpack_output_params(best_p, kp, i);
    }
  }
  return GpModel(tset, prior, std::move(kp), beta, delta);
}

}  // namespace ejcbf
