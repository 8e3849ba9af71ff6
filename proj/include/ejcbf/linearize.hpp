#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "ejcbf/errors.hpp"
#include "ejcbf/gp.hpp"
#include "ejcbf/robot.hpp"

namespace ejcbf {

enum class Branch { GP, BACKUP };

/// Result of one call to the switching feedback linearization: the torque, the
/// branch taken, and the (gamma_E, e_bar) envelope handed to the safety filter.
struct LinearizationOutcome {
  VectorXd u;
  Branch active_branch = Branch::GP;
  double gamma_E = 0.0;   // always < 1 by construction
  double e_bar = 0.0;
  VectorXd mu_f;
  double min_singular_mu_G = 0.0;
};

struct SwitchConfig {
  double zeta = 0.95;  // tightened GP-branch threshold, in (0,1)
  MatrixBounds bounds;
};

struct GpBranchMetrics {
  double gamma_E = 0.0;
  double e_bar = 0.0;
  VectorXd mu_f;
  MatrixXd mu_G;
  double min_singular_mu_G = 0.0;
};

struct BackupMetrics {
  double gamma_E = 0.0;
  double e_bar = 0.0;
  VectorXd mu_f;
};

namespace detail {

/// Smallest singular value; closed form for 2x2 from the Gram invariants.
inline double min_singular_value(const MatrixXd& A) {
  if (A.rows() == 2 && A.cols() == 2) {
    const double t = A.squaredNorm();
    const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
    const double disc = std::sqrt(std::max(0.0, t * t - 4.0 * det * det));
    return std::sqrt(std::max(0.0, 0.5 * (t - disc)));
  }
  return A.jacobiSvd().singularValues().minCoeff();
}

/// Adjugate inverse-times-vector for 2x2, general LU otherwise. Throws
/// SingularMeanG below the determinant guard so callers can fall back.
inline VectorXd solve_mu_G(const MatrixXd& G, const VectorXd& rhs) {
  if (G.rows() == 2 && G.cols() == 2) {
    const double det = G(0, 0) * G(1, 1) - G(0, 1) * G(1, 0);
    if (std::abs(det) <= 1e-12) throw SingularMeanG("solve_mu_G: 2x2 determinant below guard");
    VectorXd u(2);
    u(0) = (G(1, 1) * rhs(0) - G(0, 1) * rhs(1)) / det;
    u(1) = (G(0, 0) * rhs(1) - G(1, 0) * rhs(0)) / det;
    return u;
  }
  Eigen::FullPivLU<MatrixXd> lu(G);
  if (!lu.isInvertible()) throw SingularMeanG("solve_mu_G: mu_G not invertible");
  return lu.solve(rhs);
}

}  // namespace detail

/// Eq. (22)-(23) envelopes of the GP-based linearization pi_GP.
inline GpBranchMetrics gp_branch_metrics(const GpModel& model, const VectorXd& x) {
  GpBranchMetrics m;
  VectorXd sigma_f;
  MatrixXd sigma_G;
  model.predict_f(x, m.mu_f, sigma_f);
  model.predict_g(x, m.mu_G, sigma_G);
  m.min_singular_mu_G = detail::min_singular_value(m.mu_G);
  if (m.min_singular_mu_G == 0.0)
    throw SingularMeanG("gp_branch_metrics: sigma_min(mu_G) = 0");
  const double g_fro = std::sqrt(model.beta() * sigma_G.array().square().sum());
  m.gamma_E = g_fro / m.min_singular_mu_G;
  m.e_bar = std::sqrt(model.beta()) * sigma_f.norm() + m.gamma_E * m.mu_f.norm();
  return m;
}

/// Eq. (26)-(27) envelopes of the conservative back-up law pi_gamma; gamma is
/// state independent, e_bar still tracks the GP posterior at x.
inline BackupMetrics backup_branch_metrics(const MatrixBounds& bounds, const GpModel& model,
                                           const VectorXd& x) {
  BackupMetrics m;
  VectorXd sigma_f;
  model.predict_f(x, m.mu_f, sigma_f);
  m.gamma_E = (bounds.gamma_G_hi - bounds.gamma_G_lo) / bounds.gamma_G_hi;
  m.e_bar = std::sqrt(model.beta()) * sigma_f.norm() + m.gamma_E * m.mu_f.norm();
  return m;
}

/// Eq. (30) switching rule: pi_GP when gamma_E_GP <= zeta (ties take the GP
/// branch), else pi_gamma; a singular mu_G also falls to the back-up.
inline LinearizationOutcome select_and_linearize(const GpModel& model, const SwitchConfig& cfg,
                                                 const VectorXd& x, const VectorXd& nu) {
  LinearizationOutcome out;
  try {
    const auto gp = gp_branch_metrics(model, x);
    if (gp.gamma_E <= cfg.zeta) {
      out.u = detail::solve_mu_G(gp.mu_G, nu - gp.mu_f);
      out.active_branch = Branch::GP;
      out.gamma_E = gp.gamma_E;
      out.e_bar = gp.e_bar;
      out.mu_f = gp.mu_f;
      out.min_singular_mu_G = gp.min_singular_mu_G;
      return out;
    }
    out.min_singular_mu_G = gp.min_singular_mu_G;
  } catch (const SingularMeanG&) {
    out.min_singular_mu_G = 0.0;
  }
  const auto bk = backup_branch_metrics(cfg.bounds, model, x);
  out.u = (nu - bk.mu_f) / cfg.bounds.gamma_G_hi;
  out.active_branch = Branch::BACKUP;
  out.gamma_E = bk.gamma_E;
  out.e_bar = bk.e_bar;
  out.mu_f = bk.mu_f;
  return out;
}

}  // namespace ejcbf
