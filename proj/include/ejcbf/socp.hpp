#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "ejcbf/cbf.hpp"

namespace ejcbf {

/// One second-order cone constraint ||P z + q|| <= r'z + s.
struct SocCone {
  MatrixXd P;
  VectorXd q;
  VectorXd r;
  double s = 0.0;

  double slack(const VectorXd& z) const { return r.dot(z) + s - (P * z + q).norm(); }
};

/// min cost'z over the intersection of the cones; z = [nu; t].
struct SocpProblem {
  VectorXd cost;
  std::vector<SocCone> cones;
  VectorXd nu_nom;

  int input_dim() const { return static_cast<int>(nu_nom.size()); }
};

enum class SolveStatus { Optimal, Infeasible, MaxIter };

struct FilterResult {
  VectorXd nu_star;
  SolveStatus status = SolveStatus::Optimal;
  double objective = 0.0;            // Eq. (36) cost value cost'z
  double distance = 0.0;             // ||nu* - nu_nom||^2
  double kkt_residual = 0.0;
  int solve_iterations = 0;
};

/// Exact Theorem 2 blocks from the robust CBF row.
inline SocpProblem build_problem(const CbfRowData& row, double gamma_E, double e_bar,
                                 const VectorXd& nu_nom) {
  const int m = static_cast<int>(nu_nom.size());
  const int n = m + 1;
  SocpProblem p;
  p.nu_nom = nu_nom;
  p.cost.resize(n);
  p.cost << -2.0 * nu_nom, 1.0;

  SocCone epi;  // ||nu||^2 <= t as ||[2 nu; t-1]|| <= t+1
  epi.P = MatrixXd::Zero(n, n);
  epi.P.topLeftCorner(m, m) = 2.0 * MatrixXd::Identity(m, m);
  epi.P(m, m) = 1.0;
  epi.q = VectorXd::Zero(n);
  epi.q(m) = -1.0;
  epi.r = VectorXd::Zero(n);
  epi.r(m) = 1.0;
  epi.s = 1.0;
  p.cones.push_back(std::move(epi));

  SocCone robust;  // gamma_E ||xi'B|| ||nu|| <= (B'xi)'nu + s2
  robust.P = MatrixXd::Zero(n, n);
  robust.P.topLeftCorner(m, m) = gamma_E * row.norm_grad_psi_B * MatrixXd::Identity(m, m);
  robust.q = VectorXd::Zero(n);
  robust.r = VectorXd::Zero(n);
  robust.r.head(m) = row.grad_psi_B;
  robust.s = row.drift - row.norm_grad_psi_B * e_bar + row.alpha_psi;
  p.cones.push_back(std::move(robust));
  return p;
}

namespace detail {

struct RobustCone {  // a ||nu|| <= b'nu + c
  double a = 0.0;
  VectorXd b;
  double c = 0.0;

  double violation(const VectorXd& nu) const { return a * nu.norm() - b.dot(nu) - c; }
};

inline RobustCone extract_robust(const SocpProblem& p) {
  const int m = p.input_dim();
  RobustCone rc;
  rc.a = p.cones[1].P(0, 0);
  rc.b = p.cones[1].r.head(m);
  rc.c = p.cones[1].s;
  return rc;
}

inline FilterResult finish(const SocpProblem& p, VectorXd nu, SolveStatus status, int iters,
                           double kkt) {
  FilterResult res;
  res.status = status;
  res.solve_iterations = iters;
  res.kkt_residual = kkt;
  if (status == SolveStatus::Infeasible) {
    res.nu_star = VectorXd::Zero(p.input_dim());
    return res;
  }
  res.nu_star = std::move(nu);
  res.distance = (res.nu_star - p.nu_nom).squaredNorm();
  VectorXd z(p.input_dim() + 1);
  z << res.nu_star, res.nu_star.squaredNorm();
  res.objective = p.cost.dot(z);
  return res;
}

}  // namespace detail

/// Projection solver for the Theorem 2 shape: min ||nu - nu_nom||^2 subject to
/// a||nu|| <= b'nu + c, with the epigraph variable eliminated (t = ||nu||^2 at
/// any optimum since the cost is increasing in t).
inline FilterResult solve_specialized(const SocpProblem& p) {
  const detail::RobustCone rc = detail::extract_robust(p);
  const double bn = rc.b.norm();

  if (rc.a >= bn && rc.c < 0.0)  // cone empty: a||nu|| - b'nu >= 0 > b'nu + c form
    return detail::finish(p, {}, SolveStatus::Infeasible, 0, 0.0);

  if (rc.violation(p.nu_nom) <= 0.0)  // nominal input already certified
    return detail::finish(p, p.nu_nom, SolveStatus::Optimal, 0, 0.0);

  if (rc.a == 0.0) {  // half-space projection
    VectorXd nu = p.nu_nom + ((-rc.b.dot(p.nu_nom) - rc.c) / (bn * bn)) * rc.b;
    return detail::finish(p, std::move(nu), SolveStatus::Optimal, 1, 0.0);
  }

  // Active-constraint KKT: nu(lam) = rho (nu_nom + lam b) with
  // ||nu|| = ||nu_nom + lam b|| - lam a; root-find the constraint residual.
  auto residual = [&](double lam) {
    const VectorXd w = p.nu_nom + lam * rc.b;
    const double wn = w.norm();
    const double nn = wn - lam * rc.a;  // ||nu(lam)||
    if (nn <= 0.0) return -rc.c;        // past the cone vertex: nu = 0
    return rc.a * nn - (nn / wn) * rc.b.dot(w) - rc.c;
  };

  double lo = 0.0, hi = 1.0;
  const double f0 = residual(0.0);  // equals violation(nu_nom) > 0
  int iters = 0;
  while (residual(hi) > 0.0 && hi < 1e12) {
    lo = hi;
    hi *= 2.0;
    if (++iters > 200) return detail::finish(p, {}, SolveStatus::MaxIter, iters, f0);
  }
  if (residual(hi) > 0.0) {
    // no sign change up to the cap: optimum is the cone vertex nu = 0
    return detail::finish(p, VectorXd::Zero(p.input_dim()), SolveStatus::Optimal, iters,
                          std::abs(rc.c));
  }
  for (int k = 0; k < 200 && (hi - lo) > 1e-14 * (1.0 + hi); ++k) {
    ++iters;
    const double mid = 0.5 * (lo + hi);
    (residual(mid) > 0.0 ? lo : hi) = mid;
  }
  const double lam = 0.5 * (lo + hi);
  const VectorXd w = p.nu_nom + lam * rc.b;
  const double wn = w.norm();
  const double nn = wn - lam * rc.a;
  VectorXd nu = (nn <= 0.0) ? VectorXd::Zero(p.input_dim()).eval() : ((nn / wn) * w).eval();
  // KKT residual: stationarity + primal activity
  double kkt = std::abs(rc.violation(nu));
  if (nu.norm() > 0.0)
    kkt += (nu - p.nu_nom + lam * (rc.a * nu / nu.norm() - rc.b)).norm();
  return detail::finish(p, std::move(nu), SolveStatus::Optimal, iters, kkt);
}

namespace detail {

/// Gradient/Hessian of the SOC barrier -log((r'z+s)^2 - ||Pz+q||^2).
inline bool barrier_terms(const SocCone& cone, const VectorXd& z, double& value, VectorXd& grad,
                          MatrixXd& hess) {
  const double u = cone.r.dot(z) + cone.s;
  const VectorXd v = cone.P * z + cone.q;
  const double D = u * u - v.squaredNorm();
  if (u <= 0.0 || D <= 0.0) return false;
  const VectorXd gD = 2.0 * u * cone.r - 2.0 * cone.P.transpose() * v;
  value = -std::log(D);
  grad = -gD / D;
  hess = (gD * gD.transpose()) / (D * D) -
         (2.0 * cone.r * cone.r.transpose() - 2.0 * cone.P.transpose() * cone.P) / D;
  return true;
}

/// Damped-Newton minimization of t_b * cost'z + sum barrier over strictly
/// feasible z; the caller guarantees a strictly feasible start.
inline int newton_centering(const std::vector<SocCone>& cones, const VectorXd& cost, double t_b,
                            VectorXd& z, int max_steps = 400) {
  const int n = static_cast<int>(z.size());
  int steps = 0;
  for (; steps < max_steps; ++steps) {
    // work with the scaled objective cost'z + barrier/t_b to avoid
    // catastrophic cancellation at large t_b
    VectorXd grad = cost;
    MatrixXd hess = MatrixXd::Zero(n, n);
    for (const auto& cone : cones) {
      double val;
      VectorXd g;
      MatrixXd h;
      if (!barrier_terms(cone, z, val, g, h)) return steps;  // should not happen
      grad += g / t_b;
      hess += h / t_b;
    }
    Eigen::LDLT<MatrixXd> ldlt(hess);
    VectorXd step = -ldlt.solve(grad);
    double decrement = -grad.dot(step);
    if (ldlt.info() != Eigen::Success || !(decrement > 0.0)) {
      // fall back to a regularized system if the factorization degenerated
      hess.diagonal().array() += 1e-10 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
      step = -hess.ldlt().solve(grad);
      decrement = -grad.dot(step);
    }
    if (decrement < 1e-18) break;
    double alpha = 1.0;
    auto feasible = [&](const VectorXd& zz) {
      for (const auto& cone : cones)
        if (cone.slack(zz) <= 0.0) return false;
      return true;
    };
    auto merit = [&](const VectorXd& zz) {
      double m = cost.dot(zz);
      for (const auto& cone : cones) {
        const double u = cone.r.dot(zz) + cone.s;
        const double D = u * u - (cone.P * zz + cone.q).squaredNorm();
        m -= std::log(D) / t_b;
      }
      return m;
    };
    const double m0 = merit(z);
    while (alpha > 1e-14 && (!feasible(z + alpha * step) ||
                             merit(z + alpha * step) > m0 - 0.25 * alpha * decrement)) {
      alpha *= 0.5;
    }
    if (alpha <= 1e-14) break;
    z += alpha * step;
    if (decrement * alpha < 1e-16) break;
  }
  return steps;
}

}  // namespace detail

namespace detail {

inline SocCone bounding_ball(int dim, double radius) {
  SocCone ball;
  ball.P = MatrixXd::Identity(dim, dim);
  ball.q = VectorXd::Zero(dim);
  ball.r = VectorXd::Zero(dim);
  ball.s = radius;
  return ball;
}

}  // namespace detail

/// Generic small dense SOCP solver: primal log-barrier path following with a
/// phase-I slack minimization for the strictly feasible start. A large
/// bounding ball makes both barrier subproblems coercive (the true feasible
/// set has unbounded recession directions); it is inactive at any optimum the
/// Theorem 2 instances produce.
inline FilterResult solve_ipm(const SocpProblem& p) {
  const int n = static_cast<int>(p.cost.size());
  int iters = 0;

  // Phase I: min s with every cone relaxed by +s in its affine term. The ball
  // radius only needs to admit some strictly feasible slack, so it can stay at
  // data scale; keeping iterates small preserves barrier accuracy (the slack
  // is a difference of squares of the affine terms).
  double scale = 1.0 + p.nu_nom.norm();
  for (const auto& cone : p.cones)
    scale = std::max(scale, 1.0 + std::abs(cone.s) + cone.q.norm());
  VectorXd z = VectorXd::Zero(n);
  {
    double s0 = 0.0;
    for (const auto& cone : p.cones) s0 = std::max(s0, (cone.q.norm() - cone.s));
    s0 += 1.0;
    std::vector<SocCone> relaxed = p.cones;
    for (auto& cone : relaxed) {
      cone.P.conservativeResize(n, n + 1);
      cone.P.col(n).setZero();
      cone.r.conservativeResize(n + 1);
      cone.r(n) = 1.0;
    }
    relaxed.push_back(detail::bounding_ball(n + 1, 1e4 * (scale + s0)));
    VectorXd zs(n + 1);
    zs << z, s0;
    iters += detail::newton_centering(relaxed, VectorXd::Zero(n + 1), 1.0, zs, 200);
    VectorXd cost1 = VectorXd::Zero(n + 1);
    cost1(n) = 1.0;
    // ladder in small chunks: bail out the moment a strictly feasible point
    // appears rather than solving the phase-I problem to optimality
    for (double t_b = 1.0; t_b < 1e12 && zs(n) >= -1e-6; t_b *= 10.0) {
      for (int chunk = 0; chunk < 100 && zs(n) >= -1e-6; ++chunk) {
        const int steps = detail::newton_centering(relaxed, cost1, t_b, zs, 4);
        iters += steps;
        if (steps < 4) break;  // centered for this t_b
      }
    }
    if (zs(n) >= -1e-9) return detail::finish(p, {}, SolveStatus::Infeasible, iters, zs(n));
    z = zs.head(n);
  }

  // Phase II: re-center on the pure barrier, then follow the central path of
  // the true cost from a small t_b so the iterate never leaves the path's
  // quadratic convergence region. The ball starts at data scale and grows if
  // the optimum presses against it (thin robust cones can push nu far out).
  const double barrier_nu = 2.0 * (static_cast<double>(p.cones.size()) + 1.0);
  double radius = 1e3 * scale;
  for (int grow = 0; grow < 5; ++grow) {
    std::vector<SocCone> cones = p.cones;
    cones.push_back(detail::bounding_ball(n, radius));
    VectorXd zc = z;
    iters += detail::newton_centering(cones, VectorXd::Zero(n), 1.0, zc, 200);
    double gap = 0.0;
    bool budget = true;
    for (double t_b = 1e-6 / scale;
         (gap = barrier_nu / t_b) > 1e-13 * (1.0 + std::abs(p.cost.dot(zc))); t_b *= 10.0) {
      iters += detail::newton_centering(cones, p.cost, t_b, zc);
      if (iters > 40000) {
        budget = false;
        break;
      }
    }
    if (budget && zc.norm() > 0.5 * radius) {
      radius *= 100.0;  // optimum near the artificial bound: enlarge and redo
      continue;
    }
    auto status = budget ? SolveStatus::Optimal : SolveStatus::MaxIter;
    FilterResult res = detail::finish(p, zc.head(p.input_dim()), status, iters, gap);
    if (budget) res.kkt_residual = gap;
    return res;
  }
  return detail::finish(p, z.head(p.input_dim()), SolveStatus::MaxIter, iters, 1.0);
}

}  // namespace ejcbf
