#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <stdexcept>

namespace ejcbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Chain-of-integrators pair (A, B): x = (x1..x4) with x_i' = x_{i+1} and
/// x4' = nu.
struct LinearSystem {
  int m = 0;
  MatrixXd A;  // 4m x 4m nilpotent block shift
  MatrixXd B;  // 4m x m, selects the x4 block

  static LinearSystem chain(int m) {
    LinearSystem s;
    s.m = m;
    const int n = 4 * m;
    s.A = MatrixXd::Zero(n, n);
    for (int k = 0; k < 3 * m; ++k) s.A(k, k + m) = 1.0;
    s.B = MatrixXd::Zero(n, m);
    s.B.bottomRows(m) = MatrixXd::Identity(m, m);
    return s;
  }
};

/// Constraint function b(q) together with its total time derivatives along the
/// integrator chain: d^k b/dt^k for k = 0..3 and their state gradients.
struct BarrierSpec {
  int m = 0;
  std::function<double(int k, const VectorXd& x)> time_derivative;
  std::function<VectorXd(int k, const VectorXd& x)> gradient;

  /// b(q) = c - w'q; the k-th time derivative is -w'x_{k+1} (plus c at k = 0).
  static BarrierSpec linear(double c, const VectorXd& w) {
    BarrierSpec s;
    const int m = static_cast<int>(w.size());
    s.m = m;
    s.time_derivative = [c, w, m](int k, const VectorXd& x) {
      double v = (k == 0) ? c : 0.0;
      return v - w.dot(x.segment(k * m, m));
    };
    s.gradient = [w, m](int k, const VectorXd& x) {
      VectorXd g = VectorXd::Zero(x.size());
      g.segment(k * m, m) = -w;
      return g;
    };
    return s;
  }
};

/// Higher-order CBF from the recursion psi_i = d(psi_{i-1})/dt + a_i psi_{i-1}
/// with linear class-K maps. For relative degree 4 the result is
/// psi = sum_k coef_k d^k b/dt^k with coefficients from prod_i (D + a_i).
class CbfChain {
 public:
  CbfChain(BarrierSpec spec, const std::array<double, 3>& alpha_slopes, double kappa)
      : spec_(std::move(spec)), slopes_(alpha_slopes), kappa_(kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("CbfChain: kappa must be positive");
    for (double a : slopes_)
      if (!(a >= 0.0)) throw std::invalid_argument("CbfChain: alpha slopes must be >= 0");
  }

  static CbfChain identity_chain(BarrierSpec spec, double kappa) {
    return CbfChain(std::move(spec), {1.0, 1.0, 1.0}, kappa);
  }

  double kappa() const { return kappa_; }
  const BarrierSpec& barrier() const { return spec_; }

  /// Coefficients of psi_tilde_{order} in the basis (b, db/dt, ...), i.e. the
  /// expansion of prod_{i<=order}(D + a_i) b; order = 4 gives psi.
  std::array<double, 4> coefficients(int order = 4) const {
    std::array<double, 4> c{1.0, 0.0, 0.0, 0.0};  // start from psi_1 = b
    for (int i = 2; i <= order; ++i) {
      std::array<double, 4> next{0.0, 0.0, 0.0, 0.0};
      for (int k = 0; k < 3; ++k) next[k + 1] += c[k];      // differentiation
      for (int k = 0; k < 4; ++k) next[k] += slopes_[i - 2] * c[k];
      c = next;
    }
    return c;
  }

  /// psi_tilde_i(x), i = 1..4; psi(x) = psi_tilde_4(x).
  double psi_tilde(int i, const VectorXd& x) const {
    const auto c = coefficients(i);
    double v = 0.0;
    for (int k = 0; k < 4; ++k)
      if (c[k] != 0.0) v += c[k] * spec_.time_derivative(k, x);
    return v;
  }

  double psi(const VectorXd& x) const { return psi_tilde(4, x); }

  VectorXd grad_psi(const VectorXd& x) const {
    const auto c = coefficients(4);
    VectorXd g = VectorXd::Zero(x.size());
    for (int k = 0; k < 4; ++k)
      if (c[k] != 0.0) g += c[k] * spec_.gradient(k, x);
    return g;
  }

 private:
  BarrierSpec spec_;
  std::array<double, 3> slopes_;
  double kappa_;
};

/// Data of the robust CBF row: xi'(Ax + B nu) - ||xi'B||(gamma_E||nu|| + e_bar)
/// >= -kappa psi with xi = grad psi.
struct CbfRowData {
  VectorXd grad_psi_B;      // B' grad psi
  double drift = 0.0;       // grad psi' A x
  double alpha_psi = 0.0;   // kappa * psi(x)
  double norm_grad_psi_B = 0.0;
};

inline CbfRowData eval_row(const CbfChain& chain, const LinearSystem& sys, const VectorXd& x) {
  CbfRowData row;
  const VectorXd g = chain.grad_psi(x);
  row.grad_psi_B = sys.B.transpose() * g;
  row.drift = g.dot(sys.A * x);
  row.alpha_psi = chain.kappa() * chain.psi(x);
  row.norm_grad_psi_B = row.grad_psi_B.norm();
  return row;
}

/// LHS minus RHS of the robust CBF inequality for a candidate nu; >= 0
/// certifies safety under the worst-case linearization error.
inline double constraint_margin(const CbfRowData& row, double gamma_E, double e_bar,
                                const VectorXd& nu) {
  return row.drift + row.grad_psi_B.dot(nu) -
         row.norm_grad_psi_B * (gamma_E * nu.norm() + e_bar) + row.alpha_psi;
}

}  // namespace ejcbf
