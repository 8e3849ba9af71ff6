#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "ejcbf/cbf.hpp"

namespace ejcbf {

using Eigen::Vector2d;

/// Sinusoidal reference q_d(t) = [sin(pi t / c), cos(pi t / c)] with exact
/// analytic derivatives of every order.
struct Reference {
  double c = 15.0;  // period parameter [s]

  explicit Reference(double c_) : c(c_) {
    if (!(c > 0.0)) throw std::invalid_argument("Reference: c must be positive");
  }

  /// k-th time derivative of q_d; differentiation shifts the phase by pi/2.
  Vector2d q_deriv(int k, double t) const {
    const double w = M_PI / c, ph = 0.5 * M_PI * k;
    return std::pow(w, k) * Vector2d(std::sin(w * t + ph), std::cos(w * t + ph));
  }

  Vector2d q_d(double t) const { return q_deriv(0, t); }

  /// Desired flat state x_d = (q_d, q_d', q_d'', q_d''').
  VectorXd x_d(double t) const {
    VectorXd x(8);
    x << q_deriv(0, t), q_deriv(1, t), q_deriv(2, t), q_deriv(3, t);
    return x;
  }
};

/// Stabilizing gain for the chain of integrators; A - BL is verified Hurwitz
/// at construction.
struct TrackingGain {
  MatrixXd L;  // m x 4m

  explicit TrackingGain(MatrixXd gain) : L(std::move(gain)) {
    const int m = static_cast<int>(L.rows());
    if (L.cols() != 4 * m) throw std::invalid_argument("TrackingGain: L must be m x 4m");
    const auto sys = LinearSystem::chain(m);
    const MatrixXd Acl = sys.A - sys.B * L;
    const auto eig = Acl.eigenvalues();
    for (int i = 0; i < eig.size(); ++i)
      if (eig(i).real() >= -1e-9)
        throw std::invalid_argument("TrackingGain: A - BL is not Hurwitz");
  }

  /// The manually tuned gain of the reference study: per-joint
  /// [1e4, 1e3, 300, 10] on (q, qdot, qddot, qdddot).
  static TrackingGain paper_gain() {
    MatrixXd L = MatrixXd::Zero(2, 8);
    const double g[4] = {1e4, 1e3, 300.0, 10.0};
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 4; ++k) L(j, 2 * k + j) = g[k];
    return TrackingGain(std::move(L));
  }
};

/// nu_nom = q_d'''' + L (x_d - x).
inline VectorXd nominal_input(const TrackingGain& gain, const Reference& ref, double t,
                              const VectorXd& x) {
  return VectorXd(ref.q_deriv(4, t)) + gain.L * (ref.x_d(t) - x);
}

}  // namespace ejcbf
