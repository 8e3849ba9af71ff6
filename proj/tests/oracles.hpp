#pragma once

// Test-only oracles, kept independent of the library's closed forms.
// Energies are computed from Cartesian positions of the point masses;
// derivatives come from central finite differences.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "ejcbf/robot.hpp"

namespace oracle {

using Eigen::Matrix2d;
using Eigen::Vector2d;
using ejcbf::PlantState;
using ejcbf::RobotParams;

// Kinetic energy of the two point masses from Cartesian velocities.
inline double kinetic_energy(const RobotParams& p, const Vector2d& q, const Vector2d& dq) {
  const double l1 = p.link_lengths(0), l2 = p.link_lengths(1);
  const Vector2d v1 = l1 * dq(0) * Vector2d(-std::sin(q(0)), std::cos(q(0)));
  const Vector2d v2 = v1 + l2 * (dq(0) + dq(1)) *
                               Vector2d(-std::sin(q(0) + q(1)), std::cos(q(0) + q(1)));
  return 0.5 * p.link_masses(0) * v1.squaredNorm() + 0.5 * p.link_masses(1) * v2.squaredNorm();
}

inline double potential_energy(const RobotParams& p, const Vector2d& q) {
  const double l1 = p.link_lengths(0), l2 = p.link_lengths(1);
  const double y1 = l1 * std::sin(q(0));
  const double y2 = y1 + l2 * std::sin(q(0) + q(1));
  return p.gravity * (p.link_masses(0) * y1 + p.link_masses(1) * y2);
}

// Total mechanical energy of the elastic-joint plant.
inline double total_energy(const RobotParams& p, const PlantState& s) {
  const double spring = 0.5 * p.stiffness_scale * (s.q - s.theta).squaredNorm();
  const double motor = 0.5 * p.motor_inertia_scale * s.dtheta.squaredNorm();
  return kinetic_energy(p, s.q, s.dq) + potential_energy(p, s.q) + motor + spring;
}

// M_ij = d^2 T / (dqd_i dqd_j) by central differences of the kinetic energy.
inline Matrix2d inertia_fd(const RobotParams& p, const Vector2d& q, double h = 1e-4) {
  Matrix2d M;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      Vector2d pp = Vector2d::Zero(), pm = pp, mp = pp, mm = pp;
      pp(i) += h; pp(j) += h;
      pm(i) += h; pm(j) -= h;
      mp(i) -= h; mp(j) += h;
      mm(i) -= h; mm(j) -= h;
      M(i, j) = (kinetic_energy(p, q, pp) - kinetic_energy(p, q, pm) -
                 kinetic_energy(p, q, mp) + kinetic_energy(p, q, mm)) / (4.0 * h * h);
    }
  }
  return M;
}

inline Vector2d gravity_torque_fd(const RobotParams& p, const Vector2d& q, double h = 1e-6) {
  Vector2d g;
  for (int i = 0; i < 2; ++i) {
    Vector2d qp = q, qm = q;
    qp(i) += h;
    qm(i) -= h;
    g(i) = (potential_energy(p, qp) - potential_energy(p, qm)) / (2.0 * h);
  }
  return g;
}

// Euler-Lagrange residual d/dt(dT/dqd) - dT/dq + dV/dq evaluated by finite
// differences for given (q, qd, qdd). Equals M qdd + C for a correct model.
inline Vector2d euler_lagrange_fd(const RobotParams& p, const Vector2d& q, const Vector2d& dq,
                                  const Vector2d& ddq, double h = 1e-5) {
  auto dT_ddq = [&](const Vector2d& qq, const Vector2d& dqq) {
    Vector2d out;
    for (int i = 0; i < 2; ++i) {
      Vector2d dp = dqq, dm = dqq;
      dp(i) += h;
      dm(i) -= h;
      out(i) = (kinetic_energy(p, qq, dp) - kinetic_energy(p, qq, dm)) / (2.0 * h);
    }
    return out;
  };
  // d/dt of dT/dqd along (q + t dq, dq + t ddq)
  Vector2d ddt;
  {
    const Vector2d qp = q + h * dq, qm = q - h * dq;
    const Vector2d dp = dq + h * ddq, dm = dq - h * ddq;
    ddt = (dT_ddq(qp, dp) - dT_ddq(qm, dm)) / (2.0 * h);
  }
  Vector2d dT_dq;
  for (int i = 0; i < 2; ++i) {
    Vector2d qp = q, qm = q;
    qp(i) += h;
    qm(i) -= h;
    dT_dq(i) = (kinetic_energy(p, qp, dq) - kinetic_energy(p, qm, dq)) / (2.0 * h);
  }
  return ddt - dT_dq + gravity_torque_fd(p, q);
}

// Central difference of a vector-valued time signal.
template <class F>
Eigen::VectorXd central_diff(F&& f, double t, double h) {
  return (f(t + h) - f(t - h)) / (2.0 * h);
}

}  // namespace oracle
