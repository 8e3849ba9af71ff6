#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <stdexcept>

#include "ejcbf/errors.hpp"
#include "ejcbf/rng.hpp"
#include "ejcbf/taylor.hpp"

namespace ejcbf {

using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

/// Two-link planar arm with series elastic joints: point masses at the link
/// ends, motor inertia J = motor_inertia_scale * I, joint stiffness
/// K = stiffness_scale * I.
struct RobotParams {
  int dof = 2;
  Vector2d link_masses{1.0, 1.0};   // [kg]
  Vector2d link_lengths{1.0, 1.0};  // [m]
  double motor_inertia_scale = 0.001;  // J = scale*I [kg m^2]
  double stiffness_scale = 1.0;        // K = scale*I [N m/rad]
  double gravity = 9.81;               // [m/s^2]

  void validate() const {
    if (dof != 2) throw std::invalid_argument("RobotParams: closed-form model requires dof == 2");
    if (!(link_masses.minCoeff() > 0.0) || !(link_lengths.minCoeff() > 0.0) ||
        !(motor_inertia_scale > 0.0) || !(stiffness_scale > 0.0)) {
      throw std::invalid_argument("RobotParams: masses, lengths and scales must be positive");
    }
  }
};

/// Physical state (q, qdot, theta, thetadot).
struct PlantState {
  Vector2d q = Vector2d::Zero();
  Vector2d dq = Vector2d::Zero();
  Vector2d theta = Vector2d::Zero();
  Vector2d dtheta = Vector2d::Zero();

  bool finite() const {
    return q.allFinite() && dq.allFinite() && theta.allFinite() && dtheta.allFinite();
  }
};

/// Flat state x = (q, qdot, qddot, qdddot) in R^{4m}.
struct FlatState {
  Vector2d x1 = Vector2d::Zero();
  Vector2d x2 = Vector2d::Zero();
  Vector2d x3 = Vector2d::Zero();
  Vector2d x4 = Vector2d::Zero();

  VectorXd stacked() const {
    VectorXd x(8);
    x << x1, x2, x3, x4;
    return x;
  }

  static FlatState from_stacked(const VectorXd& x) {
    FlatState s;
    s.x1 = x.segment<2>(0);
    s.x2 = x.segment<2>(2);
    s.x3 = x.segment<2>(4);
    s.x4 = x.segment<2>(6);
    return s;
  }
};

/// Spectral bounds of M, J, K and the induced bounds on G = M^-1 K J^-1.
struct MatrixBounds {
  double gamma_M_lo = 0, gamma_M_hi = 0;
  double gamma_J_lo = 0, gamma_J_hi = 0;
  double gamma_K_lo = 0, gamma_K_hi = 0;
  double gamma_G_lo = 0, gamma_G_hi = 0;

  void refresh_G() {
    gamma_G_lo = gamma_K_lo / (gamma_M_hi * gamma_J_hi);
    gamma_G_hi = gamma_K_hi / (gamma_M_lo * gamma_J_lo);
  }
};

namespace detail {

template <class T>
struct Mat2 {
  T a11, a12, a22;  // symmetric
};

template <class T>
Mat2<T> mass_matrix_entries(const RobotParams& p, const T& q2) {
  const double m1 = p.link_masses(0), m2 = p.link_masses(1);
  const double l1 = p.link_lengths(0), l2 = p.link_lengths(1);
  using std::cos;
  const T c2 = cos(q2);
  Mat2<T> M;
  M.a11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2) + (2.0 * m2 * l1 * l2) * c2;
  M.a12 = m2 * l2 * l2 + (m2 * l1 * l2) * c2;
  M.a22 = T(m2 * l2 * l2);
  return M;
}

/// Coriolis, centrifugal and gravitational terms of the standard two-link
/// point-mass arm: M qdd + C(q, qd) = tau.
template <class T>
std::array<T, 2> coriolis_gravity_entries(const RobotParams& p, const T& q1, const T& q2,
                                          const T& dq1, const T& dq2) {
  const double m1 = p.link_masses(0), m2 = p.link_masses(1);
  const double l1 = p.link_lengths(0), l2 = p.link_lengths(1);
  const double g = p.gravity;
  using std::cos;
  using std::sin;
  const T s2 = sin(q2);
  const T c1 = cos(q1);
  const T c12 = cos(q1 + q2);
  std::array<T, 2> C;
  C[0] = -(m2 * l1 * l2) * s2 * (2.0 * dq1 * dq2 + dq2 * dq2)
         + (g * (m1 + m2) * l1) * c1 + (g * m2 * l2) * c12;
  C[1] = (m2 * l1 * l2) * s2 * (dq1 * dq1) + (g * m2 * l2) * c12;
  return C;
}

inline Matrix2d to_matrix(const Mat2<double>& M) {
  Matrix2d out;
  out << M.a11, M.a12, M.a12, M.a22;
  return out;
}

inline Matrix2d jet_matrix(const Mat2<Jet2>& M, int order) {
  auto pick = [order](const Jet2& j) { return order == 0 ? j.v : (order == 1 ? j.d1 : j.d2); };
  Matrix2d out;
  out << pick(M.a11), pick(M.a12), pick(M.a12), pick(M.a22);
  return out;
}

inline Vector2d jet_vector(const std::array<Jet2, 2>& v, int order) {
  auto pick = [order](const Jet2& j) { return order == 0 ? j.v : (order == 1 ? j.d1 : j.d2); };
  return Vector2d(pick(v[0]), pick(v[1]));
}

}  // namespace detail

inline Matrix2d inertia(const RobotParams& p, const Vector2d& q) {
  return detail::to_matrix(detail::mass_matrix_entries<double>(p, q(1)));
}

inline Vector2d coriolis_gravity(const RobotParams& p, const Vector2d& q, const Vector2d& dq) {
  auto C = detail::coriolis_gravity_entries<double>(p, q(0), q(1), dq(0), dq(1));
  return Vector2d(C[0], C[1]);
}

/// Total time derivatives of M and C along a flat-state point, via order-2
/// Taylor propagation of q(t) and qdot(t).
struct DynamicsDerivatives {
  Matrix2d M, dM, ddM;
  Vector2d C, dC, ddC;
};

inline DynamicsDerivatives dynamics_derivatives(const RobotParams& p, const FlatState& x) {
  const Jet2 q1(x.x1(0), x.x2(0), x.x3(0));
  const Jet2 q2(x.x1(1), x.x2(1), x.x3(1));
  const Jet2 dq1(x.x2(0), x.x3(0), x.x4(0));
  const Jet2 dq2(x.x2(1), x.x3(1), x.x4(1));

  const auto M = detail::mass_matrix_entries<Jet2>(p, q2);
  const auto C = detail::coriolis_gravity_entries<Jet2>(p, q1, q2, dq1, dq2);

  DynamicsDerivatives d;
  d.M = detail::jet_matrix(M, 0);
  d.dM = detail::jet_matrix(M, 1);
  d.ddM = detail::jet_matrix(M, 2);
  d.C = detail::jet_vector(C, 0);
  d.dC = detail::jet_vector(C, 1);
  d.ddC = detail::jet_vector(C, 2);
  return d;
}

namespace detail {

inline void plant_rhs(const RobotParams& p, const PlantState& s, const Vector2d& u,
                      Vector2d& ddq, Vector2d& ddtheta) {
  const Matrix2d M = inertia(p, s.q);
  const Vector2d C = coriolis_gravity(p, s.q, s.dq);
  const double k = p.stiffness_scale, j = p.motor_inertia_scale;
  const Vector2d spring = k * (s.q - s.theta);
  ddq = M.ldlt().solve(-(C + spring));
  ddtheta = (u + spring) / j;  // J ddtheta = u - K(theta - q)
}

}  // namespace detail

/// One fixed-step RK4 step of the coupled link/motor dynamics.
inline PlantState step_plant(const RobotParams& p, const PlantState& s, const Vector2d& u,
                             double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_plant: dt must be positive");
  auto deriv = [&](const PlantState& st) {
    PlantState d;
    d.q = st.dq;
    d.theta = st.dtheta;
    detail::plant_rhs(p, st, u, d.dq, d.dtheta);
    return d;
  };
  auto axpy = [](const PlantState& a, double h, const PlantState& b) {
    PlantState r;
    r.q = a.q + h * b.q;
    r.dq = a.dq + h * b.dq;
    r.theta = a.theta + h * b.theta;
    r.dtheta = a.dtheta + h * b.dtheta;
    return r;
  };
  const PlantState k1 = deriv(s);
  const PlantState k2 = deriv(axpy(s, 0.5 * dt, k1));
  const PlantState k3 = deriv(axpy(s, 0.5 * dt, k2));
  const PlantState k4 = deriv(axpy(s, dt, k3));
  PlantState out = s;
  out.q += (dt / 6.0) * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q);
  out.dq += (dt / 6.0) * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
  out.theta += (dt / 6.0) * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
  out.dtheta += (dt / 6.0) * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta);
  if (!out.finite()) throw NonFiniteState("step_plant: integration diverged");
  return out;
}

/// Maps the physical state to the flat coordinates (q, qd, qdd, qddd).
inline FlatState flat_observe(const RobotParams& p, const PlantState& s) {
  const double k = p.stiffness_scale;
  FlatState x;
  x.x1 = s.q;
  x.x2 = s.dq;
  const Matrix2d M = inertia(p, s.q);
  const Vector2d C = coriolis_gravity(p, s.q, s.dq);
  const auto Mldlt = M.ldlt();
  x.x3 = Mldlt.solve(-(C + k * (s.q - s.theta)));
  // Mdot and Cdot along (q, qd, x3); x4 enters neither.
  FlatState probe = x;
  const auto d = dynamics_derivatives(p, probe);
  x.x4 = Mldlt.solve(-(d.dM * x.x3 + d.dC + k * (s.dq - s.dtheta)));
  return x;
}

/// Drift and input matrix of the chain-of-integrators form:
/// x4dot = f(x) + G(x) u.
inline void true_f_g(const RobotParams& p, const FlatState& x, Vector2d& f, Matrix2d& G) {
  const double k = p.stiffness_scale, j = p.motor_inertia_scale;
  const auto d = dynamics_derivatives(p, x);
  const auto Mldlt = d.M.ldlt();
  const double kj = k / j;  // K J^-1 = (k/j) I
  const Vector2d inner = kj * (d.M * x.x3 + d.C)
                         + (k * x.x3 + d.ddM * x.x3)
                         + 2.0 * (d.dM * x.x4)
                         + d.ddC;
  f = Mldlt.solve(-inner);
  G = kj * Mldlt.solve(Matrix2d::Identity());
}

/// Spectral bounds via a dense sweep of M over q2 (M depends on q only
/// through cos q2), inflated by 1% on each side.
inline MatrixBounds matrix_bounds(const RobotParams& p, int sweep_points = 4001) {
  MatrixBounds b;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int i = 0; i < sweep_points; ++i) {
    const double q2 = -M_PI + 2.0 * M_PI * i / (sweep_points - 1);
    const auto Me = detail::mass_matrix_entries<double>(p, q2);
    const double mean = 0.5 * (Me.a11 + Me.a22);
    const double rad = std::sqrt(0.25 * (Me.a11 - Me.a22) * (Me.a11 - Me.a22) + Me.a12 * Me.a12);
    lo = std::min(lo, mean - rad);
    hi = std::max(hi, mean + rad);
  }
  b.gamma_M_lo = 0.99 * lo;
  b.gamma_M_hi = 1.01 * hi;
  b.gamma_J_lo = b.gamma_J_hi = p.motor_inertia_scale;
  b.gamma_K_lo = b.gamma_K_hi = p.stiffness_scale;
  b.refresh_G();
  return b;
}

/// Independently scales each mass and length by a uniform factor in
/// [1 - rel_scale, 1 + rel_scale]. Used to build the approximate prior model.
inline RobotParams perturbed_params(const RobotParams& p, double rel_scale, std::uint64_t seed) {
  if (!(rel_scale >= 0.0 && rel_scale < 1.0)) {
    throw std::invalid_argument("perturbed_params: rel_scale must be in [0, 1)");
  }
  RandomStream rng(seed);
  RobotParams out = p;
  for (int i = 0; i < 2; ++i) out.link_masses(i) *= rng.uniform(1.0 - rel_scale, 1.0 + rel_scale);
  for (int i = 0; i < 2; ++i) out.link_lengths(i) *= rng.uniform(1.0 - rel_scale, 1.0 + rel_scale);
  return out;
}

}  // namespace ejcbf
