#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ejcbf/cbf.hpp"
#include "ejcbf/errors.hpp"
#include "ejcbf/gp.hpp"
#include "ejcbf/linearize.hpp"
#include "ejcbf/reference.hpp"
#include "ejcbf/rng.hpp"
#include "ejcbf/robot.hpp"
#include "ejcbf/socp.hpp"

namespace ejcbf {

enum class ControlMode { SWITCHING, GP_ONLY, BACKUP_ONLY };

inline const char* to_string(ControlMode m) {
  switch (m) {
    case ControlMode::SWITCHING: return "switching";
    case ControlMode::GP_ONLY: return "gp_only";
    default: return "backup_only";
  }
}

/// Uniform grid over the flat state for training-data generation: per-dim
/// interval and point count; dims with count 1 sit at the interval midpoint.
struct GridSpec {
  std::array<double, 8> lo{}, hi{};
  std::array<int, 8> counts{};

  long total() const {
    long n = 1;
    for (int c : counts) n *= c;
    return n;
  }

  /// Reference-envelope grid factoring 786 = 3 * 131 * 2 over (x11, x12, x21).
  static GridSpec paper() {
    GridSpec g;
    g.lo = {-1.2, -1.2, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0};
    g.hi = {1.2, 1.2, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    g.counts = {3, 131, 2, 1, 1, 1, 1, 1};
    return g;
  }
};

/// Grid states, uniform random controls from the box, targets
/// y = f(x) + G(x)u + omega with omega ~ N(0, sigma_on^2 I).
inline TrainingSet generate_training_data(const RobotParams& p, const GridSpec& grid, int N,
                                          double sigma_on, const Vector2d& u_lo,
                                          const Vector2d& u_hi, std::uint64_t seed) {
  if (grid.total() != N)
    throw GridShapeMismatch("generate_training_data: grid counts do not factor N");
  RandomStream rng(seed);
  TrainingSet t;
  t.X.resize(N, 8);
  t.U.resize(N, 2);
  t.Y.resize(N, 2);
  t.noise_std = sigma_on;
  std::array<int, 8> idx{};
  for (int n = 0; n < N; ++n) {
    VectorXd x(8);
    for (int d = 0; d < 8; ++d) {
      x(d) = grid.counts[d] == 1
                 ? 0.5 * (grid.lo[d] + grid.hi[d])
                 : grid.lo[d] + (grid.hi[d] - grid.lo[d]) * idx[d] / (grid.counts[d] - 1);
    }
    // mixed-radix increment, last dim fastest
    for (int d = 7; d >= 0; --d) {
      if (++idx[d] < grid.counts[d]) break;
      idx[d] = 0;
    }
    Vector2d f;
    Matrix2d G;
    true_f_g(p, FlatState::from_stacked(x), f, G);
    const Vector2d u(rng.uniform(u_lo(0), u_hi(0)), rng.uniform(u_lo(1), u_hi(1)));
    const Vector2d y = f + G * u + sigma_on * Vector2d(rng.normal(), rng.normal());
    t.X.row(n) = x.transpose();
    t.U.row(n) = u.transpose();
    t.Y.row(n) = y.transpose();
  }
  return t;
}

/// Plant state matching the reference at t = 0: spring deflection realizes
/// x3 = qdd_d(0) and the motor velocity realizes x4 = qddd_d(0).
inline PlantState initial_plant_state(const RobotParams& p, const Reference& ref) {
  const double k = p.stiffness_scale;
  PlantState s;
  s.q = ref.q_deriv(0, 0.0);
  s.dq = ref.q_deriv(1, 0.0);
  FlatState x;
  x.x1 = s.q;
  x.x2 = s.dq;
  x.x3 = ref.q_deriv(2, 0.0);
  x.x4 = ref.q_deriv(3, 0.0);
  const auto d = dynamics_derivatives(p, x);
  // M x3 + C + K(q - theta) = 0 and its time derivative
  s.theta = s.q + (d.M * x.x3 + d.C) / k;
  s.dtheta = s.dq + (d.dM * x.x3 + d.M * x.x4 + d.dC) / k;
  return s;
}

struct StepRecord {
  double t = 0.0;
  PlantState plant;
  FlatState flat;
  Vector2d nu_nom = Vector2d::Zero();
  Vector2d nu_star = Vector2d::Zero();
  Vector2d u = Vector2d::Zero();
  Branch branch = Branch::GP;
  double gamma_E = 0.0;
  double e_bar = 0.0;
  double psi = 0.0;
  double margin = 0.0;
  SolveStatus status = SolveStatus::Optimal;
};

struct TrajectoryLog {
  std::vector<StepRecord> steps;
  double dt_ctrl = 0.01;
  double mse = 0.0;  // mean ||q - q_d||^2 over recorded steps
  double min_b = std::numeric_limits<double>::infinity();
  bool infeasible = false;
  bool diverged = false;

  bool completed() const { return !infeasible && !diverged; }

  std::string csv() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "t,q1,q2,dq1,dq2,theta1,theta2,dtheta1,dtheta2,x3_1,x3_2,x4_1,x4_2,"
           "nu_nom1,nu_nom2,nu1,nu2,u1,u2,branch,gamma_E,e_bar,psi,margin,status\n";
    for (const auto& s : steps) {
      out << s.t << ',' << s.plant.q(0) << ',' << s.plant.q(1) << ',' << s.plant.dq(0) << ','
          << s.plant.dq(1) << ',' << s.plant.theta(0) << ',' << s.plant.theta(1) << ','
          << s.plant.dtheta(0) << ',' << s.plant.dtheta(1) << ',' << s.flat.x3(0) << ','
          << s.flat.x3(1) << ',' << s.flat.x4(0) << ',' << s.flat.x4(1) << ',' << s.nu_nom(0)
          << ',' << s.nu_nom(1) << ',' << s.nu_star(0) << ',' << s.nu_star(1) << ',' << s.u(0)
          << ',' << s.u(1) << ',' << (s.branch == Branch::GP ? "GP" : "BACKUP") << ','
          << s.gamma_E << ',' << s.e_bar << ',' << s.psi << ',' << s.margin << ','
          << (s.status == SolveStatus::Optimal
                  ? "optimal"
                  : (s.status == SolveStatus::Infeasible ? "infeasible" : "maxiter"))
          << '\n';
    }
    return out.str();
  }

  std::string summary_json() const {
    std::ostringstream out;
    out << std::setprecision(17) << std::boolalpha;
    out << "{\n  \"steps\": " << steps.size() << ",\n  \"dt_ctrl\": " << dt_ctrl
        << ",\n  \"mse\": " << mse << ",\n  \"min_b\": " << min_b
        << ",\n  \"infeasible\": " << infeasible << ",\n  \"diverged\": " << diverged << "\n}\n";
    return out.str();
  }
};

struct SimOptions {
  ControlMode mode = ControlMode::SWITCHING;
  double dt_ctrl = 0.01;  // 100 Hz sample-and-hold
  int substeps = 10;
  double horizon = 30.0;
  bool filter_enabled = true;
};

/// 100 Hz closed loop: observe flat state, nominal input, branch-dependent
/// envelopes, SOCP filter, feedback linearization, zero-order-hold torque.
/// Solver infeasibility and divergence end the run as recorded outcomes.
inline TrajectoryLog run_closed_loop(const RobotParams& p, const GpModel& model,
                                     const SwitchConfig& cfg, const CbfChain& chain,
                                     const TrackingGain& gain, const Reference& ref,
                                     const SimOptions& opt) {
  TrajectoryLog log;
  log.dt_ctrl = opt.dt_ctrl;
  const auto sys = LinearSystem::chain(2);
  PlantState s = initial_plant_state(p, ref);
  const int n_steps = static_cast<int>(std::lround(opt.horizon / opt.dt_ctrl));
  double sq_sum = 0.0;

  for (int i = 0; i < n_steps; ++i) {
    const double t = i * opt.dt_ctrl;
    if (!s.finite()) {
      log.diverged = true;
      break;
    }
    const FlatState x = flat_observe(p, s);
    const VectorXd xs = x.stacked();
    if (!xs.allFinite() || xs.norm() > 1e6) {
      log.diverged = true;
      break;
    }

    StepRecord rec;
    rec.t = t;
    rec.plant = s;
    rec.flat = x;
    const VectorXd nu_nom = nominal_input(gain, ref, t, xs);
    rec.nu_nom = nu_nom;

    // branch selection and envelopes
    VectorXd mu_f;
    MatrixXd mu_G;
    bool gp_metrics_failed = false;
    switch (opt.mode) {
      case ControlMode::SWITCHING:
        try {
          const auto gm = gp_branch_metrics(model, xs);
          if (gm.gamma_E <= cfg.zeta) {
            rec.branch = Branch::GP;
            rec.gamma_E = gm.gamma_E;
            rec.e_bar = gm.e_bar;
            mu_f = gm.mu_f;
            mu_G = gm.mu_G;
            break;
          }
        } catch (const SingularMeanG&) {
        }
        rec.branch = Branch::BACKUP;
        break;
      case ControlMode::GP_ONLY:
        try {
          const auto gm = gp_branch_metrics(model, xs);
          rec.branch = Branch::GP;
          rec.gamma_E = gm.gamma_E;  // may exceed 1: the recorded failure mode
          rec.e_bar = gm.e_bar;
          mu_f = gm.mu_f;
          mu_G = gm.mu_G;
        } catch (const SingularMeanG&) {
          gp_metrics_failed = true;
        }
        break;
      case ControlMode::BACKUP_ONLY:
        rec.branch = Branch::BACKUP;
        break;
    }
    if (rec.branch == Branch::BACKUP) {
      const auto bm = backup_branch_metrics(cfg.bounds, model, xs);
      rec.gamma_E = bm.gamma_E;
      rec.e_bar = bm.e_bar;
      mu_f = bm.mu_f;
    }

    const auto row = eval_row(chain, sys, xs);
    rec.psi = chain.psi(xs);

    if (gp_metrics_failed) {
      rec.status = SolveStatus::Infeasible;
      rec.margin = constraint_margin(row, 0.0, 0.0, nu_nom);
      log.infeasible = true;
      sq_sum += (s.q - ref.q_d(t)).squaredNorm();
      log.min_b = std::min(log.min_b, chain.barrier().time_derivative(0, xs));
      log.steps.push_back(rec);
      break;
    }

    VectorXd nu = nu_nom;
    if (opt.filter_enabled) {
      const auto res = solve_specialized(build_problem(row, rec.gamma_E, rec.e_bar, nu_nom));
      rec.status = res.status;
      if (res.status == SolveStatus::Infeasible) {
        rec.nu_star = nu_nom;
        rec.margin = constraint_margin(row, rec.gamma_E, rec.e_bar, nu_nom);
        log.infeasible = true;
        sq_sum += (s.q - ref.q_d(t)).squaredNorm();
        log.min_b = std::min(log.min_b, chain.barrier().time_derivative(0, xs));
        log.steps.push_back(rec);
        break;
      }
      nu = res.nu_star;
    }
    rec.nu_star = nu;
    rec.margin = constraint_margin(row, rec.gamma_E, rec.e_bar, nu);

    VectorXd u;
    if (rec.branch == Branch::GP) {
      try {
        u = detail::solve_mu_G(mu_G, nu - mu_f);
      } catch (const SingularMeanG&) {
        if (opt.mode == ControlMode::GP_ONLY) {
          rec.status = SolveStatus::Infeasible;
          log.infeasible = true;
          sq_sum += (s.q - ref.q_d(t)).squaredNorm();
          log.min_b = std::min(log.min_b, chain.barrier().time_derivative(0, xs));
          log.steps.push_back(rec);
          break;
        }
        const auto bm = backup_branch_metrics(cfg.bounds, model, xs);
        u = (nu - bm.mu_f) / cfg.bounds.gamma_G_hi;
        rec.branch = Branch::BACKUP;
        rec.gamma_E = bm.gamma_E;
        rec.e_bar = bm.e_bar;
      }
    } else {
      u = (nu - mu_f) / cfg.bounds.gamma_G_hi;
    }
    rec.u = Vector2d(u(0), u(1));

    sq_sum += (s.q - ref.q_d(t)).squaredNorm();
    log.min_b = std::min(log.min_b, chain.barrier().time_derivative(0, xs));
    log.steps.push_back(rec);

    try {
      const double h = opt.dt_ctrl / opt.substeps;
      for (int sub = 0; sub < opt.substeps; ++sub) s = step_plant(p, s, rec.u, h);
    } catch (const NonFiniteState&) {
      log.diverged = true;
      break;
    }
  }

  if (!log.steps.empty()) log.mse = sq_sum / static_cast<double>(log.steps.size());
  return log;
}

}  // namespace ejcbf
