// End-to-end acceptance checks. Each test prints one [criterion N] PASS/FAIL
// line; failures carry the measured numbers so the verdict is auditable.
#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>

#include "ejcbf/config.hpp"
#include "ejcbf/harness.hpp"
#include "ejcbf/io.hpp"
#include "ejcbf/sim.hpp"
#include "ejcbf/socp.hpp"

#ifndef EJCBF_SOURCE_DIR
#define EJCBF_SOURCE_DIR "."
#endif

using namespace ejcbf;

namespace {

const StudyConfig& shipped_config() {
  static const StudyConfig cfg = study_config_from_toml(
      TomlDoc::parse(read_text_file(std::string(EJCBF_SOURCE_DIR) + "/paper.toml")));
  return cfg;
}

// The fitted study is expensive (786-point Gram factorizations); share it.
const Study& shipped_study() {
  static const Study st = build_study(shipped_config());
  return st;
}

GpModel true_dynamics_model(const RobotParams& p) {
  Prior prior;
  prior.f_hat = [p](const VectorXd& xs) {
    Vector2d f;
    Matrix2d G;
    true_f_g(p, FlatState::from_stacked(xs), f, G);
    return VectorXd(f);
  };
  prior.g_hat = [p](const VectorXd& xs) {
    Vector2d f;
    Matrix2d G;
    true_f_g(p, FlatState::from_stacked(xs), f, G);
    return MatrixXd(G);
  };
  TrainingSet empty;
  empty.X.resize(0, 8);
  empty.U.resize(0, 2);
  empty.Y.resize(0, 2);
  return GpModel(std::move(empty), std::move(prior),
                 KernelParams::isotropic(2, 8, 1e-30, 1.0, 1e-30, 1.0), 24.0, 0.05);
}

TrajectoryLog run_mode(ControlMode mode, double c, double horizon = 30.0) {
  const Study& st = shipped_study();
  SimOptions opt;
  opt.mode = mode;
  opt.horizon = horizon;
  return run_closed_loop(st.params, st.model, st.switch_cfg, st.chain, st.gain, Reference(c),
                         opt);
}

void report(int n, bool pass, const std::string& detail) {
  std::printf("[criterion %d] %s — %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

TEST(Acceptance, Criterion1_Table1Ordering) {
  const StudyConfig& cfg = shipped_config();
  const Study& st = shipped_study();
  ExperimentConfig ec;
  ec.n_trials = cfg.n_trials;
  ec.c_lo = cfg.c_lo;
  ec.c_hi = cfg.c_hi;
  ec.horizon = cfg.horizon;
  ec.master_seed = cfg.master_seed;
  const auto sum = run_experiment(ec, st.params, st.model, st.switch_cfg, st.chain, st.gain);
  const auto& sw = sum.mode(ControlMode::SWITCHING);
  const auto& gp = sum.mode(ControlMode::GP_ONLY);
  const auto& bk = sum.mode(ControlMode::BACKUP_ONLY);
  const bool no_inf = sw.infeasible_count == 0 && bk.infeasible_count == 0;
  const int gp_failures = gp.infeasible_count + gp.diverged_count;
  const bool gp_fails_often = gp_failures >= 30;
  const bool mse_order = sw.has_mean_with_diverged && bk.has_mean_with_diverged &&
                         sw.mean_mse_with_diverged < bk.mean_mse_with_diverged;
  report(1, no_inf && gp_fails_often && mse_order,
         "switching/backup infeasibilities " + std::to_string(sw.infeasible_count) + "/" +
             std::to_string(bk.infeasible_count) + "; gp_only failures " +
             std::to_string(gp_failures) + " (need >= 30); mean MSE switching " +
             num(sw.mean_mse_with_diverged) + " vs backup " + num(bk.mean_mse_with_diverged));
  EXPECT_TRUE(no_inf);
  // Red by construction: the faithful Eq. (27) envelope e_bar ~ gamma_E*||mu_f||
  // with gamma_E = 1 - gamma_lo/gamma_hi = 0.971 makes every filtered
  // BACKUP_ONLY run diverge within ~0.3 s (tiny partial MSE), and the same
  // mechanism removes the safe operating region a kernel set would need for
  // GP_ONLY to fail often while SWITCHING completes. See README.
  EXPECT_TRUE(gp_fails_often) << "documented expected failure";
  EXPECT_TRUE(mse_order) << "documented expected failure";
}

TEST(Acceptance, Criterion2_Fig2Behavior) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sw = run_mode(ControlMode::SWITCHING, 15.0);
  const auto gp = run_mode(ControlMode::GP_ONLY, 15.0);
  const auto bk = run_mode(ControlMode::BACKUP_ONLY, 15.0);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double max_q1 = -1e9;
  for (const auto& s : sw.steps) max_q1 = std::max(max_q1, s.plant.q(0));
  const bool sw_safe = sw.completed() && sw.steps.size() == 3000u && max_q1 <= 0.8 + 1e-3;
  const bool gp_fails = gp.infeasible || gp.diverged;
  const bool bk_safe = bk.completed() && bk.steps.size() == 3000u && bk.mse >= 1.5 * sw.mse;
  const bool fast = secs < 60.0;
  report(2, sw_safe && gp_fails && bk_safe && fast,
         "switching max q1 " + num(max_q1) + " over 30 s (completed: " +
             (sw.completed() ? "yes" : "no") + "); gp_only failed early: " +
             (gp_fails ? "yes" : "no") + "; backup_only completed: " +
             (bk.completed() ? "yes" : "no") + " (diverged at t=" +
             num(0.01 * bk.steps.size()) + " s); runtime " + num(secs) + " s");
  EXPECT_TRUE(sw_safe);
  EXPECT_TRUE(fast);
  // Red by construction, and mutually exclusive with sw_safe: SWITCHING and
  // GP_ONLY follow bit-identical trajectories until the first state with
  // gamma_E > zeta, so "SWITCHING safe for 30 s" and "GP_ONLY fails before
  // 30 s" cannot both hold at c = 15; backup divergence as in criterion 1.
  EXPECT_TRUE(gp_fails) << "documented expected failure";
  EXPECT_TRUE(bk_safe) << "documented expected failure";
}

TEST(Acceptance, Criterion3_ExactLinearization) {
  const RobotParams p = shipped_config().robot;
  const auto model = true_dynamics_model(p);
  SimOptions opt;
  opt.mode = ControlMode::SWITCHING;
  opt.horizon = 30.0;
  opt.filter_enabled = false;
  const Study& st = shipped_study();
  const auto log = run_closed_loop(p, model, st.switch_cfg, st.chain, st.gain, Reference(100.0),
                                   opt);
  const bool pass = log.completed() && log.mse < 1e-4;
  report(3, pass, "true (f, G), filter off, c = 100: MSE " + num(log.mse) + " (need < 1e-4)");
  EXPECT_TRUE(pass);
}

TEST(Acceptance, Criterion4_Lemma2Bounds) {
  const RobotParams p = shipped_config().robot;
  const MatrixBounds b = matrix_bounds(p);
  RandomStream rng(401);
  double lo = 1e300, hi = 0.0;
  for (int k = 0; k < 10000; ++k) {
    FlatState x;
    for (int i = 0; i < 2; ++i) {
      x.x1(i) = rng.uniform(-M_PI, M_PI);
      x.x2(i) = rng.uniform(-3.0, 3.0);
      x.x3(i) = rng.uniform(-3.0, 3.0);
      x.x4(i) = rng.uniform(-3.0, 3.0);
    }
    Vector2d f;
    Matrix2d G;
    true_f_g(p, x, f, G);
    const auto sv = G.jacobiSvd().singularValues();
    lo = std::min(lo, sv.minCoeff());
    hi = std::max(hi, sv.maxCoeff());
  }
  const bool computed_ok = lo >= b.gamma_G_lo && hi <= b.gamma_G_hi;
  const bool paper_ok = lo >= 97.0 && hi <= 1640.0;
  report(4, computed_ok && paper_ok,
         "spectrum [" + num(lo) + ", " + num(hi) + "]; computed bounds [" + num(b.gamma_G_lo) +
             ", " + num(b.gamma_G_hi) + "] bracket: " + (computed_ok ? "yes" : "no") +
             "; [97, 1640] bracket: " + (paper_ok ? "yes" : "no"));
  EXPECT_TRUE(computed_ok);
  // Red by construction: G = K J^-1 M^-1 = 1000 M^-1 has singular values in
  // [171.6, 5828] for the section-5 arm, so the literature interval [97, 1640]
  // cannot bracket it for any state sample. See README.
  EXPECT_TRUE(paper_ok) << "documented expected failure";
}

namespace {

// Exact-projection oracle. The feasible set C is convex, so the distance from
// the (exterior) nominal point to the first boundary crossing along a ray is
// quasiconvex in the ray angle: a coarse angular scan brackets the minimizer
// and ternary search plus radius bisection refine it to machine precision.
bool polar_oracle(const SocpProblem& p, VectorXd& best, double& best_dist) {
  const detail::RobustCone rc = detail::extract_robust(p);
  if (rc.violation(p.nu_nom) <= 0.0) {
    best = p.nu_nom;
    best_dist = 0.0;
    return true;
  }
  const double cap = 1e7 * (1.0 + p.nu_nom.norm());
  // first crossing radius along angle phi: the violation is convex along a
  // ray, so ternary search finds its minimizer exactly and bisection below it
  // recovers the entry point of the (single) feasible chord
  auto radius_at = [&](double phi) {
    const Eigen::Vector2d dir(std::cos(phi), std::sin(phi));
    auto g = [&](double r) { return rc.violation(p.nu_nom + r * VectorXd(dir)); };
    double lo = 0.0, hi = cap;
    for (int i = 0; i < 200; ++i) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (g(m1) <= g(m2)) hi = m2;
      else lo = m1;
    }
    const double r_min = 0.5 * (lo + hi);
    if (g(r_min) > 0.0) return std::numeric_limits<double>::infinity();
    lo = 0.0;
    hi = r_min;
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) <= 0.0 ? hi : lo) = mid;
    }
    return hi;
  };
  const int n_scan = 256;
  double best_phi = 0.0, best_r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_scan; ++i) {
    const double phi = 2.0 * M_PI * i / n_scan;
    const double r = radius_at(phi);
    if (r < best_r) {
      best_r = r;
      best_phi = phi;
    }
  }
  if (!std::isfinite(best_r)) return false;
  // dense re-bracketing is robust to grazing rays whose chord the radius scan
  // misses (an isolated +inf inside the bracket would derail ternary search)
  double a = best_phi - 2.0 * M_PI / n_scan, b = best_phi + 2.0 * M_PI / n_scan;
  for (int round = 0; round < 14; ++round) {
    const int n_pts = 32;
    int best_i = -1;
    for (int i = 0; i <= n_pts; ++i) {
      const double phi = a + (b - a) * i / n_pts;
      const double r = radius_at(phi);
      if (r < best_r) {
        best_r = r;
        best_phi = phi;
        best_i = i;
      } else if (best_i < 0 && r == best_r) {
        best_i = i;
      }
    }
    const double step = (b - a) / n_pts;
    a = best_phi - step;
    b = best_phi + step;
  }
  best = p.nu_nom +
         best_r * VectorXd(Eigen::Vector2d(std::cos(best_phi), std::sin(best_phi)));
  best_dist = best_r * best_r;
  return true;
}

}  // namespace

TEST(Acceptance, Criterion5_SocpAgreement) {
  const auto t0 = std::chrono::steady_clock::now();
  RandomStream rng(501);
  int n = 0, idempotent = 0;
  double worst_ipm = 0.0, worst_oracle = 0.0;
  bool all_ok = true;
  for (int k = 0; k < 1000; ++k) {
    CbfRowData row;
    VectorXd b(2);
    b << rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0);
    if (b.norm() < 1e-3) b << 1.0, 0.0;
    row.grad_psi_B = b;
    row.norm_grad_psi_B = b.norm();
    row.drift = rng.uniform(-5.0, 5.0);
    row.alpha_psi = 0.0;
    const double gamma_E = rng.uniform(0.0, 0.99);
    const VectorXd nu_nom =
        (VectorXd(2) << rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)).finished();
    const auto p = build_problem(row, gamma_E, 0.0, nu_nom);
    const auto spec = solve_specialized(p);
    const auto ipm = solve_ipm(p);
    if (spec.status != SolveStatus::Optimal || ipm.status != SolveStatus::Optimal) {
      all_ok = false;
      continue;
    }
    ++n;
    // feasibility and idempotence invariants
    const detail::RobustCone rc = detail::extract_robust(p);
    if (rc.violation(spec.nu_star) > 1e-8) all_ok = false;
    const auto again = solve_specialized(build_problem(row, gamma_E, 0.0, spec.nu_star));
    if ((again.nu_star - spec.nu_star).norm() <= 1e-7 * (1.0 + spec.nu_star.norm()))
      ++idempotent;
    const double scale = 1.0 + std::max(spec.distance, ipm.distance);
    worst_ipm = std::max(worst_ipm, std::abs(spec.distance - ipm.distance) / scale);
    VectorXd oracle_nu;
    double oracle_dist;
    if (polar_oracle(p, oracle_nu, oracle_dist))
      worst_oracle = std::max(worst_oracle, std::abs(spec.distance - oracle_dist) / scale);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = all_ok && n == 1000 && idempotent == n && worst_ipm < 1e-6 &&
                    worst_oracle < 1e-6 && secs < 30.0;
  report(5, pass,
         std::to_string(n) + "/1000 instances optimal in all solvers; worst relative "
         "objective gap vs IPM " + num(worst_ipm) + ", vs oracle " + num(worst_oracle) +
             "; idempotent " + std::to_string(idempotent) + "/" + std::to_string(n) +
             "; runtime " + num(secs) + " s");
  EXPECT_TRUE(pass);
}

TEST(Acceptance, Criterion6_GpBoundCoverage) {
  // m = 1 toy: draw f exactly from GP(0, k) on a joint train/test grid via the
  // Gram Cholesky, fit on the noisy training slice, and count Lemma 1 hits.
  const double sf = 1.5, ls = 0.4, noise = 0.01;
  SeKernel kern{sf, VectorXd::Constant(1, ls)};
  int covered = 0, total = 0;
  for (int rep = 0; rep < 10; ++rep) {
    RandomStream rng(600 + rep);
    const int n_train = 45, n_test = 1000, n_all = n_train + n_test;
    MatrixXd X(n_all, 1);
    for (int i = 0; i < n_train; ++i) X(i, 0) = 5.0 * i / (n_train - 1);
    for (int i = 0; i < n_test; ++i) X(n_train + i, 0) = rng.uniform(0.0, 5.0);
    MatrixXd K(n_all, n_all);
    for (int a = 0; a < n_all; ++a)
      for (int b = a; b < n_all; ++b)
        K(a, b) = K(b, a) = kern(X.row(a), X.row(b));
    K.diagonal().array() += 1e-10;
    const MatrixXd L = Eigen::LLT<MatrixXd>(K).matrixL();
    VectorXd z(n_all);
    for (int i = 0; i < n_all; ++i) z(i) = rng.normal();
    const VectorXd f = L * z;

    TrainingSet tset;
    tset.X = X.topRows(n_train);
    tset.U = MatrixXd::Zero(n_train, 1);
    tset.Y.resize(n_train, 1);
    for (int i = 0; i < n_train; ++i) tset.Y(i, 0) = f(i) + noise * rng.normal();
    tset.noise_std = noise;
    KernelParams kp;
    kp.kf = {kern};
    kp.kg = {{SeKernel{1e-30, VectorXd::Constant(1, 1.0)}}};
    const GpModel model(tset, Prior::zero(1), kp, 24.0, 0.05);

    for (int i = 0; i < n_test; ++i) {
      VectorXd mu, sig;
      model.predict_f(X.row(n_train + i), mu, sig);
      ++total;
      if (std::abs(mu(0) - f(n_train + i)) <= std::sqrt(24.0) * sig(0)) ++covered;
    }
  }
  const double frac = static_cast<double>(covered) / total;
  const bool pass = total == 10000 && frac >= 0.95;
  report(6, pass,
         "|mu - f| <= sqrt(24) sigma at " + std::to_string(covered) + "/" +
             std::to_string(total) + " prior-draw test points (" + num(100.0 * frac) + "%)");
  EXPECT_TRUE(pass);
}

TEST(Acceptance, Criterion7_CbfChainClosedForm) {
  const Study& st = shipped_study();
  const auto sys = LinearSystem::chain(2);
  RandomStream rng(701);
  double worst_psi = 0.0, worst_grad = 0.0;
  for (int k = 0; k < 1000; ++k) {
    VectorXd x(8);
    for (int i = 0; i < 8; ++i) x(i) = rng.uniform(-2.0, 2.0);
    const double closed = 0.8 - x(0) - 3.0 * x(2) - 3.0 * x(4) - x(6);
    worst_psi = std::max(worst_psi, std::abs(st.chain.psi(x) - closed));
    const VectorXd g = st.chain.grad_psi(x);
    const double h = 1e-6;
    for (int i = 0; i < 8; ++i) {
      VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double fd = (st.chain.psi(xp) - st.chain.psi(xm)) / (2.0 * h);
      worst_grad = std::max(worst_grad, std::abs(g(i) - fd));
    }
  }
  const bool pass = worst_psi < 1e-12 && worst_grad < 1e-6;
  report(7, pass,
         "psi vs 0.8 - x11 - 3x21 - 3x31 - x41: max |diff| " + num(worst_psi) +
             "; grad vs FD: max |diff| " + num(worst_grad));
  EXPECT_TRUE(pass);
}

TEST(Acceptance, Criterion8_DerivativeEngine) {
  RobotParams p;  // gravity on: exercises every term
  RandomStream rng(801);
  double worst_dM = 0.0, worst_ddM = 0.0, worst_ddC = 0.0, worst_dC = 0.0;
  for (int k = 0; k < 100; ++k) {
    // random smooth trajectory: cubic q_i(t) evaluated around a random t0
    Eigen::Matrix<double, 2, 4> a;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    const double t0 = rng.uniform(-1.0, 1.0);
    auto q_at = [&](double t) {
      return Vector2d(a(0, 0) + t * (a(0, 1) + t * (a(0, 2) + t * a(0, 3))),
                      a(1, 0) + t * (a(1, 1) + t * (a(1, 2) + t * a(1, 3))));
    };
    auto dq_at = [&](double t) {
      return Vector2d(a(0, 1) + t * (2.0 * a(0, 2) + 3.0 * t * a(0, 3)),
                      a(1, 1) + t * (2.0 * a(1, 2) + 3.0 * t * a(1, 3)));
    };
    FlatState x;
    x.x1 = q_at(t0);
    x.x2 = dq_at(t0);
    x.x3 = Vector2d(2.0 * a(0, 2) + 6.0 * t0 * a(0, 3), 2.0 * a(1, 2) + 6.0 * t0 * a(1, 3));
    x.x4 = Vector2d(6.0 * a(0, 3), 6.0 * a(1, 3));
    const auto d = dynamics_derivatives(p, x);
    const double h = 1e-4;
    auto M_at = [&](double t) { return inertia(p, q_at(t)); };
    auto C_at = [&](double t) { return coriolis_gravity(p, q_at(t), dq_at(t)); };
    const Matrix2d dM_fd = (M_at(t0 + h) - M_at(t0 - h)) / (2.0 * h);
    const Matrix2d ddM_fd = (M_at(t0 + h) - 2.0 * M_at(t0) + M_at(t0 - h)) / (h * h);
    const Vector2d dC_fd = (C_at(t0 + h) - C_at(t0 - h)) / (2.0 * h);
    const Vector2d ddC_fd = (C_at(t0 + h) - 2.0 * C_at(t0) + C_at(t0 - h)) / (h * h);
    worst_dM = std::max(worst_dM, (d.dM - dM_fd).cwiseAbs().maxCoeff());
    worst_ddM = std::max(worst_ddM, (d.ddM - ddM_fd).cwiseAbs().maxCoeff());
    worst_dC = std::max(worst_dC, (d.dC - dC_fd).cwiseAbs().maxCoeff());
    worst_ddC = std::max(worst_ddC, (d.ddC - ddC_fd).cwiseAbs().maxCoeff());
  }
  const bool pass = worst_dM < 1e-5 && worst_ddM < 1e-3 && worst_dC < 1e-5 && worst_ddC < 1e-3;
  report(8, pass,
         "max |autodiff - FD|: dM " + num(worst_dM) + " (tol 1e-5), ddM " + num(worst_ddM) +
             " (tol 1e-3), dC " + num(worst_dC) + ", ddC " + num(worst_ddC) + " (tol 1e-3)");
  EXPECT_TRUE(pass);
}

TEST(Acceptance, Criterion9_Determinism) {
  const Study& st = shipped_study();
  SimOptions opt;
  opt.mode = ControlMode::SWITCHING;
  opt.horizon = 3.0;
  const auto a = run_closed_loop(st.params, st.model, st.switch_cfg, st.chain, st.gain,
                                 Reference(15.0), opt);
  const auto b = run_closed_loop(st.params, st.model, st.switch_cfg, st.chain, st.gain,
                                 Reference(15.0), opt);
  bool pass = a.csv() == b.csv();

  ExperimentConfig ec;
  ec.n_trials = 3;
  ec.horizon = 1.0;
  ec.master_seed = shipped_config().master_seed;
  const auto dir1 = std::filesystem::temp_directory_path() / "ejcbf_accept_det1";
  const auto dir2 = std::filesystem::temp_directory_path() / "ejcbf_accept_det2";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  ec.out_dir = dir1.string();
  run_experiment(ec, st.params, st.model, st.switch_cfg, st.chain, st.gain);
  ec.out_dir = dir2.string();
  run_experiment(ec, st.params, st.model, st.switch_cfg, st.chain, st.gain);
  for (const auto& entry : std::filesystem::directory_iterator(dir1)) {
    const auto other = dir2 / entry.path().filename();
    if (!std::filesystem::exists(other) ||
        read_text_file(entry.path().string()) != read_text_file(other.string()))
      pass = false;
  }
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  report(9, pass, "identical seeds give bit-identical trajectory and experiment CSVs");
  EXPECT_TRUE(pass);
}
