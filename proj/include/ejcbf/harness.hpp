#pragma once

#include <atomic>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "ejcbf/config.hpp"
#include "ejcbf/io.hpp"
#include "ejcbf/sim.hpp"

namespace ejcbf {

struct ExperimentConfig {
  int n_trials = 100;
  double c_lo = 4.0, c_hi = 100.0;
  double horizon = 30.0;
  std::vector<ControlMode> modes{ControlMode::SWITCHING, ControlMode::GP_ONLY,
                                 ControlMode::BACKUP_ONLY};
  std::uint64_t master_seed = 7;
  std::string out_dir;  // empty: keep results in memory only
  int threads = 1;

  void validate() const {
    if (n_trials < 1) throw ConfigError("experiment: n_trials must be >= 1");
    if (!(c_lo > 0.0) || !(c_lo <= c_hi)) throw ConfigError("experiment: bad c range");
    if (!(horizon > 0.0)) throw ConfigError("experiment: horizon must be positive");
    if (threads < 1) throw ConfigError("experiment: threads must be >= 1");
  }
};

struct TrialRecord {
  int trial = 0;
  double c = 0.0;
  ControlMode mode = ControlMode::SWITCHING;
  double mse = 0.0;
  std::size_t steps = 0;
  double min_b = 0.0;
  bool infeasible = false;
  bool diverged = false;
};

struct ModeSummary {
  ControlMode mode = ControlMode::SWITCHING;
  int infeasible_count = 0;
  int diverged_count = 0;
  int completed_count = 0;
  // convention A: mean over non-infeasible runs, diverged partial MSE included
  double mean_mse_with_diverged = 0.0;
  bool has_mean_with_diverged = false;
  // convention B: mean over fully completed runs only (Table 1's "---")
  double mean_mse_completed = 0.0;
  bool has_mean_completed = false;
};

struct ExperimentSummary {
  std::vector<ModeSummary> per_mode;
  std::vector<TrialRecord> trials;  // ordered by (trial, mode)
  std::vector<double> c_values;

  const ModeSummary& mode(ControlMode m) const {
    for (const auto& s : per_mode)
      if (s.mode == m) return s;
    throw ConfigError("experiment: mode not part of the run");
  }

  std::string to_json() const {
    nlohmann::json j;
    j["n_trials"] = c_values.size();
    j["c"] = c_values;
    nlohmann::json modes = nlohmann::json::object();
    for (const auto& s : per_mode) {
      nlohmann::json m;
      m["infeasible"] = s.infeasible_count;
      m["diverged"] = s.diverged_count;
      m["completed"] = s.completed_count;
      if (s.has_mean_with_diverged) m["mean_mse_with_diverged"] = s.mean_mse_with_diverged;
      else m["mean_mse_with_diverged"] = nullptr;
      if (s.has_mean_completed) m["mean_mse_completed"] = s.mean_mse_completed;
      else m["mean_mse_completed"] = nullptr;
      modes[to_string(s.mode)] = std::move(m);
    }
    j["modes"] = std::move(modes);
    nlohmann::json trials_json = nlohmann::json::array();
    for (const auto& t : trials) {
      nlohmann::json r;
      r["trial"] = t.trial;
      r["c"] = t.c;
      r["mode"] = to_string(t.mode);
      r["mse"] = t.mse;
      r["steps"] = t.steps;
      r["min_b"] = t.min_b;
      r["infeasible"] = t.infeasible;
      r["diverged"] = t.diverged;
      trials_json.push_back(std::move(r));
    }
    j["trials"] = std::move(trials_json);
    return j.dump(2);
  }

  /// Table 1-shaped markdown summary.
  std::string to_markdown() const {
    std::ostringstream out;
    out << "| quantity |";
    for (const auto& s : per_mode) out << ' ' << to_string(s.mode) << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < per_mode.size(); ++i) out << "---|";
    auto row = [&](const std::string& name, auto get) {
      out << "\n| " << name << " |";
      for (const auto& s : per_mode) out << ' ' << get(s) << " |";
    };
    auto fmt = [](bool has, double v) {
      if (!has) return std::string("---");
      std::ostringstream o;
      o << std::setprecision(4) << v;
      return o.str();
    };
    row("mean MSE (diverged partials included)",
        [&](const ModeSummary& s) { return fmt(s.has_mean_with_diverged, s.mean_mse_with_diverged); });
    row("mean MSE (completed runs only)",
        [&](const ModeSummary& s) { return fmt(s.has_mean_completed, s.mean_mse_completed); });
    row("# infeasibilities",
        [](const ModeSummary& s) { return std::to_string(s.infeasible_count); });
    row("# diverged", [](const ModeSummary& s) { return std::to_string(s.diverged_count); });
    row("# completed", [](const ModeSummary& s) { return std::to_string(s.completed_count); });
    out << '\n';
    return out.str();
  }
};

/// Runs every mode on identical references; c_i drawn once per trial from a
/// seed-derived substream so results are independent of scheduling order.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg, const RobotParams& p,
                                        const GpModel& model, const SwitchConfig& scfg,
                                        const CbfChain& chain, const TrackingGain& gain) {
  cfg.validate();
  ExperimentSummary summary;
  summary.c_values.resize(cfg.n_trials);
  for (int k = 0; k < cfg.n_trials; ++k) {
    auto rng = RandomStream::substream(cfg.master_seed, static_cast<std::uint64_t>(k));
    summary.c_values[k] = rng.uniform(cfg.c_lo, cfg.c_hi);
  }

  const int n_cells = cfg.n_trials * static_cast<int>(cfg.modes.size());
  std::vector<TrialRecord> records(n_cells);
  std::vector<std::string> csvs(n_cells);
  const bool write_files = !cfg.out_dir.empty();
  if (write_files) std::filesystem::create_directories(cfg.out_dir);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int cell = next.fetch_add(1); cell < n_cells; cell = next.fetch_add(1)) {
      const int k = cell / static_cast<int>(cfg.modes.size());
      const ControlMode mode = cfg.modes[cell % cfg.modes.size()];
      SimOptions opt;
      opt.mode = mode;
      opt.horizon = cfg.horizon;
      const Reference ref(summary.c_values[k]);
      const auto log = run_closed_loop(p, model, scfg, chain, gain, ref, opt);
      TrialRecord rec;
      rec.trial = k;
      rec.c = summary.c_values[k];
      rec.mode = mode;
      rec.mse = log.mse;
      rec.steps = log.steps.size();
      rec.min_b = log.min_b;
      rec.infeasible = log.infeasible;
      rec.diverged = log.diverged;
      records[cell] = rec;
      if (write_files) csvs[cell] = log.csv();
    }
  };
  const int width = std::min(cfg.threads, n_cells);
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (write_files) {
    for (int cell = 0; cell < n_cells; ++cell) {
      const auto& r = records[cell];
      const auto path = std::filesystem::path(cfg.out_dir) /
                        ("trial_" + std::to_string(r.trial) + "_" + to_string(r.mode) + ".csv");
      write_text_file(path.string(), csvs[cell]);
    }
  }

  summary.trials = std::move(records);
  for (const ControlMode mode : cfg.modes) {
    ModeSummary s;
    s.mode = mode;
    double sum_all = 0.0, sum_done = 0.0;
    int n_all = 0;
    for (const auto& r : summary.trials) {
      if (r.mode != mode) continue;
      if (r.infeasible) {
        ++s.infeasible_count;
        continue;  // Table 1 semantics: infeasible runs contribute no MSE
      }
      sum_all += r.mse;
      ++n_all;
      if (r.diverged) {
        ++s.diverged_count;
      } else {
        ++s.completed_count;
        sum_done += r.mse;
      }
    }
    if (n_all > 0) {
      s.mean_mse_with_diverged = sum_all / n_all;
      s.has_mean_with_diverged = true;
    }
    if (s.completed_count > 0) {
      s.mean_mse_completed = sum_done / s.completed_count;
      s.has_mean_completed = true;
    }
    summary.per_mode.push_back(s);
  }

  if (write_files) {
    write_text_file((std::filesystem::path(cfg.out_dir) / "summary.json").string(),
                    summary.to_json());
    write_text_file((std::filesystem::path(cfg.out_dir) / "summary.md").string(),
                    summary.to_markdown());
  }
  return summary;
}

/// Fully assembled §5 setup: perturbed-parameter prior mean for f, zero prior
/// for G, seeded grid data, fitted (or configured) hyperparameters.
struct Study {
  RobotParams params;
  TrainingSet data;
  GpModel model;
  SwitchConfig switch_cfg;
  CbfChain chain = CbfChain::identity_chain(
      BarrierSpec::linear(0.8, (VectorXd(2) << 1.0, 0.0).finished()), 16.0);
  TrackingGain gain = TrackingGain::paper_gain();
};

inline Prior study_prior(const RobotParams& perturbed) {
  Prior prior;
  prior.f_hat = [perturbed](const VectorXd& xs) {
    Vector2d f;
    Matrix2d G;
    true_f_g(perturbed, FlatState::from_stacked(xs), f, G);
    return VectorXd(f);
  };
  prior.g_hat = [](const VectorXd&) { return MatrixXd::Zero(2, 2).eval(); };
  return prior;
}

/// Controller-side pieces only (bounds, chain, gain); data/model left empty.
inline Study study_skeleton(const StudyConfig& cfg) {
  Study st;
  st.params = cfg.robot;
  st.params.validate();
  st.switch_cfg.zeta = cfg.zeta;
  st.switch_cfg.bounds = matrix_bounds(st.params);
  if (cfg.use_paper_gamma) {
    st.switch_cfg.bounds.gamma_G_lo = cfg.paper_gamma_lo;
    st.switch_cfg.bounds.gamma_G_hi = cfg.paper_gamma_hi;
  }
  st.chain = CbfChain::identity_chain(
      BarrierSpec::linear(cfg.barrier_offset, (VectorXd(2) << 1.0, 0.0).finished()), cfg.kappa);
  st.gain = TrackingGain(cfg.L);
  return st;
}

inline Study build_study(const StudyConfig& cfg, const FitOptions& fit_opts = {}) {
  Study st = study_skeleton(cfg);
  const RobotParams perturbed =
      perturbed_params(st.params, cfg.prior_rel_error, cfg.data_seed ^ 0x5eedULL);
  st.data = generate_training_data(st.params, GridSpec::paper(), cfg.n_train, cfg.sigma_on,
                                   Vector2d(-cfg.u_max, -cfg.u_max),
                                   Vector2d(cfg.u_max, cfg.u_max), cfg.data_seed);
  KernelParams kp = cfg.have_kernels
                        ? cfg.kernels
                        : KernelParams::isotropic(2, 8, 30.0, 1.5, 2000.0, 1.5);
  st.model = fit(st.data, study_prior(perturbed), std::move(kp), cfg.beta, cfg.delta, fit_opts);
  return st;
}

}  // namespace ejcbf
