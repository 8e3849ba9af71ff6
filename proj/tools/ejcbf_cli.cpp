// Command-line front end: data generation, GP fitting, single simulations,
// and the full Monte-Carlo experiment, all driven by a TOML config.
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ejcbf/config.hpp"
#include "ejcbf/harness.hpp"
#include "ejcbf/io.hpp"
#include "ejcbf/sim.hpp"

using namespace ejcbf;

namespace {

StudyConfig load_config(const std::string& path, bool verbose) {
  const StudyConfig cfg = study_config_from_toml(TomlDoc::parse(read_text_file(path)));
  if (verbose) std::cerr << "loaded config " << path << "\n";
  return cfg;
}

GpModel load_or_build_model(const StudyConfig& cfg, const std::string& model_path,
                            bool verbose) {
  const RobotParams perturbed =
      perturbed_params(cfg.robot, cfg.prior_rel_error, cfg.data_seed ^ 0x5eedULL);
  if (!model_path.empty()) {
    if (verbose) std::cerr << "loading model " << model_path << "\n";
    return gp_model_from_json(read_text_file(model_path), study_prior(perturbed));
  }
  if (!cfg.have_kernels)
    throw ConfigError("no fitted kernels in config and no --model given; run `fit` first");
  if (verbose) std::cerr << "building model from config kernels\n";
  return build_study(cfg).model;
}

ControlMode parse_mode(const std::string& s) {
  if (s == "switching") return ControlMode::SWITCHING;
  if (s == "gp_only") return ControlMode::GP_ONLY;
  if (s == "backup_only") return ControlMode::BACKUP_ONLY;
  throw ConfigError("unknown mode '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elastic-joint CBF safety-filter pipeline"};
  app.require_subcommand(1);
  std::string config_path = "paper.toml";
  bool verbose = false;
  app.add_option("--config", config_path, "TOML config file")->capture_default_str();
  app.add_flag("--verbose", verbose, "progress to stderr");

  auto* gen = app.add_subcommand("gen-data", "generate the training grid dataset");
  std::string gen_out = "training.csv";
  std::uint64_t gen_seed_override = 0;
  bool gen_has_seed = false;
  gen->add_option("--out", gen_out, "output CSV path")->capture_default_str();
  gen->add_option("--seed", gen_seed_override, "override data seed")
      ->each([&](const std::string&) { gen_has_seed = true; });

  auto* fit_cmd = app.add_subcommand("fit", "fit GP hyperparameters by likelihood maximization");
  std::string fit_data, fit_out = "model.json";
  int fit_restarts = 3, fit_evals = 500;
  std::uint64_t fit_seed = 0;
  fit_cmd->add_option("--data", fit_data, "training CSV (default: regenerate from config)");
  fit_cmd->add_option("--out", fit_out, "output model JSON")->capture_default_str();
  fit_cmd->add_option("--restarts", fit_restarts, "Nelder-Mead restarts")->capture_default_str();
  fit_cmd->add_option("--evals", fit_evals, "max evaluations per restart")->capture_default_str();
  fit_cmd->add_option("--seed", fit_seed, "restart perturbation seed")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "run one closed-loop trajectory");
  std::string sim_mode = "switching", sim_out = "trajectory.csv", sim_model;
  double sim_c = 15.0, sim_T = 30.0;
  bool sim_no_filter = false;
  sim->add_option("--mode", sim_mode, "switching | gp_only | backup_only")->capture_default_str();
  sim->add_option("--c", sim_c, "reference period parameter")->capture_default_str();
  sim->add_option("--horizon", sim_T, "horizon [s]")->capture_default_str();
  sim->add_option("--out", sim_out, "trajectory CSV path")->capture_default_str();
  sim->add_option("--model", sim_model, "fitted model JSON (default: config kernels)");
  sim->add_flag("--no-filter", sim_no_filter, "disable the SOCP safety filter");

  auto* exp = app.add_subcommand("experiment", "run the Monte-Carlo study");
  std::string exp_dir = "results", exp_model;
  int exp_trials = -1, exp_threads = -1;
  std::uint64_t exp_seed = 0;
  bool exp_has_seed = false;
  exp->add_option("--trials", exp_trials, "number of trials (default: config)");
  exp->add_option("--out-dir", exp_dir, "output directory")->capture_default_str();
  exp->add_option("--model", exp_model, "fitted model JSON (default: config kernels)");
  exp->add_option("--threads", exp_threads, "worker threads (default: config)");
  exp->add_option("--seed", exp_seed, "override master seed")
      ->each([&](const std::string&) { exp_has_seed = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const StudyConfig cfg = load_config(config_path, verbose);

    if (gen->parsed()) {
      const std::uint64_t seed = gen_has_seed ? gen_seed_override : cfg.data_seed;
      const auto data = generate_training_data(
          cfg.robot, GridSpec::paper(), cfg.n_train, cfg.sigma_on,
          Vector2d(-cfg.u_max, -cfg.u_max), Vector2d(cfg.u_max, cfg.u_max), seed);
      write_text_file(gen_out, training_set_to_csv(data));
      std::cout << "wrote " << data.count() << " samples to " << gen_out << "\n";
      return 0;
    }

    if (fit_cmd->parsed()) {
      const RobotParams perturbed =
          perturbed_params(cfg.robot, cfg.prior_rel_error, cfg.data_seed ^ 0x5eedULL);
      TrainingSet data = fit_data.empty()
                             ? generate_training_data(cfg.robot, GridSpec::paper(), cfg.n_train,
                                                      cfg.sigma_on,
                                                      Vector2d(-cfg.u_max, -cfg.u_max),
                                                      Vector2d(cfg.u_max, cfg.u_max),
                                                      cfg.data_seed)
                             : training_set_from_csv(read_text_file(fit_data));
      FitOptions opts;
      opts.optimize = true;
      opts.restarts = fit_restarts;
      opts.max_evals = fit_evals;
      opts.seed = fit_seed;
      KernelParams kp = cfg.have_kernels ? cfg.kernels
                                         : KernelParams::isotropic(2, 8, 30.0, 1.5, 2000.0, 1.5);
      const GpModel model = fit(data, study_prior(perturbed), std::move(kp), cfg.beta,
                                cfg.delta, opts);
      write_text_file(fit_out, gp_model_to_json(model));
      TomlDoc kernels_doc;
      kernel_params_to_toml(model.kernel_params(), kernels_doc);
      std::cout << "# fitted hyperparameters (paste into the config)\n"
                << kernels_doc.emit();
      for (int i = 0; i < model.output_dim(); ++i)
        std::cerr << "log marginal likelihood[" << i << "] = "
                  << model.log_marginal_likelihood(i) << "\n";
      return 0;
    }

    if (sim->parsed()) {
      const Study st = study_skeleton(cfg);
      const GpModel model = load_or_build_model(cfg, sim_model, verbose);
      SimOptions opt;
      opt.mode = parse_mode(sim_mode);
      opt.dt_ctrl = cfg.dt_ctrl;
      opt.substeps = cfg.substeps;
      opt.horizon = sim_T;
      opt.filter_enabled = !sim_no_filter;
      const auto log = run_closed_loop(st.params, model, st.switch_cfg, st.chain, st.gain,
                                       Reference(sim_c), opt);
      write_text_file(sim_out, log.csv());
      std::cout << log.summary_json();
      return 0;
    }

    if (exp->parsed()) {
      const Study st = study_skeleton(cfg);
      const GpModel model = load_or_build_model(cfg, exp_model, verbose);
      ExperimentConfig ec;
      ec.n_trials = exp_trials > 0 ? exp_trials : cfg.n_trials;
      ec.c_lo = cfg.c_lo;
      ec.c_hi = cfg.c_hi;
      ec.horizon = cfg.horizon;
      ec.master_seed = exp_has_seed ? exp_seed : cfg.master_seed;
      ec.out_dir = exp_dir;
      ec.threads = exp_threads > 0 ? exp_threads : cfg.threads;
      const auto summary = run_experiment(ec, st.params, model, st.switch_cfg, st.chain,
                                          st.gain);
      std::cout << summary.to_markdown();
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
