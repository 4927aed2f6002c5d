#include "annealfe/estimators.hpp"
#include "annealfe/experiments.hpp"
#include "annealfe/model.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

// Exit codes: 0 success, 2 config error, 3 capacity error,
// 4 certification failure.
constexpr int kExitConfigError = 2;
constexpr int kExitCapacityError = 3;
constexpr int kExitCheckFailure = 4;

struct ExperimentArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

void add_experiment_options(CLI::App* sub, ExperimentArgs& args) {
  sub->add_option("--config", args.config_path, "experiment config (JSON)")->required();
  sub->add_option("--out", args.out_dir, "output directory (overrides config output_path)");
  sub->add_option("--workers", args.workers, "worker threads (0 = hardware)");
  sub->add_option("--seed", args.seed, "seed override");
}

int run_experiment_command(annealfe::ExperimentKind kind, const ExperimentArgs& args) {
  annealfe::ExperimentConfig config = annealfe::load_config(args.config_path, &kind);
  if (args.seed) config.seed = *args.seed;
  if (args.workers) config.workers = *args.workers;
  const bool ok = annealfe::run_experiment(config, args.out_dir);
  if (!ok) {
    std::cerr << "certification checks failed\n";
    return kExitCheckFailure;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Free-energy estimation for bipartite spin models via annealed "
               "importance sampling and its marginalized variant"};
  app.require_subcommand(1);

  // estimate
  std::string model_path, method_name = "auto", kernel_name = "blocked_gibbs", estimate_out;
  int k_steps = 100, n_sequences = 1000, mh_sweeps = 1;
  std::uint64_t estimate_seed = 0;
  bool no_weights = false;
  CLI::App* estimate = app.add_subcommand("estimate", "one-off estimate for a model file");
  estimate->add_option("--model", model_path, "model JSON file")->required();
  estimate->add_option("--method", method_name, "ais | mais | mais_v | mais_h | auto");
  estimate->add_option("--K", k_steps, "annealing steps")->check(CLI::PositiveNumber);
  estimate->add_option("--N", n_sequences, "sample sequences")->check(CLI::PositiveNumber);
  estimate->add_option("--kernel", kernel_name, "blocked_gibbs | mh_augmented");
  estimate->add_option("--mh-sweeps", mh_sweeps, "MH sweeps for mh_augmented");
  estimate->add_option("--seed", estimate_seed, "run seed");
  estimate->add_option("--out", estimate_out, "write the result JSON here instead of stdout");
  estimate->add_flag("--no-weights", no_weights, "omit per-sequence log weights from the output");

  ExperimentArgs certify_args, ape_t_args, table_args, lnr_args, ape_k_args;
  add_experiment_options(app.add_subcommand("certify", "exact theorem certification suite"),
                         certify_args);
  add_experiment_options(
      app.add_subcommand("ape_vs_temperature", "APE sweep over inverse temperatures"),
      ape_t_args);
  add_experiment_options(
      app.add_subcommand("free_energy_table", "true versus trial-averaged free energies"),
      table_args);
  add_experiment_options(
      app.add_subcommand("lnr_distribution", "accuracy-ratio distributions over layer ratios"),
      lnr_args);
  add_experiment_options(app.add_subcommand("ape_vs_k", "APE convergence over annealing steps"),
                         ape_k_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }

  try {
    if (estimate->parsed()) {
      const annealfe::BipartiteModel model = annealfe::load_model(model_path);
      annealfe::RunConfig config;
      config.n_sequences = n_sequences;
      config.method = annealfe::method_from_name(method_name);
      config.kernel.family = annealfe::kernel_family_from_name(kernel_name);
      config.kernel.mh_sweeps = mh_sweeps;
      config.seed = estimate_seed;
      const annealfe::Schedule schedule = annealfe::linear_schedule(k_steps);
      const annealfe::RunResult result = config.method == annealfe::Method::ais
                                             ? annealfe::run_ais(model, schedule, config)
                                             : annealfe::run_mais(model, schedule, config);
      const std::string text = annealfe::run_result_to_json_string(result, !no_weights);
      if (estimate_out.empty()) {
        std::cout << text << '\n';
      } else {
        std::ofstream out(estimate_out, std::ios::binary);
        if (!out) throw std::invalid_argument("cannot open output file: " + estimate_out);
        out << text << '\n';
      }
      return 0;
    }
    if (app.get_subcommand("certify")->parsed()) {
      return run_experiment_command(annealfe::ExperimentKind::theorem_certify, certify_args);
    }
    if (app.get_subcommand("ape_vs_temperature")->parsed()) {
      return run_experiment_command(annealfe::ExperimentKind::ape_vs_temperature, ape_t_args);
    }
    if (app.get_subcommand("free_energy_table")->parsed()) {
      return run_experiment_command(annealfe::ExperimentKind::free_energy_table, table_args);
    }
    if (app.get_subcommand("lnr_distribution")->parsed()) {
      return run_experiment_command(annealfe::ExperimentKind::lnr_distribution, lnr_args);
    }
    if (app.get_subcommand("ape_vs_k")->parsed()) {
      return run_experiment_command(annealfe::ExperimentKind::ape_vs_k, ape_k_args);
    }
  } catch (const annealfe::CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return kExitCapacityError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
