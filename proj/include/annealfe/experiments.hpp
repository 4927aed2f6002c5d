#pragma once

#include "annealfe/estimators.hpp"
#include "annealfe/generators.hpp"
#include "annealfe/kde.hpp"
#include "annealfe/kernels.hpp"
#include "annealfe/model.hpp"
#include "annealfe/oracle.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace annealfe {

enum class ExperimentKind {
  ape_vs_temperature,
  free_energy_table,
  lnr_distribution,
  ape_vs_k,
  theorem_certify,
};

enum class ModelFamily { gaussian, hopfield, grid };

std::string experiment_name(ExperimentKind kind);
ExperimentKind experiment_from_name(const std::string& name);
std::string family_name(ModelFamily family);
ModelFamily family_from_name(const std::string& name);
std::string kernel_family_name(KernelFamily family);
KernelFamily kernel_family_from_name(const std::string& name);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::ape_vs_temperature;
  ModelFamily model_family = ModelFamily::gaussian;
  int size_a = 20;  // |V| (or grid height)
  int size_b = 40;  // |H| (or grid width)
  std::vector<double> inv_temperatures = {0.2, 0.4, 0.8, 1.0, 2.0, 4.0, 8.0};
  std::vector<int> k_values = {10, 30, 60};
  int n_sequences = 1000;
  int n_instances = 200;
  int n_trials = 10;
  std::vector<double> alpha_values = {0.5, 1.0, 2.0, 4.0};
  KernelSpec kernel;
  std::uint64_t seed = 0;
  std::string output_path;

  // Optional knobs beyond the core schema.
  std::vector<KernelFamily> kernel_families = {KernelFamily::blocked_gibbs,
                                               KernelFamily::mh_augmented};
  double kde_bandwidth = 0.25;
  double kde_grid_min = -3.0;
  double kde_grid_max = 3.0;
  int kde_grid_points = 241;
  int n_identity_instances = 20;
  int enumeration_cap = kDefaultEnumerationCap;
  int workers = 0;  // 0 = hardware concurrency

  void validate() const;
};

// Per-experiment defaults (sizes, grids, trial counts).
ExperimentConfig default_config(ExperimentKind kind);

// Strict parse: unknown keys are rejected; missing keys fall back to the
// per-experiment defaults. `kind_override`, when set, fixes the experiment
// regardless of the config's own field.
ExperimentConfig config_from_json_string(const std::string& text,
                                         const ExperimentKind* kind_override = nullptr);
ExperimentConfig load_config(const std::string& path,
                             const ExperimentKind* kind_override = nullptr);

// Runs instances 0..count-1 on the requested number of workers. Results must
// be written into per-index slots; the caller owns ordering.
void parallel_for_indexed(int count, int workers, const std::function<void(int)>& fn);

// Plain CSV table; all values preformatted. Writing is byte-deterministic.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
void write_csv(const CsvTable& table, const std::string& path);
std::string format_double(double value);  // shortest round-trip form

// One-sided sign test: P(X >= x) for X ~ Binomial(n, 1/2).
double binomial_sign_test_p(int n, int x);

// --- APE versus inverse temperature --------------------------------------

struct ApeSweepCell {
  double inv_temp = 0.0;
  int k_steps = 0;
  int n_instances = 0;
  double mean_ape_ais = 0.0;
  double mean_ape_mais = 0.0;
  int n_mais_better = 0;  // strict wins, ties dropped
  int n_compared = 0;
  double sign_test_p = 1.0;
};

struct ApeSweepResult {
  CsvTable rows;
  CsvTable summary;
  std::vector<ApeSweepCell> cells;
};

ApeSweepResult run_ape_sweep(const ExperimentConfig& config);

// --- free-energy table -----------------------------------------------------

struct FreeEnergyCell {
  double inv_temp = 0.0;
  int k_steps = 0;
  double mean_f_true = 0.0;
  double mean_f_ais = 0.0;
  double mean_f_mais = 0.0;
  int n_instances = 0;
};

struct FreeEnergyTableResult {
  CsvTable rows;
  CsvTable summary;
  std::vector<FreeEnergyCell> cells;
};

FreeEnergyTableResult run_free_energy_table(const ExperimentConfig& config);

// --- ln r distribution -------------------------------------------------------

struct LnrAlphaSummary {
  double alpha = 0.0;
  int n_finite = 0;
  int n_sentinel = 0;  // infinite-ratio instances, excluded from the KDE
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double kde_integral = 0.0;
  std::vector<double> ln_r_values;  // finite values, instance order
};

struct LnrDistributionResult {
  CsvTable rows;
  CsvTable kde;
  CsvTable summary;
  std::vector<LnrAlphaSummary> alphas;
};

LnrDistributionResult run_lnr_distribution(const ExperimentConfig& config);

// --- APE versus K ------------------------------------------------------------

struct ApeVsKCell {
  double inv_temp = 0.0;
  KernelFamily kernel_family = KernelFamily::blocked_gibbs;
  std::string method;  // "ais" or "mais"
  int k_steps = 0;
  double mean_ape = 0.0;
  int n_instances = 0;
};

struct ApeVsKResult {
  CsvTable rows;
  CsvTable summary;
  std::vector<ApeVsKCell> cells;
};

ApeVsKResult run_ape_vs_k(const ExperimentConfig& config);

// --- theorem certification ---------------------------------------------------

struct MomentCheck {
  int instance_index = 0;
  int k_steps = 0;
  double exact_z = 0.0;
  double mean_z_ais = 0.0;
  double mean_z_mais = 0.0;
  double variance_ais = 0.0;
  double variance_mais = 0.0;
  double f_exact = 0.0;
  double f_expectation_ais = 0.0;
  double f_expectation_mais = 0.0;
  bool unbiased_pass = false;
  bool variance_pass = false;
  bool bias_pass = false;
};

struct CertifyResult {
  std::vector<MomentCheck> moment_checks;
  std::vector<IdentityReport> factorization_reports;
  std::vector<IdentityReport> rao_blackwell_reports;
  bool unbiasedness_pass = false;
  bool variance_dominance_pass = false;
  bool bias_ordering_pass = false;
  bool identities_pass = false;
  bool all_pass = false;
};

// Exact certification of the variance/bias theorems and the factorization
// identities on seeded random instances. Tolerances: 1e-8 relative on the
// estimator mean, 1e-12 (scale-aware) on the variance gap, 1e-10 on the
// free-energy ordering and on the identity deviations.
CertifyResult run_theorem_certify(const ExperimentConfig& config);

std::string certify_result_to_json_string(const CertifyResult& result);

// Dispatches on config.experiment, writing the experiment's CSV/JSON outputs
// under out_dir (config.output_path if out_dir is empty; no files when both
// are empty). Returns false when a certification run fails.
bool run_experiment(const ExperimentConfig& config, const std::string& out_dir);

}  // namespace annealfe
