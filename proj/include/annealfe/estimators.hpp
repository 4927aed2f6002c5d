#pragma once

#include "annealfe/annealing.hpp"
#include "annealfe/kernels.hpp"
#include "annealfe/model.hpp"

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace annealfe {

enum class Method { ais, mais_v, mais_h, auto_select };

std::string method_name(Method method);
Method method_from_name(const std::string& name);

struct RunConfig {
  int n_sequences = 1;  // N
  Method method = Method::ais;
  KernelSpec kernel;
  std::uint64_t seed = 0;

  void validate() const;
};

// Outcome of one annealed-importance run of N independent sequences.
struct RunResult {
  std::vector<double> log_weights;       // ln W(X_mu) or ln Lambda(V_mu)
  double log_z0 = 0.0;                   // ln Z_0 = n ln 2
  double log_z_estimate = 0.0;           // log_z0 + logmeanexp(log_weights)
  double free_energy_estimate = 0.0;     // -log_z_estimate
  double per_variable_free_energy = 0.0; // free_energy_estimate / n
  double effective_sample_size = 0.0;    // importance-sampling ESS diagnostic
  Method method = Method::ais;
  std::chrono::duration<double> elapsed{0.0};
};

// ln((1/N) sum exp(values)), max-shifted; exact for constant input.
// Throws std::invalid_argument on an empty vector or any NaN entry.
double logmeanexp(const std::vector<double>& values);

// AIS estimate of ln Z and F. Sequence mu uses RngStream(seed, mu); weights
// are accumulated at each state as it is produced, before the next
// transition is applied. Requires config.method == ais.
RunResult run_ais(const BipartiteModel& model, const Schedule& schedule, const RunConfig& config);

// Marginalized variant. mais_v anneals the visible marginal (hidden layer
// summed out), mais_h the reverse; auto_select marginalizes the larger layer.
RunResult run_mais(const BipartiteModel& model, const Schedule& schedule, const RunConfig& config);

// 100 * |f_true - f_app| / |f_true|. Throws std::invalid_argument when
// f_true is 0.
double ape(double f_true, double f_app);

// r = |f_true - f_ais| / |f_true - f_mais|. A zero denominator yields the
// +infinity sentinel (callers record such instances separately).
double accuracy_ratio(double f_true, double f_ais, double f_mais);

// JSON serialization of a run (all fields; weights optional).
std::string run_result_to_json_string(const RunResult& result, bool include_weights = true);

}  // namespace annealfe
