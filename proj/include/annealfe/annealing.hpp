#pragma once

#include "annealfe/model.hpp"

#include <vector>

namespace annealfe {

// Inverse-annealing parameters beta_0 .. beta_K defining the distribution
// sequence P_k propto exp(-beta_k E). beta_0 = 0 (uniform initial
// distribution), beta_K = 1 (target), strictly increasing.
struct Schedule {
  std::vector<double> betas;

  Schedule() = default;
  explicit Schedule(std::vector<double> b) : betas(std::move(b)) {}

  int num_steps() const { return static_cast<int>(betas.size()) - 1; }  // K

  double beta(int k) const;  // bounds-checked

  void validate() const;
};

// betas[k] = k/K.
Schedule linear_schedule(int num_steps);

// E_k(x) = beta_k * E(x); E_0 = 0, E_K = E. Requires 0 <= k <= K.
double step_energy(const BipartiteModel& model, const Schedule& schedule, int k,
                   const SpinState& v, const SpinState& h);

// ln w_k(x) = -E_k(x) + E_{k-1}(x) = -(beta_k - beta_{k-1}) E(x).
// Requires 1 <= k <= K.
double log_w_k(const BipartiteModel& model, const Schedule& schedule, int k,
               const SpinState& v, const SpinState& h);

// ln lambda_k(v) = -E_V(v,k) + E_V(v,k-1). Requires 1 <= k <= K.
double log_lambda_k(const BipartiteModel& model, const Schedule& schedule, int k,
                    const SpinState& v);

// Hidden-layer mirror: ln lambda_k(h) = -E_H(h,k) + E_H(h,k-1).
double log_lambda_k_hidden(const BipartiteModel& model, const Schedule& schedule, int k,
                           const SpinState& h);

}  // namespace annealfe
