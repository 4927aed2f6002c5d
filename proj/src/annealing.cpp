#include "annealfe/annealing.hpp"

#include <stdexcept>
#include <string>

namespace annealfe {

double Schedule::beta(int k) const {
  if (k < 0 || k > num_steps()) {
    throw std::invalid_argument("schedule index " + std::to_string(k) + " outside [0, " +
                                std::to_string(num_steps()) + "]");
  }
  return betas[static_cast<std::size_t>(k)];
}

void Schedule::validate() const {
  if (betas.size() < 2) {
    throw std::invalid_argument("schedule needs at least beta_0 and beta_1");
  }
  if (betas.front() != 0.0) throw std::invalid_argument("beta_0 must be 0");
  if (betas.back() != 1.0) throw std::invalid_argument("beta_K must be 1");
  for (std::size_t k = 1; k < betas.size(); ++k) {
    if (!(betas[k] > betas[k - 1])) {
      throw std::invalid_argument("betas must be strictly increasing");
    }
  }
}

Schedule linear_schedule(int num_steps) {
  if (num_steps < 1) throw std::invalid_argument("schedule needs at least one step");
  std::vector<double> betas(static_cast<std::size_t>(num_steps) + 1);
  for (int k = 0; k <= num_steps; ++k) {
    betas[static_cast<std::size_t>(k)] = static_cast<double>(k) / num_steps;
  }
  return Schedule(std::move(betas));
}

double step_energy(const BipartiteModel& model, const Schedule& schedule, int k,
                   const SpinState& v, const SpinState& h) {
  return schedule.beta(k) * energy(model, v, h);
}

namespace {

void check_transition_index(const Schedule& schedule, int k) {
  if (k < 1 || k > schedule.num_steps()) {
    throw std::invalid_argument("weight index " + std::to_string(k) + " outside [1, " +
                                std::to_string(schedule.num_steps()) + "]");
  }
}

}  // namespace

double log_w_k(const BipartiteModel& model, const Schedule& schedule, int k,
               const SpinState& v, const SpinState& h) {
  check_transition_index(schedule, k);
  return -(schedule.beta(k) - schedule.beta(k - 1)) * energy(model, v, h);
}

double log_lambda_k(const BipartiteModel& model, const Schedule& schedule, int k,
                    const SpinState& v) {
  check_transition_index(schedule, k);
  return -marginal_energy_v(model, schedule.beta(k), v) +
         marginal_energy_v(model, schedule.beta(k - 1), v);
}

double log_lambda_k_hidden(const BipartiteModel& model, const Schedule& schedule, int k,
                           const SpinState& h) {
  check_transition_index(schedule, k);
  return -marginal_energy_h(model, schedule.beta(k), h) +
         marginal_energy_h(model, schedule.beta(k - 1), h);
}

}  // namespace annealfe
