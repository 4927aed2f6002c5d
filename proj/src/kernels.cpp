#include "annealfe/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace annealfe {

void KernelSpec::validate() const {
  if (family == KernelFamily::mh_augmented && mh_sweeps < 1) {
    throw std::invalid_argument("mh_augmented kernel needs mh_sweeps >= 1");
  }
}

namespace detail {

void hidden_local_fields(const BipartiteModel& model, const Eigen::VectorXd& v,
                         Eigen::VectorXd& theta) {
  theta.noalias() = model.coupling.transpose() * v;
  theta += model.hidden_bias;
}

void visible_local_fields(const BipartiteModel& model, const Eigen::VectorXd& h,
                          Eigen::VectorXd& theta) {
  theta.noalias() = model.coupling * h;
  theta += model.visible_bias;
}

void gibbs_layer_draw(const Eigen::VectorXd& theta, double beta_over_t, Eigen::VectorXd& spins,
                      RngStream& rng) {
  spins.resize(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-2.0 * beta_over_t * theta[i]));
    spins[i] = rng.next_double() < p ? 1.0 : -1.0;
  }
}

void mh_hidden_sweep_inplace(const BipartiteModel& model, double beta, Eigen::VectorXd& h,
                             int n_sweeps, Eigen::VectorXd& visible_fields,
                             Eigen::VectorXd& proposed_fields, RngStream& rng) {
  const double bt = beta / model.temperature;
  proposed_fields.resize(visible_fields.size());
  for (int sweep = 0; sweep < n_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      // dE_H for flipping site j, via the closed-form marginal energy
      double delta = 2.0 * bt * model.hidden_bias[j] * h[j];
      for (Eigen::Index i = 0; i < visible_fields.size(); ++i) {
        proposed_fields[i] = visible_fields[i] - 2.0 * model.coupling(i, j) * h[j];
        delta -= log2cosh(bt * proposed_fields[i]) - log2cosh(bt * visible_fields[i]);
      }
      if (rng.next_double() < std::exp(-delta)) {
        h[j] = -h[j];
        visible_fields.swap(proposed_fields);
      }
    }
  }
}

}  // namespace detail

SpinState sample_uniform_spins(int n, Layer tag, RngStream& rng) {
  Eigen::VectorXd values(n);
  for (int i = 0; i < n; ++i) values[i] = rng.next_spin();
  return SpinState(std::move(values), tag);
}

SpinState sample_hidden_given_visible(const BipartiteModel& model, double beta,
                                      const SpinState& v, RngStream& rng) {
  if (v.size() != model.n_visible()) {
    throw std::invalid_argument("visible state length does not match model");
  }
  Eigen::VectorXd theta, spins;
  detail::hidden_local_fields(model, v.values, theta);
  detail::gibbs_layer_draw(theta, beta / model.temperature, spins, rng);
  return SpinState(std::move(spins), Layer::hidden);
}

SpinState sample_visible_given_hidden(const BipartiteModel& model, double beta,
                                      const SpinState& h, RngStream& rng) {
  if (h.size() != model.n_hidden()) {
    throw std::invalid_argument("hidden state length does not match model");
  }
  Eigen::VectorXd theta, spins;
  detail::visible_local_fields(model, h.values, theta);
  detail::gibbs_layer_draw(theta, beta / model.temperature, spins, rng);
  return SpinState(std::move(spins), Layer::visible);
}

namespace {

void check_kernel_level(const Schedule& schedule, int k) {
  if (k < 1 || k > schedule.num_steps() - 1) {
    throw std::invalid_argument("kernel level " + std::to_string(k) + " outside [1, " +
                                std::to_string(schedule.num_steps() - 1) + "]");
  }
}

}  // namespace

SpinState mais_step(const BipartiteModel& model, const Schedule& schedule, int k,
                    const SpinState& v, RngStream& rng) {
  check_kernel_level(schedule, k);
  const double beta = schedule.beta(k);
  const SpinState h = sample_hidden_given_visible(model, beta, v, rng);
  return sample_visible_given_hidden(model, beta, h, rng);
}

std::pair<SpinState, SpinState> ais_step(const BipartiteModel& model, const Schedule& schedule,
                                         int k, const SpinState& v, const SpinState& h,
                                         RngStream& rng) {
  check_kernel_level(schedule, k);
  if (h.size() != model.n_hidden()) {
    throw std::invalid_argument("hidden state length does not match model");
  }
  const double beta = schedule.beta(k);
  const SpinState h_refresh = sample_hidden_given_visible(model, beta, v, rng);
  SpinState v_next = sample_visible_given_hidden(model, beta, h_refresh, rng);
  SpinState h_next = sample_hidden_given_visible(model, beta, v_next, rng);
  return {std::move(v_next), std::move(h_next)};
}

SpinState mh_hidden_sweep(const BipartiteModel& model, const Schedule& schedule, int k,
                          const SpinState& h, int n_sweeps, RngStream& rng) {
  if (k < 0 || k > schedule.num_steps()) {
    throw std::invalid_argument("schedule index out of range");
  }
  if (n_sweeps < 1) throw std::invalid_argument("n_sweeps must be >= 1");
  if (h.size() != model.n_hidden()) {
    throw std::invalid_argument("hidden state length does not match model");
  }
  Eigen::VectorXd state = h.values;
  Eigen::VectorXd fields, proposed;
  detail::visible_local_fields(model, state, fields);
  detail::mh_hidden_sweep_inplace(model, schedule.beta(k), state, n_sweeps, fields, proposed, rng);
  return SpinState(std::move(state), Layer::hidden);
}

SpinState mais_step_mh(const BipartiteModel& model, const Schedule& schedule, int k,
                       const SpinState& v, const KernelSpec& spec, RngStream& rng) {
  check_kernel_level(schedule, k);
  if (spec.family != KernelFamily::mh_augmented) {
    throw std::invalid_argument("mais_step_mh requires the mh_augmented kernel family");
  }
  spec.validate();
  const double beta = schedule.beta(k);
  const SpinState h_old = sample_hidden_given_visible(model, beta, v, rng);
  const SpinState h_new = mh_hidden_sweep(model, schedule, k, h_old, spec.mh_sweeps, rng);
  return sample_visible_given_hidden(model, beta, h_new, rng);
}

std::pair<SpinState, SpinState> ais_step_mh(const BipartiteModel& model,
                                            const Schedule& schedule, int k, const SpinState& v,
                                            const SpinState& h, const KernelSpec& spec,
                                            RngStream& rng) {
  if (h.size() != model.n_hidden()) {
    throw std::invalid_argument("hidden state length does not match model");
  }
  SpinState v_next = mais_step_mh(model, schedule, k, v, spec, rng);
  SpinState h_next = sample_hidden_given_visible(model, schedule.beta(k), v_next, rng);
  return {std::move(v_next), std::move(h_next)};
}

SpinState visible_transition(const BipartiteModel& model, const Schedule& schedule, int k,
                             const SpinState& v, const KernelSpec& spec, RngStream& rng) {
  if (spec.family == KernelFamily::blocked_gibbs) return mais_step(model, schedule, k, v, rng);
  return mais_step_mh(model, schedule, k, v, spec, rng);
}

std::pair<SpinState, SpinState> joint_transition(const BipartiteModel& model,
                                                 const Schedule& schedule, int k,
                                                 const SpinState& v, const SpinState& h,
                                                 const KernelSpec& spec, RngStream& rng) {
  if (spec.family == KernelFamily::blocked_gibbs) {
    return ais_step(model, schedule, k, v, h, rng);
  }
  return ais_step_mh(model, schedule, k, v, h, spec, rng);
}

namespace {

void check_state_cap(const char* what, int n_spins, int max_states) {
  if (n_spins >= 63 || (std::int64_t{1} << n_spins) > max_states) {
    throw CapacityError(std::string(what) + ": 2^" + std::to_string(n_spins) +
                        " states exceed the cap of " + std::to_string(max_states));
  }
}

// Probability of drawing exactly the spin pattern `state` when each site i is
// +1 independently with probability p[i].
double pattern_prob(const Eigen::VectorXd& p, std::uint64_t state) {
  double prob = 1.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    prob *= (state >> i) & 1 ? p[i] : 1.0 - p[i];
  }
  return prob;
}

}  // namespace

Eigen::MatrixXd conditional_matrix_h_given_v(const BipartiteModel& model, double beta,
                                             int max_states) {
  check_state_cap("conditional_matrix_h_given_v (visible)", model.n_visible(), max_states);
  check_state_cap("conditional_matrix_h_given_v (hidden)", model.n_hidden(), max_states);
  const std::uint64_t nv_states = std::uint64_t{1} << model.n_visible();
  const std::uint64_t nh_states = std::uint64_t{1} << model.n_hidden();
  Eigen::MatrixXd mat(nv_states, nh_states);
  for (std::uint64_t vi = 0; vi < nv_states; ++vi) {
    const Eigen::VectorXd p = conditional_hidden_probs(
        model, beta, spin_state_from_index(vi, model.n_visible(), Layer::visible));
    for (std::uint64_t hi = 0; hi < nh_states; ++hi) {
      mat(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hi)) = pattern_prob(p, hi);
    }
  }
  return mat;
}

Eigen::MatrixXd conditional_matrix_v_given_h(const BipartiteModel& model, double beta,
                                             int max_states) {
  check_state_cap("conditional_matrix_v_given_h (visible)", model.n_visible(), max_states);
  check_state_cap("conditional_matrix_v_given_h (hidden)", model.n_hidden(), max_states);
  const std::uint64_t nv_states = std::uint64_t{1} << model.n_visible();
  const std::uint64_t nh_states = std::uint64_t{1} << model.n_hidden();
  Eigen::MatrixXd mat(nh_states, nv_states);
  for (std::uint64_t hi = 0; hi < nh_states; ++hi) {
    const Eigen::VectorXd p = conditional_visible_probs(
        model, beta, spin_state_from_index(hi, model.n_hidden(), Layer::hidden));
    for (std::uint64_t vi = 0; vi < nv_states; ++vi) {
      mat(static_cast<Eigen::Index>(hi), static_cast<Eigen::Index>(vi)) = pattern_prob(p, vi);
    }
  }
  return mat;
}

Eigen::MatrixXd exact_mh_sweep_matrix(const BipartiteModel& model, const Schedule& schedule,
                                      int k, int n_sweeps, int max_states) {
  if (n_sweeps < 1) throw std::invalid_argument("n_sweeps must be >= 1");
  check_state_cap("exact_mh_sweep_matrix", model.n_hidden(), max_states);
  const int nh = model.n_hidden();
  const std::uint64_t n_states = std::uint64_t{1} << nh;
  const double beta = schedule.beta(k);

  Eigen::VectorXd energies(static_cast<Eigen::Index>(n_states));
  for (std::uint64_t hi = 0; hi < n_states; ++hi) {
    energies[static_cast<Eigen::Index>(hi)] =
        marginal_energy_h(model, beta, spin_state_from_index(hi, nh, Layer::hidden));
  }

  Eigen::MatrixXd sweep = Eigen::MatrixXd::Identity(n_states, n_states);
  // One pass: compose the per-site flip kernels in ascending site order.
  // Site kernel M_j moves h -> h^flip(j) with probability min(1, exp(-dE)).
  Eigen::VectorXd col_a(n_states), col_b(n_states);
  for (int pass = 0; pass < n_sweeps; ++pass) {
    for (int j = 0; j < nh; ++j) {
      const std::uint64_t bit = std::uint64_t{1} << j;
      for (std::uint64_t a = 0; a < n_states; ++a) {
        if (a & bit) continue;  // handle each pair once
        const std::uint64_t b = a | bit;
        const double acc_ab = std::min(
            1.0, std::exp(-(energies[static_cast<Eigen::Index>(b)] -
                            energies[static_cast<Eigen::Index>(a)])));
        const double acc_ba = std::min(
            1.0, std::exp(-(energies[static_cast<Eigen::Index>(a)] -
                            energies[static_cast<Eigen::Index>(b)])));
        col_a = sweep.col(static_cast<Eigen::Index>(a));
        col_b = sweep.col(static_cast<Eigen::Index>(b));
        sweep.col(static_cast<Eigen::Index>(a)) = col_a * (1.0 - acc_ab) + col_b * acc_ba;
        sweep.col(static_cast<Eigen::Index>(b)) = col_b * (1.0 - acc_ba) + col_a * acc_ab;
      }
    }
  }
  return sweep;
}

Eigen::MatrixXd exact_kernel_matrix(const BipartiteModel& model, const Schedule& schedule, int k,
                                    const KernelSpec& spec, Layer space, int max_states) {
  check_kernel_level(schedule, k);
  spec.validate();
  if (space == Layer::hidden) {
    throw std::invalid_argument("exact_kernel_matrix supports visible or joint spaces");
  }
  const int space_spins = space == Layer::visible ? model.n_visible() : model.n_total();
  check_state_cap("exact_kernel_matrix", space_spins, max_states);
  // The analytic summation over the marginalized layer enumerates it too.
  check_state_cap("exact_kernel_matrix (hidden layer)", model.n_hidden(), max_states);

  const double beta = schedule.beta(k);
  const Eigen::MatrixXd h_given_v = conditional_matrix_h_given_v(model, beta, max_states);
  const Eigen::MatrixXd v_given_h = conditional_matrix_v_given_h(model, beta, max_states);

  Eigen::MatrixXd visible_kernel;
  if (spec.family == KernelFamily::blocked_gibbs) {
    visible_kernel = h_given_v * v_given_h;
  } else {
    visible_kernel =
        h_given_v * exact_mh_sweep_matrix(model, schedule, k, spec.mh_sweeps, max_states) *
        v_given_h;
  }
  if (space == Layer::visible) return visible_kernel;

  const std::uint64_t nv_states = std::uint64_t{1} << model.n_visible();
  const std::uint64_t nh_states = std::uint64_t{1} << model.n_hidden();
  const std::uint64_t n_joint = nv_states * nh_states;
  Eigen::MatrixXd joint(n_joint, n_joint);
  for (std::uint64_t vi = 0; vi < nv_states; ++vi) {
    for (std::uint64_t hi = 0; hi < nh_states; ++hi) {
      const std::uint64_t row = vi | (hi << model.n_visible());
      for (std::uint64_t vj = 0; vj < nv_states; ++vj) {
        const double tau = visible_kernel(static_cast<Eigen::Index>(vi),
                                          static_cast<Eigen::Index>(vj));
        for (std::uint64_t hj = 0; hj < nh_states; ++hj) {
          const std::uint64_t col = vj | (hj << model.n_visible());
          joint(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
              tau * h_given_v(static_cast<Eigen::Index>(vj), static_cast<Eigen::Index>(hj));
        }
      }
    }
  }
  return joint;
}

}  // namespace annealfe
