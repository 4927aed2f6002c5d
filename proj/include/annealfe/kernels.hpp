#pragma once

#include "annealfe/annealing.hpp"
#include "annealfe/model.hpp"
#include "annealfe/rng.hpp"

#include <utility>

namespace annealfe {

enum class KernelFamily { blocked_gibbs, mh_augmented };

// Which transition kernel drives the annealing chain. blocked_gibbs is the
// plain layer-wise scheme; mh_augmented interposes mh_sweeps single-site
// Metropolis-Hastings passes on the hidden marginal between the two Gibbs
// half-steps.
struct KernelSpec {
  KernelFamily family = KernelFamily::blocked_gibbs;
  int mh_sweeps = 1;

  void validate() const;
};

// Uniform state of n spins for the given layer.
SpinState sample_uniform_spins(int n, Layer tag, RngStream& rng);

// One blocked-Gibbs half-step each way. All sites of the sampled layer are
// drawn simultaneously from their conditionally independent distributions.
SpinState sample_hidden_given_visible(const BipartiteModel& model, double beta,
                                      const SpinState& v, RngStream& rng);
SpinState sample_visible_given_hidden(const BipartiteModel& model, double beta,
                                      const SpinState& h, RngStream& rng);

// Collapsed-Gibbs transition on the visible marginal of P_k:
// h ~ P_k(h|v), then v' ~ P_k(v|h). One-sample realization of
// tau_k(v'|v) = sum_h P_k(v'|h) P_k(h|v). Requires 1 <= k <= K-1.
SpinState mais_step(const BipartiteModel& model, const Schedule& schedule, int k,
                    const SpinState& v, RngStream& rng);

// Joint transition: refresh h ~ P_k(h|v), v' ~ P_k(v|h), h' ~ P_k(h'|v').
// Realizes T_k(x'|x) = P_k(h'|v') sum_h P_k(v'|h) P_k(h|v), which factorizes
// through the visible collapsed kernel by construction. The incoming hidden
// state does not influence the transition. Requires 1 <= k <= K-1.
std::pair<SpinState, SpinState> ais_step(const BipartiteModel& model, const Schedule& schedule,
                                         int k, const SpinState& v, const SpinState& h,
                                         RngStream& rng);

// n_sweeps sequential single-site MH passes over the hidden layer targeting
// P_k(h) propto exp(-E_H(h,k)). Sites are proposed in ascending index order;
// a flip is accepted with probability min(1, exp(-dE_H)).
SpinState mh_hidden_sweep(const BipartiteModel& model, const Schedule& schedule, int k,
                          const SpinState& h, int n_sweeps, RngStream& rng);

// MH-augmented visible transition: h_old ~ P_k(h|v), h_new by mh_hidden_sweep,
// v' ~ P_k(v|h_new). Leaves P_k(v) invariant.
SpinState mais_step_mh(const BipartiteModel& model, const Schedule& schedule, int k,
                       const SpinState& v, const KernelSpec& spec, RngStream& rng);

// Joint counterpart of mais_step_mh: appends h' ~ P_k(h'|v').
std::pair<SpinState, SpinState> ais_step_mh(const BipartiteModel& model,
                                            const Schedule& schedule, int k, const SpinState& v,
                                            const SpinState& h, const KernelSpec& spec,
                                            RngStream& rng);

// Kernel dispatch on the configured family.
SpinState visible_transition(const BipartiteModel& model, const Schedule& schedule, int k,
                             const SpinState& v, const KernelSpec& spec, RngStream& rng);
std::pair<SpinState, SpinState> joint_transition(const BipartiteModel& model,
                                                 const Schedule& schedule, int k,
                                                 const SpinState& v, const SpinState& h,
                                                 const KernelSpec& spec, RngStream& rng);

inline constexpr int kDefaultKernelMatrixCap = 4096;

// --- exact (sampling-free) kernel matrices for small instances -------------
//
// All matrices are row-stochastic over states indexed by
// spin_state_from_index; joint states use index v + (h << |V|).

// P_k(h|v) as a 2^|V| x 2^|H| matrix (row v, column h), and its mirror.
Eigen::MatrixXd conditional_matrix_h_given_v(const BipartiteModel& model, double beta,
                                             int max_states = kDefaultKernelMatrixCap);
Eigen::MatrixXd conditional_matrix_v_given_h(const BipartiteModel& model, double beta,
                                             int max_states = kDefaultKernelMatrixCap);

// Exact matrix of one n_sweeps-pass MH scan over the hidden layer.
Eigen::MatrixXd exact_mh_sweep_matrix(const BipartiteModel& model, const Schedule& schedule,
                                      int k, int n_sweeps,
                                      int max_states = kDefaultKernelMatrixCap);

// Exact transition matrix of the configured kernel on the visible or joint
// space, built by analytic summation. Throws CapacityError when the state
// space (or an internally enumerated layer) exceeds max_states.
Eigen::MatrixXd exact_kernel_matrix(const BipartiteModel& model, const Schedule& schedule, int k,
                                    const KernelSpec& spec, Layer space,
                                    int max_states = kDefaultKernelMatrixCap);

namespace detail {

// In-place building blocks shared by the sampling kernels and the estimator
// run loops. theta buffers hold local fields; spin vectors hold +-1 entries.

// theta = c + W^T v  /  theta = b + W h
void hidden_local_fields(const BipartiteModel& model, const Eigen::VectorXd& v,
                         Eigen::VectorXd& theta);
void visible_local_fields(const BipartiteModel& model, const Eigen::VectorXd& h,
                          Eigen::VectorXd& theta);

// spins[i] = +1 with probability sigma(2 * beta_over_t * theta[i]).
void gibbs_layer_draw(const Eigen::VectorXd& theta, double beta_over_t, Eigen::VectorXd& spins,
                      RngStream& rng);

// Sequential-scan MH on the hidden layer; h and the visible-field buffer are
// updated in place. visible_fields must hold b + W h on entry.
void mh_hidden_sweep_inplace(const BipartiteModel& model, double beta, Eigen::VectorXd& h,
                             int n_sweeps, Eigen::VectorXd& visible_fields,
                             Eigen::VectorXd& proposed_fields, RngStream& rng);

}  // namespace detail

}  // namespace annealfe
