#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace annealfe {

// Thrown when an exact enumeration would exceed the configured state cap.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Layer { visible, hidden, joint };

// Configuration of one layer (or both layers) of a bipartite model.
// Entries are exactly -1.0 or +1.0.
struct SpinState {
  Eigen::VectorXd values;
  Layer layer_tag = Layer::visible;

  SpinState() = default;
  SpinState(Eigen::VectorXd v, Layer tag) : values(std::move(v)), layer_tag(tag) {}

  Eigen::Index size() const { return values.size(); }

  // Throws std::invalid_argument if any entry is not exactly +-1.
  void validate() const;
};

// Bipartite spin model at temperature T:
//   E(v,h) = -(1/T) * (b.v + c.h + v^T W h),   v_i, h_j in {-1,+1}.
struct BipartiteModel {
  Eigen::VectorXd visible_bias;  // b, length |V|
  Eigen::VectorXd hidden_bias;   // c, length |H|
  Eigen::MatrixXd coupling;      // w, |V| x |H|
  double temperature = 1.0;      // T > 0

  // Optional structural zero pattern (set by the grid conversion); coupling
  // must be zero wherever the mask is false.
  std::optional<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>> sparsity_mask;

  int n_visible() const { return static_cast<int>(visible_bias.size()); }
  int n_hidden() const { return static_cast<int>(hidden_bias.size()); }
  int n_total() const { return n_visible() + n_hidden(); }

  // Throws std::invalid_argument on dimension mismatch, T <= 0, or a coupling
  // that violates the sparsity mask.
  void validate() const;
};

// Swaps the two layers: b <-> c, W -> W^T.
BipartiteModel transpose(const BipartiteModel& model);

// ln(2 cosh z), overflow-safe.
inline double log2cosh(double z) {
  double a = std::abs(z);
  return a + std::log1p(std::exp(-2.0 * a));
}

// E(v,h) as above. Throws std::invalid_argument on dimension mismatch.
double energy(const BipartiteModel& model, const SpinState& v, const SpinState& h);

// Energy of the visible marginal of P_k with the hidden layer summed out:
//   E_V(v,k) = -(beta/T) b.v - sum_j ln 2cosh((beta/T)(c_j + sum_i w_ij v_i)).
double marginal_energy_v(const BipartiteModel& model, double beta, const SpinState& v);

// Mirror of marginal_energy_v with the layers exchanged.
double marginal_energy_h(const BipartiteModel& model, double beta, const SpinState& h);

// P(h_j = +1 | v) for each hidden unit under the level-beta distribution.
Eigen::VectorXd conditional_hidden_probs(const BipartiteModel& model, double beta,
                                         const SpinState& v);

// P(v_i = +1 | h), layer mirror of the above.
Eigen::VectorXd conditional_visible_probs(const BipartiteModel& model, double beta,
                                          const SpinState& h);

inline constexpr int kDefaultEnumerationCap = 24;

// ln Z at inverse-annealing parameter beta, computed exactly by enumerating
// the smaller layer (Gray-code order) with the other layer summed out in
// closed form, accumulated with a streaming log-sum-exp.
// Throws CapacityError when min(|V|,|H|) exceeds max_enumerated_spins.
double exact_log_z(const BipartiteModel& model, double beta,
                   int max_enumerated_spins = kDefaultEnumerationCap);

// Exact distribution P_beta over all states of the requested space
// (visible / hidden marginal, or the joint), indexed by spin_state_from_index
// order. Intended for small instances; same cap semantics as exact_log_z but
// applied to the enumerated space itself.
Eigen::VectorXd exact_distribution(const BipartiteModel& model, double beta,
                                   Layer space, int max_enumerated_spins = 12);

// Checkerboard decomposition of a height x width nearest-neighbour Ising grid
// into a bipartite model. Sites are indexed row-major; even-parity sites
// ((r+c) % 2 == 0) become the visible layer, odd-parity sites the hidden
// layer, preserving row-major order within each layer. Edge couplings are
// listed per site in row-major order: the edge to the right neighbour first,
// then the edge below (open boundaries). The resulting model's energy equals
//   -(1/T) (sum_edges J_e s_a s_b + sum_sites f_s s_s)
// on corresponding configurations.
BipartiteModel grid_ising_as_bipartite(int height, int width,
                                       const std::vector<double>& couplings,
                                       const std::vector<double>& fields,
                                       double temperature);

// State <-> index maps used by every exhaustive enumeration in the project:
// bit i of the index carries unit i, a set bit meaning spin +1.
SpinState spin_state_from_index(std::uint64_t index, int n, Layer tag);
std::uint64_t index_from_spin_state(const SpinState& state);

// JSON model format:
//   {"visible_bias": [...], "hidden_bias": [...],
//    "coupling": [[...], ...],   // one row per visible unit
//    "temperature": t,
//    "sparsity_mask": [[...], ...]}  // optional, booleans
BipartiteModel model_from_json_string(const std::string& text);
std::string model_to_json_string(const BipartiteModel& model);
BipartiteModel load_model(const std::string& path);
void save_model(const BipartiteModel& model, const std::string& path);

}  // namespace annealfe
