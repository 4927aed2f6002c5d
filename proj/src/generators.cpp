#include "annealfe/generators.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace annealfe {

namespace {

void check_sizes(int nv, int nh) {
  if (nv < 1 || nh < 1) throw std::invalid_argument("layer sizes must be >= 1");
}

void check_inv_temp(double inv_temp) {
  if (!(inv_temp > 0.0)) throw std::invalid_argument("inverse temperature must be positive");
}

void fill_biases(BipartiteModel& model, RngStream& rng) {
  for (Eigen::Index i = 0; i < model.visible_bias.size(); ++i) {
    model.visible_bias[i] = rng.next_uniform(-0.001, 0.001);
  }
  for (Eigen::Index j = 0; j < model.hidden_bias.size(); ++j) {
    model.hidden_bias[j] = rng.next_uniform(-0.001, 0.001);
  }
}

}  // namespace

BipartiteModel gen_gaussian_rbm(int nv, int nh, double inv_temp, RngStream& rng) {
  check_sizes(nv, nh);
  check_inv_temp(inv_temp);
  BipartiteModel model;
  model.visible_bias.resize(nv);
  model.hidden_bias.resize(nh);
  model.coupling.resize(nv, nh);
  model.temperature = 1.0 / inv_temp;
  fill_biases(model, rng);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(nv + nh));
  for (Eigen::Index i = 0; i < nv; ++i) {
    for (Eigen::Index j = 0; j < nh; ++j) {
      model.coupling(i, j) = sigma * rng.next_normal();
    }
  }
  return model;
}

BipartiteModel gen_hopfield_rbm(int nv, int nh, double inv_temp, RngStream& rng) {
  check_sizes(nv, nh);
  check_inv_temp(inv_temp);
  BipartiteModel model;
  model.visible_bias.resize(nv);
  model.hidden_bias.resize(nh);
  model.coupling.resize(nv, nh);
  model.temperature = 1.0 / inv_temp;
  fill_biases(model, rng);
  const double scale = 1.0 / std::sqrt(static_cast<double>(nv));
  for (Eigen::Index i = 0; i < nv; ++i) {
    for (Eigen::Index j = 0; j < nh; ++j) {
      model.coupling(i, j) = scale * rng.next_spin();
    }
  }
  return model;
}

BipartiteModel gen_grid_ising(int height, int width, double inv_temp, RngStream& rng) {
  if (height < 1 || width < 1 || height * width < 2) {
    throw std::invalid_argument("grid must have at least 2 sites");
  }
  check_inv_temp(inv_temp);
  const std::size_t n_sites = static_cast<std::size_t>(height) * width;
  const std::size_t n_edges =
      static_cast<std::size_t>(height) * (width - 1) + static_cast<std::size_t>(height - 1) * width;
  const double sigma = 1.0 / std::sqrt(static_cast<double>(n_sites));
  std::vector<double> couplings(n_edges);
  std::vector<double> fields(n_sites);
  for (auto& j : couplings) j = sigma * rng.next_normal();
  for (auto& f : fields) f = rng.next_uniform(-0.001, 0.001);
  return grid_ising_as_bipartite(height, width, couplings, fields, 1.0 / inv_temp);
}

}  // namespace annealfe
