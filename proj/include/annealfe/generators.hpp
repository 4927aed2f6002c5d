#pragma once

#include "annealfe/model.hpp"
#include "annealfe/rng.hpp"

namespace annealfe {

// Random RBM instance with Gaussian couplings: w_ij ~ N(0, 1/(nv+nh)),
// biases uniform on [-0.001, 0.001], temperature = 1/inv_temp.
BipartiteModel gen_gaussian_rbm(int nv, int nh, double inv_temp, RngStream& rng);

// Hopfield-type couplings w_ij = xi_i^(j) / sqrt(nv) with xi uniform on
// {-1,+1}; biases uniform on [-0.001, 0.001].
BipartiteModel gen_hopfield_rbm(int nv, int nh, double inv_temp, RngStream& rng);

// Nearest-neighbour grid instance (checkerboard-decomposed): edge couplings
// ~ N(0, 1/n_sites), site fields uniform on [-0.001, 0.001].
BipartiteModel gen_grid_ising(int height, int width, double inv_temp, RngStream& rng);

}  // namespace annealfe
