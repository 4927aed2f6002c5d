#pragma once

#include <vector>

namespace annealfe {

// Gaussian kernel density estimate on the given grid:
//   density(g) = 1/(M h sqrt(2 pi)) sum_m exp(-(g - s_m)^2 / (2 h^2)).
// Throws std::invalid_argument on empty samples or a non-positive bandwidth.
std::vector<double> kde_gaussian(const std::vector<double>& samples, double bandwidth,
                                 const std::vector<double>& grid);

// Evenly spaced grid of n points on [lo, hi].
std::vector<double> kde_grid(double lo, double hi, int n);

// Trapezoidal integral of densities over the grid (normalization check).
double trapezoid_integral(const std::vector<double>& grid, const std::vector<double>& densities);

}  // namespace annealfe
