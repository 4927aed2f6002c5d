#include "annealfe/kde.hpp"

#include <cmath>
#include <stdexcept>

namespace annealfe {

std::vector<double> kde_gaussian(const std::vector<double>& samples, double bandwidth,
                                 const std::vector<double>& grid) {
  if (samples.empty()) throw std::invalid_argument("kde_gaussian needs at least one sample");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  const double norm =
      1.0 / (static_cast<double>(samples.size()) * bandwidth * std::sqrt(2.0 * M_PI));
  std::vector<double> densities(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (double s : samples) {
      const double z = (grid[g] - s) / bandwidth;
      sum += std::exp(-0.5 * z * z);
    }
    densities[g] = norm * sum;
  }
  return densities;
}

std::vector<double> kde_grid(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw std::invalid_argument("kde_grid needs n >= 2 and hi > lo");
  std::vector<double> grid(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  }
  return grid;
}

double trapezoid_integral(const std::vector<double>& grid, const std::vector<double>& densities) {
  if (grid.size() != densities.size() || grid.size() < 2) {
    throw std::invalid_argument("trapezoid_integral needs matching grids of size >= 2");
  }
  double integral = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    integral += 0.5 * (densities[i] + densities[i - 1]) * (grid[i] - grid[i - 1]);
  }
  return integral;
}

}  // namespace annealfe
