#include "annealfe/generators.hpp"
#include "annealfe/kernels.hpp"
#include "annealfe/rng.hpp"

#include "doctest.h"

#include <cmath>
#include <vector>

using namespace annealfe;

namespace {

BipartiteModel zero_model(int nv, int nh) {
  BipartiteModel m;
  m.visible_bias = Eigen::VectorXd::Zero(nv);
  m.hidden_bias = Eigen::VectorXd::Zero(nh);
  m.coupling = Eigen::MatrixXd::Zero(nv, nh);
  m.temperature = 1.0;
  return m;
}

BipartiteModel random_model(int nv, int nh, std::uint64_t seed, double inv_temp = 2.0) {
  RngStream rng(seed, 0);
  return gen_gaussian_rbm(nv, nh, inv_temp, rng);
}

// chi-square 0.999 quantiles (computed offline) for the dofs used below.
double chi2_threshold_999(int dof) {
  switch (dof) {
    case 3: return 16.26623619623813;
    case 15: return 37.69729821835383;
    default: REQUIRE(false); return 0.0;
  }
}

double chi_square_statistic(const std::vector<std::uint64_t>& counts,
                            const Eigen::VectorXd& probs, double n_draws) {
  double stat = 0.0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    const double expected = probs[static_cast<Eigen::Index>(s)] * n_draws;
    const double diff = static_cast<double>(counts[s]) - expected;
    stat += diff * diff / expected;
  }
  return stat;
}

// Inverse-CDF draw from an enumerated distribution.
std::uint64_t draw_state(const Eigen::VectorXd& probs, RngStream& rng) {
  const double u = rng.next_double();
  double cum = 0.0;
  for (Eigen::Index s = 0; s < probs.size(); ++s) {
    cum += probs[s];
    if (u < cum) return static_cast<std::uint64_t>(s);
  }
  return static_cast<std::uint64_t>(probs.size() - 1);
}

double max_row_tv_to_stationary(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& pi) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < kernel.rows(); ++r) {
    double tv = 0.0;
    for (Eigen::Index c = 0; c < kernel.cols(); ++c) tv += std::abs(kernel(r, c) - pi[c]);
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

}  // namespace

TEST_CASE("KernelSpec: mh_augmented requires at least one sweep") {
  KernelSpec spec{KernelFamily::mh_augmented, 0};
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec.mh_sweeps = 1;
  spec.validate();
}

TEST_CASE("identical (seed, stream_id) reproduces identical trajectories") {
  const BipartiteModel m = random_model(3, 3, 4);
  const Schedule s = linear_schedule(5);
  RngStream a(42, 17), b(42, 17);
  SpinState va = sample_uniform_spins(3, Layer::visible, a);
  SpinState vb = sample_uniform_spins(3, Layer::visible, b);
  for (int step = 0; step < 20; ++step) {
    const int level = 1 + step % 4;
    va = mais_step(m, s, level, va, a);
    vb = mais_step(m, s, level, vb, b);
    CHECK(va.values == vb.values);
  }
  RngStream c(42, 18);
  SpinState vc = sample_uniform_spins(3, Layer::visible, c);
  bool any_diff = false;
  for (int step = 0; step < 20 && !any_diff; ++step) {
    vc = mais_step(m, s, 1 + step % 4, vc, c);
    va = mais_step(m, s, 1 + step % 4, va, a);
    any_diff = vc.values != va.values;
  }
  CHECK(any_diff);  // different stream, different trajectory
}

TEST_CASE("zero model: collapsed-Gibbs kernel rows are uniform") {
  const BipartiteModel m = zero_model(2, 2);
  const Schedule s = linear_schedule(2);
  const Eigen::MatrixXd tau = exact_kernel_matrix(m, s, 1, KernelSpec{}, Layer::visible);
  for (Eigen::Index r = 0; r < tau.rows(); ++r) {
    for (Eigen::Index c = 0; c < tau.cols(); ++c) {
      CHECK(tau(r, c) == doctest::Approx(0.25).epsilon(1e-14));
    }
  }
}

TEST_CASE("zero model: joint AIS kernel rows are uniform") {
  const BipartiteModel m = zero_model(2, 2);
  const Schedule s = linear_schedule(2);
  const Eigen::MatrixXd joint = exact_kernel_matrix(m, s, 1, KernelSpec{}, Layer::joint);
  for (Eigen::Index r = 0; r < joint.rows(); ++r) {
    for (Eigen::Index c = 0; c < joint.cols(); ++c) {
      CHECK(joint(r, c) == doctest::Approx(1.0 / 16.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("exact stationarity of the blocked kernels on visible and joint spaces") {
  const BipartiteModel m = random_model(2, 3, 97);
  const Schedule s = linear_schedule(4);
  for (int level = 1; level <= 3; ++level) {
    const Eigen::MatrixXd tau = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::visible);
    const Eigen::VectorXd pi_v = exact_distribution(m, s.beta(level), Layer::visible);
    CHECK((tau.transpose() * pi_v - pi_v).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd joint = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::joint);
    const Eigen::VectorXd pi_x = exact_distribution(m, s.beta(level), Layer::joint);
    CHECK((joint.transpose() * pi_x - pi_x).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("zero model: mais_step produces i.i.d. uniform sites") {
  const BipartiteModel m = zero_model(3, 2);
  const Schedule s = linear_schedule(2);
  RngStream rng(7, 0);
  SpinState v = sample_uniform_spins(3, Layer::visible, rng);
  const int n_draws = 200000;
  Eigen::Vector3d site_sums = Eigen::Vector3d::Zero();
  for (int draw = 0; draw < n_draws; ++draw) {
    v = mais_step(m, s, 1, v, rng);
    site_sums += v.values;
  }
  // per-site mean is 0 +- ~1/sqrt(n); 4.5 sigma bound
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(site_sums[i]) / n_draws < 4.5 / std::sqrt(static_cast<double>(n_draws)));
  }
}

TEST_CASE("empirical mais transition matrix matches the analytic kernel (3 SE per entry)") {
  const BipartiteModel m = random_model(2, 2, 11);
  const Schedule s = linear_schedule(3);
  const int level = 1;
  const Eigen::MatrixXd tau = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::visible);
  const int draws_per_row = 250000;
  RngStream rng(2024, 0);
  for (std::uint64_t vi = 0; vi < 4; ++vi) {
    const SpinState start = spin_state_from_index(vi, 2, Layer::visible);
    std::vector<std::uint64_t> counts(4, 0);
    for (int draw = 0; draw < draws_per_row; ++draw) {
      const SpinState next = mais_step(m, s, level, start, rng);
      ++counts[index_from_spin_state(next)];
    }
    for (std::uint64_t vj = 0; vj < 4; ++vj) {
      const double p = tau(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(vj));
      const double se = std::sqrt(p * (1.0 - p) / draws_per_row);
      const double observed = static_cast<double>(counts[vj]) / draws_per_row;
      CHECK(std::abs(observed - p) <= 3.0 * se);
    }
  }
}

TEST_CASE("mais_step leaves the exact marginal stationary (chi-square, 1e6 draws)") {
  const BipartiteModel m = random_model(2, 2, 21);
  const Schedule s = linear_schedule(2);
  const Eigen::VectorXd pi = exact_distribution(m, s.beta(1), Layer::visible);
  RngStream rng(314, 0);
  const int n_draws = 1000000;
  std::vector<std::uint64_t> counts(4, 0);
  for (int draw = 0; draw < n_draws; ++draw) {
    const SpinState v = spin_state_from_index(draw_state(pi, rng), 2, Layer::visible);
    const SpinState next = mais_step(m, s, 1, v, rng);
    ++counts[index_from_spin_state(next)];
  }
  CHECK(chi_square_statistic(counts, pi, n_draws) < chi2_threshold_999(3));
}

TEST_CASE("ais_step leaves the exact joint stationary (chi-square, 1e6 draws)") {
  const BipartiteModel m = random_model(2, 2, 31);
  const Schedule s = linear_schedule(2);
  const Eigen::VectorXd pi = exact_distribution(m, s.beta(1), Layer::joint);
  RngStream rng(2718, 0);
  const int n_draws = 1000000;
  std::vector<std::uint64_t> counts(16, 0);
  for (int draw = 0; draw < n_draws; ++draw) {
    const std::uint64_t x = draw_state(pi, rng);
    const SpinState v = spin_state_from_index(x & 3, 2, Layer::visible);
    const SpinState h = spin_state_from_index(x >> 2, 2, Layer::hidden);
    const auto [v2, h2] = ais_step(m, s, 1, v, h, rng);
    ++counts[index_from_spin_state(v2) | (index_from_spin_state(h2) << 2)];
  }
  CHECK(chi_square_statistic(counts, pi, n_draws) < chi2_threshold_999(15));
}

TEST_CASE("joint AIS kernel marginalized over h' equals the collapsed visible kernel") {
  const BipartiteModel m = random_model(2, 3, 41);
  const Schedule s = linear_schedule(3);
  for (int level = 1; level <= 2; ++level) {
    const Eigen::MatrixXd joint = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::joint);
    const Eigen::MatrixXd tau = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::visible);
    for (std::uint64_t vi = 0; vi < 4; ++vi) {
      for (std::uint64_t hi = 0; hi < 8; ++hi) {
        const auto row = static_cast<Eigen::Index>(vi | (hi << 2));
        for (std::uint64_t vj = 0; vj < 4; ++vj) {
          double sum = 0.0;
          for (std::uint64_t hj = 0; hj < 8; ++hj) {
            sum += joint(row, static_cast<Eigen::Index>(vj | (hj << 2)));
          }
          CHECK(std::abs(sum - tau(static_cast<Eigen::Index>(vi),
                                   static_cast<Eigen::Index>(vj))) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("factorization: joint kernel equals P(h'|v') tau(v'|v) entrywise") {
  const BipartiteModel m = random_model(2, 2, 51);
  const Schedule s = linear_schedule(3);
  const int level = 2;
  const Eigen::MatrixXd joint = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::joint);
  const Eigen::MatrixXd tau = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::visible);
  const Eigen::MatrixXd cond = conditional_matrix_h_given_v(m, s.beta(level));
  for (std::uint64_t vi = 0; vi < 4; ++vi) {
    for (std::uint64_t hi = 0; hi < 4; ++hi) {
      for (std::uint64_t vj = 0; vj < 4; ++vj) {
        for (std::uint64_t hj = 0; hj < 4; ++hj) {
          const double lhs = joint(static_cast<Eigen::Index>(vi | (hi << 2)),
                                   static_cast<Eigen::Index>(vj | (hj << 2)));
          const double rhs =
              cond(static_cast<Eigen::Index>(vj), static_cast<Eigen::Index>(hj)) *
              tau(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(vj));
          CHECK(std::abs(lhs - rhs) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("mh_hidden_sweep on the zero model accepts every proposal") {
  const BipartiteModel m = zero_model(2, 3);
  const Schedule s = linear_schedule(2);
  RngStream rng(5, 0);
  const SpinState h = sample_uniform_spins(3, Layer::hidden, rng);
  // dE = 0 at every site, so each flip is accepted: one sweep negates h.
  const SpinState swept = mh_hidden_sweep(m, s, 1, h, 1, rng);
  CHECK(swept.values == (-h.values).eval());
  // Through the composite kernel the refreshed input makes the output uniform.
  const Eigen::MatrixXd tau =
      exact_kernel_matrix(m, s, 1, KernelSpec{KernelFamily::mh_augmented, 1}, Layer::visible);
  for (Eigen::Index r = 0; r < tau.rows(); ++r) {
    for (Eigen::Index c = 0; c < tau.cols(); ++c) {
      CHECK(tau(r, c) == doctest::Approx(0.25).epsilon(1e-14));
    }
  }
}

TEST_CASE("exact MH sweep matrix has the hidden marginal as stationary vector") {
  const BipartiteModel m = random_model(2, 3, 61);
  const Schedule s = linear_schedule(2);
  for (int sweeps : {1, 3}) {
    const Eigen::MatrixXd sweep = exact_mh_sweep_matrix(m, s, 1, sweeps);
    const Eigen::VectorXd pi = exact_distribution(m, s.beta(1), Layer::hidden);
    const Eigen::VectorXd after = sweep.transpose() * pi;
    CHECK((after - pi).cwiseAbs().maxCoeff() < 1e-10);
    // rows are stochastic
    for (Eigen::Index r = 0; r < sweep.rows(); ++r) {
      CHECK(std::abs(sweep.row(r).sum() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("MH acceptance for a single-bond model matches the hand cosh-ratio value") {
  BipartiteModel m = zero_model(1, 1);
  m.visible_bias[0] = 0.3;
  m.hidden_bias[0] = 0.2;
  m.coupling(0, 0) = 0.7;
  const Schedule s = linear_schedule(1);
  const Eigen::MatrixXd sweep = exact_mh_sweep_matrix(m, s, 1, 1);
  // dE_H(+1 -> -1) = 2 c + ln 2cosh(b + w) - ln 2cosh(b - w) at beta/T = 1;
  // acceptance = exp(-dE_H) computed by hand.
  const double hand_acceptance = 0.46962191457050867;
  CHECK(sweep(1, 0) == doctest::Approx(hand_acceptance).epsilon(1e-12));
  CHECK(sweep(1, 1) == doctest::Approx(1.0 - hand_acceptance).epsilon(1e-12));
  CHECK(sweep(0, 1) == doctest::Approx(1.0).epsilon(1e-12));  // downhill flip always accepted
}

TEST_CASE("mais_step_mh: composite kernel keeps the visible marginal stationary") {
  const BipartiteModel m = random_model(3, 2, 71);
  const Schedule s = linear_schedule(3);
  for (int level = 1; level <= 2; ++level) {
    const Eigen::MatrixXd tau = exact_kernel_matrix(
        m, s, level, KernelSpec{KernelFamily::mh_augmented, 2}, Layer::visible);
    const Eigen::VectorXd pi = exact_distribution(m, s.beta(level), Layer::visible);
    const Eigen::VectorXd after = tau.transpose() * pi;
    CHECK((after - pi).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("mais_step_mh degenerates to mais_step in distribution on the zero model") {
  const BipartiteModel m = zero_model(2, 2);
  const Schedule s = linear_schedule(2);
  const Eigen::MatrixXd blocked = exact_kernel_matrix(m, s, 1, KernelSpec{}, Layer::visible);
  const Eigen::MatrixXd augmented =
      exact_kernel_matrix(m, s, 1, KernelSpec{KernelFamily::mh_augmented, 3}, Layer::visible);
  CHECK((blocked - augmented).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("more MH sweeps move the composite kernel toward independent sampling") {
  const BipartiteModel m = random_model(2, 2, 81, 4.0);  // low temperature, slow mixing
  const Schedule s = linear_schedule(2);
  const Eigen::VectorXd pi = exact_distribution(m, s.beta(1), Layer::visible);
  double last = std::numeric_limits<double>::infinity();
  for (int sweeps : {1, 2, 4, 8, 16}) {
    const Eigen::MatrixXd tau = exact_kernel_matrix(
        m, s, 1, KernelSpec{KernelFamily::mh_augmented, sweeps}, Layer::visible);
    const double tv = max_row_tv_to_stationary(tau, pi);
    CHECK(tv < last);
    last = tv;
  }
}

TEST_CASE("exact kernel matrices are row-stochastic across families and spaces") {
  const BipartiteModel m = random_model(3, 2, 91);
  const Schedule s = linear_schedule(4);
  for (const KernelSpec& spec :
       {KernelSpec{}, KernelSpec{KernelFamily::mh_augmented, 2}}) {
    for (Layer space : {Layer::visible, Layer::joint}) {
      const Eigen::MatrixXd kernel = exact_kernel_matrix(m, s, 2, spec, space);
      for (Eigen::Index r = 0; r < kernel.rows(); ++r) {
        CHECK(std::abs(kernel.row(r).sum() - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("exact_kernel_matrix enforces its state cap") {
  const BipartiteModel m = zero_model(7, 7);
  const Schedule s = linear_schedule(2);
  CHECK_THROWS_AS(exact_kernel_matrix(m, s, 1, KernelSpec{}, Layer::joint, 4096), CapacityError);
  CHECK_THROWS_AS(exact_kernel_matrix(m, s, 1, KernelSpec{}, Layer::visible, 64), CapacityError);
}

TEST_CASE("kernel level bounds are enforced") {
  const BipartiteModel m = zero_model(2, 2);
  const Schedule s = linear_schedule(3);
  RngStream rng(1, 0);
  const SpinState v = sample_uniform_spins(2, Layer::visible, rng);
  CHECK_THROWS_AS(mais_step(m, s, 0, v, rng), std::invalid_argument);
  CHECK_THROWS_AS(mais_step(m, s, 3, v, rng), std::invalid_argument);
}
