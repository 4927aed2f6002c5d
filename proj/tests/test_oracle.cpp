#include "annealfe/generators.hpp"
#include "annealfe/oracle.hpp"

#include "doctest.h"

#include <cmath>
#include <numbers>
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

BipartiteModel random_model(int nv, int nh, std::uint64_t seed, double inv_temp = 1.0) {
  RngStream rng(seed, 0);
  return gen_gaussian_rbm(nv, nh, inv_temp, rng);
}

}  // namespace

TEST_CASE("moments of the zero model: mean 2^n, variance exactly zero") {
  const BipartiteModel m = zero_model(3, 3);
  for (int num_steps : {1, 2, 5}) {
    const Schedule s = linear_schedule(num_steps);
    for (Method method : {Method::ais, Method::mais_v}) {
      const MomentReport r = exact_estimator_moments(m, s, KernelSpec{}, method);
      CHECK(r.mean_z == 64.0);
      CHECK(r.variance_z == 0.0);
    }
  }
}

TEST_CASE("zero couplings with nonzero biases: unbiased, variance nonnegative") {
  // With w = 0 every blocked-Gibbs draw is an exact independent sample, but
  // the importance weights still fluctuate with the state, so only the fully
  // zero model has exactly zero variance.
  BipartiteModel m = zero_model(3, 2);
  m.visible_bias << 0.3, -0.2, 0.05;
  m.hidden_bias << -0.4, 0.1;
  for (int num_steps : {1, 2, 4}) {
    const MomentReport r =
        exact_estimator_moments(m, linear_schedule(num_steps), KernelSpec{}, Method::ais);
    CHECK(r.variance_z >= 0.0);
    CHECK(r.mean_z == doctest::Approx(r.exact_z).epsilon(1e-10));
  }
}

TEST_CASE("unbiasedness: exact mean equals exact Z within 1e-8 relative") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const BipartiteModel m = random_model(3, 3, seed + 100, 2.0);
    for (int num_steps : {1, 2, 3}) {
      const Schedule s = linear_schedule(num_steps);
      for (Method method : {Method::ais, Method::mais_v, Method::mais_h}) {
        const MomentReport r = exact_estimator_moments(m, s, KernelSpec{}, method);
        CHECK(std::abs(r.mean_z - r.exact_z) <= 1e-8 * r.exact_z);
      }
      const MomentReport mh = exact_estimator_moments(
          m, s, KernelSpec{KernelFamily::mh_augmented, 2}, Method::mais_v);
      CHECK(std::abs(mh.mean_z - mh.exact_z) <= 1e-8 * mh.exact_z);
    }
  }
}

TEST_CASE("variance dominance holds on every random instance") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const BipartiteModel m = random_model(3, 3, seed + 500, 2.0);
    for (int num_steps : {1, 2, 3}) {
      const Schedule s = linear_schedule(num_steps);
      const MomentReport ais = exact_estimator_moments(m, s, KernelSpec{}, Method::ais);
      const MomentReport mais = exact_estimator_moments(m, s, KernelSpec{}, Method::mais_v);
      CHECK(ais.variance_z >=
            mais.variance_z - 1e-12 * std::max(1.0, std::abs(ais.variance_z)));
      ++checked;
    }
  }
  CHECK(checked == 150);
}

TEST_CASE("moment recursion agrees with a materialized joint-kernel recursion") {
  const BipartiteModel m = random_model(2, 2, 900, 2.0);
  const Schedule s = linear_schedule(3);
  // Independent route: dense joint kernel matrices and explicit vectors.
  for (int p : {1, 2}) {
    Eigen::VectorXd a(16);
    for (std::uint64_t x = 0; x < 16; ++x) {
      const SpinState v = spin_state_from_index(x & 3, 2, Layer::visible);
      const SpinState h = spin_state_from_index(x >> 2, 2, Layer::hidden);
      a[static_cast<Eigen::Index>(x)] =
          (1.0 / 16.0) * std::exp(p * log_w_k(m, s, 1, v, h));
    }
    for (int level = 1; level <= 2; ++level) {
      const Eigen::MatrixXd kernel = exact_kernel_matrix(m, s, level, KernelSpec{}, Layer::joint);
      Eigen::VectorXd next = kernel.transpose() * a;
      for (std::uint64_t x = 0; x < 16; ++x) {
        const SpinState v = spin_state_from_index(x & 3, 2, Layer::visible);
        const SpinState h = spin_state_from_index(x >> 2, 2, Layer::hidden);
        next[static_cast<Eigen::Index>(x)] *= std::exp(p * log_w_k(m, s, level + 1, v, h));
      }
      a = next;
    }
    const double expectation = a.sum();
    const MomentReport r = exact_estimator_moments(m, s, KernelSpec{}, Method::ais);
    const double z0 = std::exp(4 * std::numbers::ln2);
    if (p == 1) {
      CHECK(r.mean_z == doctest::Approx(z0 * expectation).epsilon(1e-12));
    } else {
      const double e_w = r.mean_z / z0;
      CHECK(r.variance_z ==
            doctest::Approx(z0 * z0 * (expectation - e_w * e_w)).epsilon(1e-10));
    }
  }
}

TEST_CASE("variance gap equals Z0^2 E[(W - Lambda)^2] by trajectory enumeration") {
  const BipartiteModel m = random_model(2, 2, 321, 2.0);
  const Schedule s = linear_schedule(2);
  const Eigen::MatrixXd kernel = exact_kernel_matrix(m, s, 1, KernelSpec{}, Layer::joint);
  double gap = 0.0;
  for (std::uint64_t x1 = 0; x1 < 16; ++x1) {
    const SpinState v1 = spin_state_from_index(x1 & 3, 2, Layer::visible);
    const SpinState h1 = spin_state_from_index(x1 >> 2, 2, Layer::hidden);
    for (std::uint64_t x2 = 0; x2 < 16; ++x2) {
      const SpinState v2 = spin_state_from_index(x2 & 3, 2, Layer::visible);
      const SpinState h2 = spin_state_from_index(x2 >> 2, 2, Layer::hidden);
      const double prob = (1.0 / 16.0) * kernel(static_cast<Eigen::Index>(x1),
                                                static_cast<Eigen::Index>(x2));
      const double w = std::exp(log_w_k(m, s, 1, v1, h1) + log_w_k(m, s, 2, v2, h2));
      const double lambda = std::exp(log_lambda_k(m, s, 1, v1) + log_lambda_k(m, s, 2, v2));
      gap += prob * (w - lambda) * (w - lambda);
    }
  }
  const double z0 = 16.0;
  const MomentReport ais = exact_estimator_moments(m, s, KernelSpec{}, Method::ais);
  const MomentReport mais = exact_estimator_moments(m, s, KernelSpec{}, Method::mais_v);
  CHECK(ais.variance_z - mais.variance_z ==
        doctest::Approx(z0 * z0 * gap).epsilon(1e-8));
}

TEST_CASE("exact free-energy expectation of the zero model has zero bias") {
  const BipartiteModel m = zero_model(2, 3);
  for (Method method : {Method::ais, Method::mais_v}) {
    const double f = exact_f_expectation_n1(m, linear_schedule(3), KernelSpec{}, method);
    CHECK(f == -5 * std::numbers::ln2);
  }
}

TEST_CASE("bias ordering E[F_AIS] >= E[F_mAIS] >= F on every random instance") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const BipartiteModel m = random_model(3, 3, seed + 700, 2.0);
    const double f_exact = -exact_log_z(m, 1.0);
    for (int num_steps : {1, 2, 3}) {
      const Schedule s = linear_schedule(num_steps);
      const double f_ais = exact_f_expectation_n1(m, s, KernelSpec{}, Method::ais);
      const double f_mais = exact_f_expectation_n1(m, s, KernelSpec{}, Method::mais_v);
      CHECK(f_ais >= f_mais - 1e-10);
      CHECK(f_mais >= f_exact - 1e-10);
    }
  }
}

TEST_CASE("bias shrinks as K grows on a fixed tiny model") {
  const BipartiteModel m = random_model(2, 3, 808, 2.0);
  const double f_exact = -exact_log_z(m, 1.0);
  for (Method method : {Method::ais, Method::mais_v}) {
    double first_bias = 0.0;
    double last_bias = std::numeric_limits<double>::infinity();
    for (int num_steps : {1, 2, 4, 8, 16, 32, 64, 128, 256}) {
      const double bias =
          exact_f_expectation_n1(m, linear_schedule(num_steps), KernelSpec{}, method) - f_exact;
      CHECK(bias >= -1e-10);
      CHECK(bias <= last_bias + 1e-12);
      if (num_steps == 1) first_bias = bias;
      last_bias = bias;
    }
    CHECK(last_bias < 0.01 * first_bias);  // converged toward F
  }
}

TEST_CASE("marginal factorization holds at 1e-12 on random instances") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const BipartiteModel m = random_model(2, 3, seed + 1000, 2.0);
    const Schedule s = linear_schedule(3);
    for (const KernelSpec& spec : {KernelSpec{}, KernelSpec{KernelFamily::mh_augmented, 2}}) {
      const IdentityReport report = verify_marginal_factorization(m, s, spec, 1e-12);
      CHECK(report.pass);
      CHECK(report.max_deviation <= 1e-12);
    }
  }
}

TEST_CASE("factorization check: zero model has zero deviation") {
  const IdentityReport report =
      verify_marginal_factorization(zero_model(2, 2), linear_schedule(2), KernelSpec{});
  CHECK(report.max_deviation == 0.0);
  CHECK(report.pass);
}

TEST_CASE("negative control: the unrefreshed joint Gibbs kernel breaks factorization") {
  // Wrong kernel: h' ~ P_k(h|v) using the current v, then v' ~ P_k(v|h').
  // It is a valid P_k-stationary kernel but does not factor through tau.
  const BipartiteModel m = random_model(2, 2, 2000, 2.0);
  const Schedule s = linear_schedule(2);
  const double beta = s.beta(1);
  const Eigen::MatrixXd cond_hv = conditional_matrix_h_given_v(m, beta);
  const Eigen::MatrixXd cond_vh = conditional_matrix_v_given_h(m, beta);
  const Eigen::MatrixXd tau = exact_kernel_matrix(m, s, 1, KernelSpec{}, Layer::visible);

  // stationarity still holds for the wrong kernel
  const Eigen::VectorXd joint_pi = exact_distribution(m, beta, Layer::joint);
  Eigen::VectorXd pushed = Eigen::VectorXd::Zero(16);
  double max_factorization_dev = 0.0;
  for (std::uint64_t vi = 0; vi < 4; ++vi) {
    for (std::uint64_t hi = 0; hi < 4; ++hi) {
      const std::uint64_t row = vi | (hi << 2);
      for (std::uint64_t hj = 0; hj < 4; ++hj) {
        for (std::uint64_t vj = 0; vj < 4; ++vj) {
          const double t_wrong =
              cond_hv(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hj)) *
              cond_vh(static_cast<Eigen::Index>(hj), static_cast<Eigen::Index>(vj));
          pushed[static_cast<Eigen::Index>(vj | (hj << 2))] +=
              t_wrong * joint_pi[static_cast<Eigen::Index>(row)];
          const double t_factored =
              cond_hv(static_cast<Eigen::Index>(vj), static_cast<Eigen::Index>(hj)) *
              tau(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(vj));
          max_factorization_dev =
              std::max(max_factorization_dev, std::abs(t_wrong - t_factored));
        }
      }
    }
  }
  CHECK((pushed - joint_pi).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(max_factorization_dev > 1e-3);
}

TEST_CASE("Rao-Blackwell identity: zero model gives both sides exactly 1") {
  const IdentityReport report =
      verify_rao_blackwell_identity(zero_model(2, 2), linear_schedule(2));
  CHECK(report.max_deviation == 0.0);
}

TEST_CASE("Rao-Blackwell identity: K=1 reduces to the lambda marginalization") {
  const BipartiteModel m = random_model(3, 3, 3000, 2.0);
  const IdentityReport report = verify_rao_blackwell_identity(m, linear_schedule(1));
  CHECK(report.pass);
  CHECK(report.max_deviation <= 1e-10);
}

TEST_CASE("Rao-Blackwell identity holds on random tiny instances") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const BipartiteModel m = random_model(3, 3, seed + 4000, 2.0);
    for (int num_steps : {2, 3}) {
      const IdentityReport report = verify_rao_blackwell_identity(m, linear_schedule(num_steps));
      CHECK(report.pass);
      CHECK(report.max_deviation <= 1e-10);
    }
  }
}

TEST_CASE("oracle capacity errors") {
  const BipartiteModel big = zero_model(7, 7);
  const Schedule s = linear_schedule(2);
  CHECK_THROWS_AS(exact_estimator_moments(big, s, KernelSpec{}, Method::ais, 4096),
                  CapacityError);
  CHECK_THROWS_AS(verify_rao_blackwell_identity(big, s), CapacityError);
  CHECK_THROWS_AS(verify_rao_blackwell_identity(zero_model(2, 2), linear_schedule(4)),
                  CapacityError);
  CHECK_THROWS_AS(verify_marginal_factorization(big, s, KernelSpec{}, 1e-10, 64), CapacityError);
}

TEST_CASE("identity reports serialize to JSON with the expected fields") {
  const IdentityReport report =
      verify_rao_blackwell_identity(zero_model(2, 2), linear_schedule(2));
  const std::string text = identity_report_to_json_string(report);
  CHECK(text.find("\"check\"") != std::string::npos);
  CHECK(text.find("\"max_deviation\"") != std::string::npos);
  CHECK(text.find("\"pass\"") != std::string::npos);
  CHECK(text.find("\"instance_descriptor\"") != std::string::npos);
}
