#include "annealfe/oracle.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace annealfe {

namespace {

void check_cap(const char* what, int n_spins, int max_states) {
  if (n_spins >= 63 || (std::int64_t{1} << n_spins) > max_states) {
    throw CapacityError(std::string(what) + ": 2^" + std::to_string(n_spins) +
                        " states exceed the cap of " + std::to_string(max_states));
  }
}

// Energies E(v,h) for every joint state, indexed (vi, hi).
Eigen::MatrixXd joint_energy_table(const BipartiteModel& model) {
  const int nv = model.n_visible();
  const int nh = model.n_hidden();
  const std::uint64_t sv = std::uint64_t{1} << nv;
  const std::uint64_t sh = std::uint64_t{1} << nh;
  Eigen::MatrixXd energies(sv, sh);
  for (std::uint64_t vi = 0; vi < sv; ++vi) {
    const SpinState v = spin_state_from_index(vi, nv, Layer::visible);
    const double bias_dot = model.visible_bias.dot(v.values);
    const Eigen::VectorXd theta = model.hidden_bias + model.coupling.transpose() * v.values;
    for (std::uint64_t hi = 0; hi < sh; ++hi) {
      const SpinState h = spin_state_from_index(hi, nh, Layer::hidden);
      energies(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hi)) =
          -(bias_dot + theta.dot(h.values)) / model.temperature;
    }
  }
  return energies;
}

// E_V(v, beta_k) for every visible state and schedule index.
Eigen::MatrixXd marginal_energy_table(const BipartiteModel& model, const Schedule& schedule) {
  const int nv = model.n_visible();
  const std::uint64_t sv = std::uint64_t{1} << nv;
  Eigen::MatrixXd energies(sv, schedule.num_steps() + 1);
  for (std::uint64_t vi = 0; vi < sv; ++vi) {
    const SpinState v = spin_state_from_index(vi, nv, Layer::visible);
    for (int k = 0; k <= schedule.num_steps(); ++k) {
      energies(static_cast<Eigen::Index>(vi), k) = marginal_energy_v(model, schedule.beta(k), v);
    }
  }
  return energies;
}

struct TransferAccumulator {
  Eigen::VectorXd values;
  double log_scale = 0.0;

  // Rescales only when far outside the comfortable range, so that exactly
  // representable intermediate results stay untouched.
  void guard() {
    const double peak = values.cwiseAbs().maxCoeff();
    if (peak > 1e150 || (peak > 0.0 && peak < 1e-150)) {
      values /= peak;
      log_scale += std::log(peak);
    }
  }

  double total() const { return values.sum() * std::exp(log_scale); }
};

// E[W^p] over the joint AIS chain. The kernel application uses the
// factorized structure T_k = P_k(h'|v') tau_k(v'|v): collapse the hidden
// coordinate, push through tau_k, redistribute over h'.
double joint_chain_moment(const BipartiteModel& model, const Schedule& schedule,
                          const KernelSpec& spec, int p, int max_states) {
  const int nv = model.n_visible();
  const int nh = model.n_hidden();
  const std::uint64_t sv = std::uint64_t{1} << nv;
  const std::uint64_t sh = std::uint64_t{1} << nh;
  const int num_steps = schedule.num_steps();

  const Eigen::MatrixXd energies = joint_energy_table(model);

  auto weight_pow = [&](int k, Eigen::Index vi, Eigen::Index hi) {
    const double log_w = -(schedule.beta(k) - schedule.beta(k - 1)) * energies(vi, hi);
    return std::exp(p * log_w);
  };

  TransferAccumulator acc;
  acc.values.resize(static_cast<Eigen::Index>(sv * sh));
  const double p0 = 1.0 / static_cast<double>(sv * sh);
  for (std::uint64_t vi = 0; vi < sv; ++vi) {
    for (std::uint64_t hi = 0; hi < sh; ++hi) {
      acc.values[static_cast<Eigen::Index>(vi | (hi << nv))] =
          p0 * weight_pow(1, static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hi));
    }
  }

  Eigen::VectorXd collapsed(sv), pushed(sv), next(static_cast<Eigen::Index>(sv * sh));
  for (int level = 1; level <= num_steps - 1; ++level) {
    const Eigen::MatrixXd tau =
        exact_kernel_matrix(model, schedule, level, spec, Layer::visible, max_states);
    const Eigen::MatrixXd cond = conditional_matrix_h_given_v(model, schedule.beta(level),
                                                              max_states);
    for (std::uint64_t vi = 0; vi < sv; ++vi) {
      double sum = 0.0;
      for (std::uint64_t hi = 0; hi < sh; ++hi) {
        sum += acc.values[static_cast<Eigen::Index>(vi | (hi << nv))];
      }
      collapsed[static_cast<Eigen::Index>(vi)] = sum;
    }
    pushed.noalias() = tau.transpose() * collapsed;
    for (std::uint64_t vi = 0; vi < sv; ++vi) {
      for (std::uint64_t hi = 0; hi < sh; ++hi) {
        next[static_cast<Eigen::Index>(vi | (hi << nv))] =
            weight_pow(level + 1, static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hi)) *
            cond(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hi)) *
            pushed[static_cast<Eigen::Index>(vi)];
      }
    }
    acc.values.swap(next);
    acc.guard();
  }
  return acc.total();
}

// E[Lambda^p] over the visible marginal chain.
double marginal_chain_moment(const BipartiteModel& model, const Schedule& schedule,
                             const KernelSpec& spec, int p, int max_states) {
  const int nv = model.n_visible();
  const std::uint64_t sv = std::uint64_t{1} << nv;
  const int num_steps = schedule.num_steps();

  const Eigen::MatrixXd energies = marginal_energy_table(model, schedule);
  auto weight_pow = [&](int k, Eigen::Index vi) {
    return std::exp(p * (energies(vi, k - 1) - energies(vi, k)));
  };

  TransferAccumulator acc;
  acc.values.resize(static_cast<Eigen::Index>(sv));
  const double p0 = 1.0 / static_cast<double>(sv);
  for (std::uint64_t vi = 0; vi < sv; ++vi) {
    acc.values[static_cast<Eigen::Index>(vi)] = p0 * weight_pow(1, static_cast<Eigen::Index>(vi));
  }

  Eigen::VectorXd pushed(sv);
  for (int level = 1; level <= num_steps - 1; ++level) {
    const Eigen::MatrixXd tau =
        exact_kernel_matrix(model, schedule, level, spec, Layer::visible, max_states);
    pushed.noalias() = tau.transpose() * acc.values;
    for (std::uint64_t vi = 0; vi < sv; ++vi) {
      acc.values[static_cast<Eigen::Index>(vi)] =
          weight_pow(level + 1, static_cast<Eigen::Index>(vi)) *
          pushed[static_cast<Eigen::Index>(vi)];
    }
    acc.guard();
  }
  return acc.total();
}

Method resolve_oracle_method(const BipartiteModel& model, Method method) {
  if (method == Method::auto_select) {
    return model.n_hidden() >= model.n_visible() ? Method::mais_v : Method::mais_h;
  }
  return method;
}

}  // namespace

MomentReport exact_estimator_moments(const BipartiteModel& model, const Schedule& schedule,
                                     const KernelSpec& spec, Method method, int max_states) {
  model.validate();
  schedule.validate();
  spec.validate();
  method = resolve_oracle_method(model, method);
  if (method == Method::mais_h) {
    MomentReport report =
        exact_estimator_moments(transpose(model), schedule, spec, Method::mais_v, max_states);
    report.method = Method::mais_h;
    return report;
  }

  double e_w = 0.0, e_w2 = 0.0;
  if (method == Method::ais) {
    check_cap("exact_estimator_moments (joint space)", model.n_total(), max_states);
    e_w = joint_chain_moment(model, schedule, spec, 1, max_states);
    e_w2 = joint_chain_moment(model, schedule, spec, 2, max_states);
  } else {
    check_cap("exact_estimator_moments (visible space)", model.n_visible(), max_states);
    check_cap("exact_estimator_moments (hidden layer)", model.n_hidden(), max_states);
    e_w = marginal_chain_moment(model, schedule, spec, 1, max_states);
    e_w2 = marginal_chain_moment(model, schedule, spec, 2, max_states);
  }

  const double z0 = std::ldexp(1.0, model.n_total());  // 2^n, exact
  MomentReport report;
  report.method = method;
  report.mean_z = z0 * e_w;
  report.variance_z = z0 * z0 * (e_w2 - e_w * e_w);
  report.exact_z = std::exp(exact_log_z(model, 1.0));
  return report;
}

double exact_f_expectation_n1(const BipartiteModel& model, const Schedule& schedule,
                              const KernelSpec& spec, Method method, int max_states) {
  model.validate();
  schedule.validate();
  spec.validate();
  method = resolve_oracle_method(model, method);
  if (method == Method::mais_h) {
    return exact_f_expectation_n1(transpose(model), schedule, spec, Method::mais_v, max_states);
  }
  const int num_steps = schedule.num_steps();
  double e_log_w = 0.0;

  if (method == Method::ais) {
    check_cap("exact_f_expectation_n1 (joint space)", model.n_total(), max_states);
    const int nv = model.n_visible();
    const std::uint64_t sv = std::uint64_t{1} << nv;
    const std::uint64_t sh = std::uint64_t{1} << model.n_hidden();
    const Eigen::MatrixXd energies = joint_energy_table(model);

    Eigen::VectorXd p = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(sv * sh),
                                                  1.0 / static_cast<double>(sv * sh));
    Eigen::VectorXd collapsed(sv), pushed(sv);
    for (int k = 1; k <= num_steps; ++k) {
      const double delta_beta = schedule.beta(k) - schedule.beta(k - 1);
      for (std::uint64_t vi = 0; vi < sv; ++vi) {
        for (std::uint64_t hi = 0; hi < sh; ++hi) {
          e_log_w += -delta_beta *
                     energies(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hi)) *
                     p[static_cast<Eigen::Index>(vi | (hi << nv))];
        }
      }
      if (k == num_steps) break;
      const Eigen::MatrixXd tau =
          exact_kernel_matrix(model, schedule, k, spec, Layer::visible, max_states);
      const Eigen::MatrixXd cond =
          conditional_matrix_h_given_v(model, schedule.beta(k), max_states);
      for (std::uint64_t vi = 0; vi < sv; ++vi) {
        double sum = 0.0;
        for (std::uint64_t hi = 0; hi < sh; ++hi) {
          sum += p[static_cast<Eigen::Index>(vi | (hi << nv))];
        }
        collapsed[static_cast<Eigen::Index>(vi)] = sum;
      }
      pushed.noalias() = tau.transpose() * collapsed;
      for (std::uint64_t vi = 0; vi < sv; ++vi) {
        for (std::uint64_t hi = 0; hi < sh; ++hi) {
          p[static_cast<Eigen::Index>(vi | (hi << nv))] =
              cond(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(hi)) *
              pushed[static_cast<Eigen::Index>(vi)];
        }
      }
    }
  } else {
    check_cap("exact_f_expectation_n1 (visible space)", model.n_visible(), max_states);
    check_cap("exact_f_expectation_n1 (hidden layer)", model.n_hidden(), max_states);
    const std::uint64_t sv = std::uint64_t{1} << model.n_visible();
    const Eigen::MatrixXd energies = marginal_energy_table(model, schedule);

    Eigen::VectorXd p = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(sv),
                                                  1.0 / static_cast<double>(sv));
    for (int k = 1; k <= num_steps; ++k) {
      for (std::uint64_t vi = 0; vi < sv; ++vi) {
        const Eigen::Index i = static_cast<Eigen::Index>(vi);
        e_log_w += (energies(i, k - 1) - energies(i, k)) * p[i];
      }
      if (k == num_steps) break;
      const Eigen::MatrixXd tau =
          exact_kernel_matrix(model, schedule, k, spec, Layer::visible, max_states);
      p = (tau.transpose() * p).eval();
    }
  }
  return -model.n_total() * std::numbers::ln2 - e_log_w;
}

IdentityReport verify_marginal_factorization(const BipartiteModel& model,
                                             const Schedule& schedule, const KernelSpec& spec,
                                             double tolerance, int max_states) {
  model.validate();
  schedule.validate();
  spec.validate();
  check_cap("verify_marginal_factorization (joint space)", model.n_total(), max_states);

  const int nv = model.n_visible();
  const std::uint64_t sv = std::uint64_t{1} << nv;
  const std::uint64_t sh = std::uint64_t{1} << model.n_hidden();
  double max_dev = 0.0;

  for (int level = 1; level <= schedule.num_steps() - 1; ++level) {
    const double beta = schedule.beta(level);
    const Eigen::MatrixXd cond = conditional_matrix_h_given_v(model, beta, max_states);
    const Eigen::MatrixXd v_given_h = conditional_matrix_v_given_h(model, beta, max_states);
    const Eigen::MatrixXd tau =
        exact_kernel_matrix(model, schedule, level, spec, Layer::visible, max_states);

    // Refresh distribution of the intermediate hidden draw: the plain Gibbs
    // refresh, or the refresh pushed through the MH sweeps.
    Eigen::MatrixXd refresh = cond;
    if (spec.family == KernelFamily::mh_augmented) {
      refresh = cond * exact_mh_sweep_matrix(model, schedule, level, spec.mh_sweeps, max_states);
    }

    for (std::uint64_t vi = 0; vi < sv; ++vi) {
      for (std::uint64_t vj = 0; vj < sv; ++vj) {
        // Direct summation over the refreshed hidden layer, independent of
        // the factorized tau-based construction.
        double tau_direct = 0.0;
        for (std::uint64_t ht = 0; ht < sh; ++ht) {
          tau_direct += refresh(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(ht)) *
                        v_given_h(static_cast<Eigen::Index>(ht), static_cast<Eigen::Index>(vj));
        }
        const double tau_factored =
            tau(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(vj));

        double row_sum = 0.0;
        for (std::uint64_t hj = 0; hj < sh; ++hj) {
          const double t_direct =
              tau_direct * cond(static_cast<Eigen::Index>(vj), static_cast<Eigen::Index>(hj));
          const double t_factored =
              tau_factored * cond(static_cast<Eigen::Index>(vj), static_cast<Eigen::Index>(hj));
          max_dev = std::max(max_dev, std::abs(t_direct - t_factored));
          row_sum += t_direct;
        }
        // Summing the joint kernel over h' must reproduce tau.
        max_dev = std::max(max_dev, std::abs(row_sum - tau_factored));
      }
    }
  }

  IdentityReport report;
  report.check = "marginal_factorization";
  report.max_deviation = max_dev;
  report.tolerance = tolerance;
  report.pass = max_dev <= tolerance;
  std::ostringstream desc;
  desc << "nv=" << model.n_visible() << " nh=" << model.n_hidden() << " K="
       << schedule.num_steps()
       << " kernel=" << (spec.family == KernelFamily::blocked_gibbs ? "blocked_gibbs"
                                                                    : "mh_augmented");
  report.instance_descriptor = desc.str();
  return report;
}

IdentityReport verify_rao_blackwell_identity(const BipartiteModel& model,
                                             const Schedule& schedule, double tolerance,
                                             int max_total_spins, int max_levels) {
  model.validate();
  schedule.validate();
  if (model.n_total() > max_total_spins) {
    throw CapacityError("verify_rao_blackwell_identity: " + std::to_string(model.n_total()) +
                        " spins exceed the trajectory-enumeration cap of " +
                        std::to_string(max_total_spins));
  }
  if (schedule.num_steps() > max_levels) {
    throw CapacityError("verify_rao_blackwell_identity: K=" +
                        std::to_string(schedule.num_steps()) + " exceeds the cap of " +
                        std::to_string(max_levels));
  }

  const int nv = model.n_visible();
  const int nh = model.n_hidden();
  const int num_steps = schedule.num_steps();
  const std::uint64_t sv = std::uint64_t{1} << nv;
  const std::uint64_t sh = std::uint64_t{1} << nh;

  // Per level k = 1..K: w_k(v,h) and P_{k-1}(h|v) tables.
  std::vector<Eigen::MatrixXd> weights(static_cast<std::size_t>(num_steps));
  std::vector<Eigen::MatrixXd> cond(static_cast<std::size_t>(num_steps));
  for (int k = 1; k <= num_steps; ++k) {
    weights[static_cast<std::size_t>(k - 1)].resize(sv, sh);
    for (std::uint64_t vi = 0; vi < sv; ++vi) {
      const SpinState v = spin_state_from_index(vi, nv, Layer::visible);
      for (std::uint64_t hi = 0; hi < sh; ++hi) {
        const SpinState h = spin_state_from_index(hi, nh, Layer::hidden);
        weights[static_cast<std::size_t>(k - 1)](static_cast<Eigen::Index>(vi),
                                                 static_cast<Eigen::Index>(hi)) =
            std::exp(log_w_k(model, schedule, k, v, h));
      }
    }
    cond[static_cast<std::size_t>(k - 1)] =
        conditional_matrix_h_given_v(model, schedule.beta(k - 1), 1 << max_total_spins);
  }

  // Iterate trajectories as base-2^layer counters of length K.
  auto int_pow = [](std::uint64_t base, int exponent) {
    std::uint64_t value = 1;
    for (int e = 0; e < exponent; ++e) value *= base;
    return value;
  };
  const std::uint64_t total_v = int_pow(sv, num_steps);
  const std::uint64_t total_h = int_pow(sh, num_steps);

  double max_dev = 0.0;
  std::vector<std::uint64_t> v_traj(static_cast<std::size_t>(num_steps));
  std::vector<std::uint64_t> h_traj(static_cast<std::size_t>(num_steps));
  for (std::uint64_t vt = 0; vt < total_v; ++vt) {
    std::uint64_t rest = vt;
    for (int k = 0; k < num_steps; ++k) {
      v_traj[static_cast<std::size_t>(k)] = rest % sv;
      rest /= sv;
    }

    double log_lambda_total = 0.0;
    for (int k = 1; k <= num_steps; ++k) {
      log_lambda_total += log_lambda_k(
          model, schedule, k,
          spin_state_from_index(v_traj[static_cast<std::size_t>(k - 1)], nv, Layer::visible));
    }
    const double lambda_product = std::exp(log_lambda_total);

    double rhs = 0.0;
    for (std::uint64_t ht = 0; ht < total_h; ++ht) {
      rest = ht;
      for (int k = 0; k < num_steps; ++k) {
        h_traj[static_cast<std::size_t>(k)] = rest % sh;
        rest /= sh;
      }
      double term = 1.0;
      for (int k = 0; k < num_steps; ++k) {
        const auto vi = static_cast<Eigen::Index>(v_traj[static_cast<std::size_t>(k)]);
        const auto hi = static_cast<Eigen::Index>(h_traj[static_cast<std::size_t>(k)]);
        term *= weights[static_cast<std::size_t>(k)](vi, hi) *
                cond[static_cast<std::size_t>(k)](vi, hi);
      }
      rhs += term;
    }
    max_dev = std::max(max_dev, std::abs(lambda_product - rhs));
  }

  IdentityReport report;
  report.check = "rao_blackwell_identity";
  report.max_deviation = max_dev;
  report.tolerance = tolerance;
  report.pass = max_dev <= tolerance;
  std::ostringstream desc;
  desc << "nv=" << nv << " nh=" << nh << " K=" << num_steps;
  report.instance_descriptor = desc.str();
  return report;
}

std::string identity_report_to_json_string(const IdentityReport& report) {
  nlohmann::json j;
  j["check"] = report.check;
  j["max_deviation"] = report.max_deviation;
  j["pass"] = report.pass;
  j["instance_descriptor"] = report.instance_descriptor;
  j["tolerance"] = report.tolerance;
  return j.dump(2);
}

}  // namespace annealfe
