#include "annealfe/estimators.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace annealfe {

std::string method_name(Method method) {
  switch (method) {
    case Method::ais: return "ais";
    case Method::mais_v: return "mais_v";
    case Method::mais_h: return "mais_h";
    case Method::auto_select: return "auto";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "ais") return Method::ais;
  if (name == "mais" || name == "mais_v") return Method::mais_v;
  if (name == "mais_h") return Method::mais_h;
  if (name == "auto") return Method::auto_select;
  throw std::invalid_argument("unknown method: " + name);
}

void RunConfig::validate() const {
  if (n_sequences < 1) throw std::invalid_argument("n_sequences must be >= 1");
  kernel.validate();
}

double logmeanexp(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("logmeanexp of an empty vector");
  double max_val = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isnan(v)) throw std::invalid_argument("logmeanexp of NaN");
    max_val = std::max(max_val, v);
  }
  if (std::isinf(max_val)) return max_val;  // all -inf, or a +inf entry
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max_val);
  return max_val + std::log(sum / static_cast<double>(values.size()));
}

namespace {

double logsumexp(const std::vector<double>& values, double scale) {
  double max_val = -std::numeric_limits<double>::infinity();
  for (double v : values) max_val = std::max(max_val, scale * v);
  if (std::isinf(max_val)) return max_val;
  double sum = 0.0;
  for (double v : values) sum += std::exp(scale * v - max_val);
  return max_val + std::log(sum);
}

// ESS = (sum w)^2 / sum w^2 over unnormalized weights, in the log domain.
double effective_sample_size(const std::vector<double>& log_weights) {
  return std::exp(2.0 * logsumexp(log_weights, 1.0) - logsumexp(log_weights, 2.0));
}

RunResult assemble_result(std::vector<double> log_weights, int n_total, Method method) {
  RunResult result;
  const double lme = logmeanexp(log_weights);
  result.log_weights = std::move(log_weights);
  result.log_z0 = n_total * std::numbers::ln2;
  result.log_z_estimate = result.log_z0 + lme;
  result.free_energy_estimate = -result.log_z_estimate;
  // Written so that a zero log-weight vector gives exactly -ln 2 per variable.
  result.per_variable_free_energy = -(std::numbers::ln2 + lme / n_total);
  result.effective_sample_size = effective_sample_size(result.log_weights);
  result.method = method;
  return result;
}

// One AIS sequence: x^(1) ~ P_0, x^(k) ~ T_{k-1}(.|x^(k-1)), accumulating
// ln w_k at each x^(k) as it is reached. Local fields are carried across the
// steps: the hidden fields of the current visible state serve both the
// weight evaluation and the next refresh draw.
double ais_sequence(const BipartiteModel& model, const Schedule& schedule,
                    const KernelSpec& spec, RngStream& rng) {
  const int nv = model.n_visible();
  const int nh = model.n_hidden();
  const double inv_t = 1.0 / model.temperature;
  const int num_steps = schedule.num_steps();

  Eigen::VectorXd v(nv), h(nh);
  for (int i = 0; i < nv; ++i) v[i] = rng.next_spin();
  for (int j = 0; j < nh; ++j) h[j] = rng.next_spin();

  Eigen::VectorXd theta_h(nh), theta_v(nv), mh_scratch(nv), h_tmp(nh);
  detail::hidden_local_fields(model, v, theta_h);

  auto current_energy = [&]() {
    return -inv_t * (model.visible_bias.dot(v) + theta_h.dot(h));
  };

  double log_weight = -(schedule.beta(1) - schedule.beta(0)) * current_energy();
  for (int k = 2; k <= num_steps; ++k) {
    const int level = k - 1;
    const double beta = schedule.beta(level);
    detail::gibbs_layer_draw(theta_h, beta * inv_t, h_tmp, rng);  // refresh h
    detail::visible_local_fields(model, h_tmp, theta_v);
    if (spec.family == KernelFamily::mh_augmented) {
      detail::mh_hidden_sweep_inplace(model, beta, h_tmp, spec.mh_sweeps, theta_v, mh_scratch,
                                      rng);
    }
    detail::gibbs_layer_draw(theta_v, beta * inv_t, v, rng);  // v' ~ P_level(v|h)
    detail::hidden_local_fields(model, v, theta_h);
    detail::gibbs_layer_draw(theta_h, beta * inv_t, h, rng);  // h' ~ P_level(h|v')
    log_weight += -(schedule.beta(k) - schedule.beta(k - 1)) * current_energy();
  }
  return log_weight;
}

// One mAIS-V sequence over the visible marginal; weights accumulate
// ln lambda_k from the closed-form marginal energies.
double mais_sequence(const BipartiteModel& model, const Schedule& schedule,
                     const KernelSpec& spec, RngStream& rng) {
  const int nv = model.n_visible();
  const int nh = model.n_hidden();
  const double inv_t = 1.0 / model.temperature;
  const int num_steps = schedule.num_steps();

  Eigen::VectorXd v(nv);
  for (int i = 0; i < nv; ++i) v[i] = rng.next_spin();

  Eigen::VectorXd theta_h(nh), theta_v(nv), mh_scratch(nv), h_tmp(nh);
  detail::hidden_local_fields(model, v, theta_h);
  double bias_dot = model.visible_bias.dot(v);

  auto log_lambda = [&](int k) {
    const double beta_hi = schedule.beta(k) * inv_t;
    const double beta_lo = schedule.beta(k - 1) * inv_t;
    double sum = (beta_hi - beta_lo) * bias_dot;
    for (int j = 0; j < nh; ++j) {
      sum += log2cosh(beta_hi * theta_h[j]) - log2cosh(beta_lo * theta_h[j]);
    }
    return sum;
  };

  double log_weight = log_lambda(1);
  for (int k = 2; k <= num_steps; ++k) {
    const int level = k - 1;
    const double beta = schedule.beta(level);
    detail::gibbs_layer_draw(theta_h, beta * inv_t, h_tmp, rng);  // h ~ P_level(h|v)
    detail::visible_local_fields(model, h_tmp, theta_v);
    if (spec.family == KernelFamily::mh_augmented) {
      detail::mh_hidden_sweep_inplace(model, beta, h_tmp, spec.mh_sweeps, theta_v, mh_scratch,
                                      rng);
    }
    detail::gibbs_layer_draw(theta_v, beta * inv_t, v, rng);  // v' ~ P_level(v|h)
    detail::hidden_local_fields(model, v, theta_h);
    bias_dot = model.visible_bias.dot(v);
    log_weight += log_lambda(k);
  }
  return log_weight;
}

}  // namespace

RunResult run_ais(const BipartiteModel& model, const Schedule& schedule,
                  const RunConfig& config) {
  model.validate();
  schedule.validate();
  config.validate();
  if (config.method != Method::ais) {
    throw std::invalid_argument("run_ais requires method = ais");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> log_weights(static_cast<std::size_t>(config.n_sequences));
  for (int mu = 0; mu < config.n_sequences; ++mu) {
    RngStream rng(config.seed, static_cast<std::uint64_t>(mu));
    log_weights[static_cast<std::size_t>(mu)] = ais_sequence(model, schedule, config.kernel, rng);
  }
  RunResult result = assemble_result(std::move(log_weights), model.n_total(), Method::ais);
  result.elapsed = std::chrono::steady_clock::now() - start;
  return result;
}

RunResult run_mais(const BipartiteModel& model, const Schedule& schedule,
                   const RunConfig& config) {
  model.validate();
  schedule.validate();
  config.validate();
  Method method = config.method;
  if (method == Method::auto_select) {
    // Marginalize the larger layer.
    method = model.n_hidden() >= model.n_visible() ? Method::mais_v : Method::mais_h;
  }
  if (method != Method::mais_v && method != Method::mais_h) {
    throw std::invalid_argument("run_mais requires method in {mais_v, mais_h, auto}");
  }
  const auto start = std::chrono::steady_clock::now();
  // mAIS-H is mAIS-V with the layer labels exchanged.
  const BipartiteModel* work_model = &model;
  BipartiteModel transposed;
  if (method == Method::mais_h) {
    transposed = transpose(model);
    work_model = &transposed;
  }
  std::vector<double> log_weights(static_cast<std::size_t>(config.n_sequences));
  for (int mu = 0; mu < config.n_sequences; ++mu) {
    RngStream rng(config.seed, static_cast<std::uint64_t>(mu));
    log_weights[static_cast<std::size_t>(mu)] =
        mais_sequence(*work_model, schedule, config.kernel, rng);
  }
  RunResult result = assemble_result(std::move(log_weights), model.n_total(), method);
  result.elapsed = std::chrono::steady_clock::now() - start;
  return result;
}

double ape(double f_true, double f_app) {
  if (f_true == 0.0) throw std::invalid_argument("ape undefined for f_true = 0");
  return 100.0 * std::abs(f_true - f_app) / std::abs(f_true);
}

double accuracy_ratio(double f_true, double f_ais, double f_mais) {
  const double denom = std::abs(f_true - f_mais);
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(f_true - f_ais) / denom;
}

std::string run_result_to_json_string(const RunResult& result, bool include_weights) {
  nlohmann::json j;
  j["method"] = method_name(result.method);
  j["n_sequences"] = result.log_weights.size();
  j["log_z0"] = result.log_z0;
  j["log_z_estimate"] = result.log_z_estimate;
  j["free_energy_estimate"] = result.free_energy_estimate;
  j["per_variable_free_energy"] = result.per_variable_free_energy;
  j["effective_sample_size"] = result.effective_sample_size;
  j["elapsed_seconds"] = result.elapsed.count();
  if (include_weights) j["log_weights"] = result.log_weights;
  return j.dump(2);
}

}  // namespace annealfe
