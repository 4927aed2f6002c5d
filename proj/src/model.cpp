#include "annealfe/model.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace annealfe {

void SpinState::validate() const {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] != 1.0 && values[i] != -1.0) {
      throw std::invalid_argument("SpinState entry " + std::to_string(i) +
                                  " is not exactly -1 or +1");
    }
  }
}

void BipartiteModel::validate() const {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (coupling.rows() != visible_bias.size() || coupling.cols() != hidden_bias.size()) {
    throw std::invalid_argument("coupling dimensions do not match bias lengths");
  }
  if (sparsity_mask) {
    if (sparsity_mask->rows() != coupling.rows() || sparsity_mask->cols() != coupling.cols()) {
      throw std::invalid_argument("sparsity mask dimensions do not match coupling");
    }
    for (Eigen::Index i = 0; i < coupling.rows(); ++i) {
      for (Eigen::Index j = 0; j < coupling.cols(); ++j) {
        if (!(*sparsity_mask)(i, j) && coupling(i, j) != 0.0) {
          throw std::invalid_argument("coupling is nonzero outside the sparsity mask");
        }
      }
    }
  }
}

BipartiteModel transpose(const BipartiteModel& model) {
  BipartiteModel t;
  t.visible_bias = model.hidden_bias;
  t.hidden_bias = model.visible_bias;
  t.coupling = model.coupling.transpose();
  t.temperature = model.temperature;
  if (model.sparsity_mask) t.sparsity_mask = model.sparsity_mask->transpose();
  return t;
}

namespace {

void check_visible(const BipartiteModel& model, const SpinState& v) {
  if (v.size() != model.n_visible()) {
    throw std::invalid_argument("visible state length does not match model");
  }
}

void check_hidden(const BipartiteModel& model, const SpinState& h) {
  if (h.size() != model.n_hidden()) {
    throw std::invalid_argument("hidden state length does not match model");
  }
}

}  // namespace

double energy(const BipartiteModel& model, const SpinState& v, const SpinState& h) {
  check_visible(model, v);
  check_hidden(model, h);
  const double interaction = v.values.dot(model.coupling * h.values);
  return -(model.visible_bias.dot(v.values) + model.hidden_bias.dot(h.values) + interaction) /
         model.temperature;
}

double marginal_energy_v(const BipartiteModel& model, double beta, const SpinState& v) {
  check_visible(model, v);
  const double bt = beta / model.temperature;
  const Eigen::VectorXd theta =
      model.hidden_bias + model.coupling.transpose() * v.values;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) sum += log2cosh(bt * theta[j]);
  return -bt * model.visible_bias.dot(v.values) - sum;
}

double marginal_energy_h(const BipartiteModel& model, double beta, const SpinState& h) {
  check_hidden(model, h);
  const double bt = beta / model.temperature;
  const Eigen::VectorXd theta = model.visible_bias + model.coupling * h.values;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) sum += log2cosh(bt * theta[i]);
  return -bt * model.hidden_bias.dot(h.values) - sum;
}

namespace {

// P(s = +1) for local field theta: exp(a)/(2 cosh a) with a = beta*theta/T.
inline double plus_prob(double a) { return 1.0 / (1.0 + std::exp(-2.0 * a)); }

}  // namespace

Eigen::VectorXd conditional_hidden_probs(const BipartiteModel& model, double beta,
                                         const SpinState& v) {
  check_visible(model, v);
  const double bt = beta / model.temperature;
  const Eigen::VectorXd theta =
      model.hidden_bias + model.coupling.transpose() * v.values;
  Eigen::VectorXd p(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) p[j] = plus_prob(bt * theta[j]);
  return p;
}

Eigen::VectorXd conditional_visible_probs(const BipartiteModel& model, double beta,
                                          const SpinState& h) {
  check_hidden(model, h);
  const double bt = beta / model.temperature;
  const Eigen::VectorXd theta = model.visible_bias + model.coupling * h.values;
  Eigen::VectorXd p(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) p[i] = plus_prob(bt * theta[i]);
  return p;
}

namespace {

struct StreamingLogSumExp {
  double max_term = -std::numeric_limits<double>::infinity();
  double scaled_sum = 0.0;

  void add(double x) {
    if (x <= max_term) {
      scaled_sum += std::exp(x - max_term);
    } else {
      scaled_sum = scaled_sum * std::exp(max_term - x) + 1.0;
      max_term = x;
    }
  }

  double value() const { return max_term + std::log(scaled_sum); }
};

// ln sum_a exp(-E_marginal(a)) with the visible layer enumerated in Gray-code
// order and the hidden layer summed out in closed form. The per-state
// ln 2cosh sum is evaluated as a vectorized array expression; it dominates
// the 2^|V| loop.
double log_z_enumerating_visible(const BipartiteModel& model, double beta) {
  const int nv = model.n_visible();
  const double bt = beta / model.temperature;

  Eigen::VectorXd v = Eigen::VectorXd::Constant(nv, -1.0);
  Eigen::VectorXd theta = model.hidden_bias - model.coupling.colwise().sum().transpose();
  double bias_dot = -model.visible_bias.sum();
  Eigen::ArrayXd abs_fields(theta.size());

  StreamingLogSumExp lse;
  const std::uint64_t n_states = std::uint64_t{1} << nv;
  for (std::uint64_t t = 0;; ++t) {
    abs_fields = (bt * theta.array()).abs();
    const double hidden_sum =
        abs_fields.sum() + (-2.0 * abs_fields).exp().log1p().sum();
    lse.add(bt * bias_dot + hidden_sum);
    if (t + 1 == n_states) break;
    const int flip = std::countr_zero(t + 1);  // Gray-code neighbour
    v[flip] = -v[flip];
    bias_dot += 2.0 * model.visible_bias[flip] * v[flip];
    theta += 2.0 * v[flip] * model.coupling.row(flip).transpose();
  }
  return lse.value();
}

}  // namespace

double exact_log_z(const BipartiteModel& model, double beta, int max_enumerated_spins) {
  model.validate();
  const int m = std::min(model.n_visible(), model.n_hidden());
  if (m > max_enumerated_spins) {
    throw CapacityError("exact_log_z: smaller layer has " + std::to_string(m) +
                        " spins, enumeration cap is " + std::to_string(max_enumerated_spins));
  }
  if (model.n_visible() <= model.n_hidden()) {
    return log_z_enumerating_visible(model, beta);
  }
  return log_z_enumerating_visible(transpose(model), beta);
}

Eigen::VectorXd exact_distribution(const BipartiteModel& model, double beta, Layer space,
                                   int max_enumerated_spins) {
  model.validate();
  const int dim = space == Layer::visible ? model.n_visible()
                  : space == Layer::hidden ? model.n_hidden()
                                           : model.n_total();
  if (dim > max_enumerated_spins) {
    throw CapacityError("exact_distribution: space has " + std::to_string(dim) +
                        " spins, enumeration cap is " + std::to_string(max_enumerated_spins));
  }
  const std::uint64_t n_states = std::uint64_t{1} << dim;
  Eigen::VectorXd log_p(static_cast<Eigen::Index>(n_states));
  for (std::uint64_t idx = 0; idx < n_states; ++idx) {
    double e;
    if (space == Layer::visible) {
      e = marginal_energy_v(model, beta, spin_state_from_index(idx, dim, Layer::visible));
    } else if (space == Layer::hidden) {
      e = marginal_energy_h(model, beta, spin_state_from_index(idx, dim, Layer::hidden));
    } else {
      const SpinState v = spin_state_from_index(idx & ((std::uint64_t{1} << model.n_visible()) - 1),
                                                model.n_visible(), Layer::visible);
      const SpinState h = spin_state_from_index(idx >> model.n_visible(), model.n_hidden(),
                                                Layer::hidden);
      e = beta * energy(model, v, h);
    }
    log_p[static_cast<Eigen::Index>(idx)] = -e;
  }
  const double m = log_p.maxCoeff();
  Eigen::VectorXd p = (log_p.array() - m).exp();
  p /= p.sum();
  return p;
}

BipartiteModel grid_ising_as_bipartite(int height, int width,
                                       const std::vector<double>& couplings,
                                       const std::vector<double>& fields,
                                       double temperature) {
  if (height < 1 || width < 1 || height * width < 2) {
    throw std::invalid_argument("grid must have at least 2 sites");
  }
  const std::size_t n_sites = static_cast<std::size_t>(height) * width;
  const std::size_t n_edges =
      static_cast<std::size_t>(height) * (width - 1) + static_cast<std::size_t>(height - 1) * width;
  if (fields.size() != n_sites) {
    throw std::invalid_argument("expected " + std::to_string(n_sites) + " site fields");
  }
  if (couplings.size() != n_edges) {
    throw std::invalid_argument("expected " + std::to_string(n_edges) + " edge couplings");
  }

  // Row-major scan; even parity -> visible, odd parity -> hidden.
  std::vector<int> layer_index(n_sites);
  std::vector<bool> is_visible(n_sites);
  int nv = 0, nh = 0;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t site = static_cast<std::size_t>(r) * width + c;
      is_visible[site] = ((r + c) % 2 == 0);
      layer_index[site] = is_visible[site] ? nv++ : nh++;
    }
  }

  BipartiteModel model;
  model.visible_bias = Eigen::VectorXd::Zero(nv);
  model.hidden_bias = Eigen::VectorXd::Zero(nh);
  model.coupling = Eigen::MatrixXd::Zero(nv, nh);
  model.sparsity_mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nv, nh, false);
  model.temperature = temperature;

  for (std::size_t site = 0; site < n_sites; ++site) {
    if (is_visible[site]) {
      model.visible_bias[layer_index[site]] = fields[site];
    } else {
      model.hidden_bias[layer_index[site]] = fields[site];
    }
  }

  std::size_t edge = 0;
  auto add_edge = [&](std::size_t a, std::size_t b) {
    const double j = couplings[edge++];
    const std::size_t vis = is_visible[a] ? a : b;
    const std::size_t hid = is_visible[a] ? b : a;
    model.coupling(layer_index[vis], layer_index[hid]) = j;
    (*model.sparsity_mask)(layer_index[vis], layer_index[hid]) = true;
  };
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t site = static_cast<std::size_t>(r) * width + c;
      if (c + 1 < width) add_edge(site, site + 1);
      if (r + 1 < height) add_edge(site, site + width);
    }
  }

  model.validate();
  return model;
}

SpinState spin_state_from_index(std::uint64_t index, int n, Layer tag) {
  Eigen::VectorXd values(n);
  for (int i = 0; i < n; ++i) values[i] = (index >> i) & 1 ? 1.0 : -1.0;
  return SpinState(std::move(values), tag);
}

std::uint64_t index_from_spin_state(const SpinState& state) {
  std::uint64_t index = 0;
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    if (state.values[i] > 0.0) index |= std::uint64_t{1} << i;
  }
  return index;
}

namespace {

using nlohmann::json;

Eigen::VectorXd vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(values.size()));
}

}  // namespace

BipartiteModel model_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model JSON parse error: ") + e.what());
  }
  BipartiteModel model;
  try {
    model.visible_bias = vector_from_json(j.at("visible_bias"));
    model.hidden_bias = vector_from_json(j.at("hidden_bias"));
    const auto rows = j.at("coupling").get<std::vector<std::vector<double>>>();
    model.coupling.resize(static_cast<Eigen::Index>(rows.size()), model.hidden_bias.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != static_cast<std::size_t>(model.hidden_bias.size())) {
        throw std::invalid_argument("coupling row " + std::to_string(i) + " has wrong length");
      }
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        model.coupling(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
      }
    }
    model.temperature = j.at("temperature").get<double>();
    if (j.contains("sparsity_mask")) {
      const auto mask_rows = j.at("sparsity_mask").get<std::vector<std::vector<bool>>>();
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(model.coupling.rows(),
                                                              model.coupling.cols());
      if (mask_rows.size() != static_cast<std::size_t>(mask.rows())) {
        throw std::invalid_argument("sparsity_mask has wrong number of rows");
      }
      for (std::size_t i = 0; i < mask_rows.size(); ++i) {
        if (mask_rows[i].size() != static_cast<std::size_t>(mask.cols())) {
          throw std::invalid_argument("sparsity_mask row " + std::to_string(i) +
                                      " has wrong length");
        }
        for (std::size_t k = 0; k < mask_rows[i].size(); ++k) {
          mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = mask_rows[i][k];
        }
      }
      model.sparsity_mask = std::move(mask);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model JSON field error: ") + e.what());
  }
  model.validate();
  return model;
}

std::string model_to_json_string(const BipartiteModel& model) {
  json j;
  j["visible_bias"] = std::vector<double>(model.visible_bias.begin(), model.visible_bias.end());
  j["hidden_bias"] = std::vector<double>(model.hidden_bias.begin(), model.hidden_bias.end());
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(model.coupling.rows()));
  for (Eigen::Index i = 0; i < model.coupling.rows(); ++i) {
    rows[static_cast<std::size_t>(i)].assign(model.coupling.row(i).begin(),
                                             model.coupling.row(i).end());
  }
  j["coupling"] = rows;
  j["temperature"] = model.temperature;
  if (model.sparsity_mask) {
    std::vector<std::vector<bool>> mask_rows(static_cast<std::size_t>(model.sparsity_mask->rows()));
    for (Eigen::Index i = 0; i < model.sparsity_mask->rows(); ++i) {
      mask_rows[static_cast<std::size_t>(i)].resize(
          static_cast<std::size_t>(model.sparsity_mask->cols()));
      for (Eigen::Index k = 0; k < model.sparsity_mask->cols(); ++k) {
        mask_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
            (*model.sparsity_mask)(i, k);
      }
    }
    j["sparsity_mask"] = mask_rows;
  }
  return j.dump(2);
}

BipartiteModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return model_from_json_string(buffer.str());
}

void save_model(const BipartiteModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open model file for writing: " + path);
  out << model_to_json_string(model) << '\n';
}

}  // namespace annealfe
