#include "fedcausal/models.hpp"

#include "fedcausal/linalg.hpp"

#include "json.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>

namespace fedcausal {

namespace {

double l1_norm(const DenseMatrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += std::abs(v);
  return s;
}

// Adds λ2·||θ - anchor||² and its gradient.
double add_proximal(const DenseMatrix& theta, const ProximalTerm* prox, DenseMatrix& grad) {
  if (prox == nullptr || prox->lambda2 == 0.0) return 0.0;
  require_same_shape(theta, prox->anchor, "proximal term");
  double value = 0.0;
  auto t = theta.values();
  auto a = prox->anchor.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double diff = t[i] - a[i];
    value += diff * diff;
    g[i] += 2.0 * prox->lambda2 * diff;
  }
  return prox->lambda2 * value;
}

nlohmann::json layer_json(const std::string& name, const DenseMatrix& m) {
  return {{"name", name}, {"shape", {m.rows(), m.cols()}}, {"values", m.storage()}};
}

DenseMatrix layer_from_json(const nlohmann::json& layers, const std::string& name) {
  for (const auto& layer : layers) {
    if (layer.at("name").get<std::string>() != name) continue;
    const auto rows = layer.at("shape").at(0).get<std::size_t>();
    const auto cols = layer.at("shape").at(1).get<std::size_t>();
    return DenseMatrix(rows, cols, layer.at("values").get<std::vector<double>>());
  }
  throw std::runtime_error("checkpoint: missing layer '" + name + "'");
}

}  // namespace

std::string to_string(Activation activation) {
  return activation == Activation::Sigmoid ? "sigmoid" : "identity";
}

Activation parse_activation(const std::string& text) {
  if (text == "sigmoid") return Activation::Sigmoid;
  if (text == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + text + "'");
}

MlpParams MlpParams::zeros(std::size_t d, std::size_t hidden, Activation activation) {
  MlpParams p;
  p.d = d;
  p.hidden = hidden;
  p.activation = activation;
  p.first_layer = DenseMatrix(d * hidden, d);
  p.hidden_bias = DenseMatrix(d, hidden);
  p.output = DenseMatrix(d, hidden);
  return p;
}

MlpParams MlpParams::initialize(std::size_t d, std::size_t hidden, std::uint64_t seed,
                                Activation activation) {
  MlpParams p = zeros(d, hidden, activation);
  std::mt19937_64 rng(seed);
  const double bias_bound = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> bias(-bias_bound, bias_bound);
  std::uniform_real_distribution<double> out(-out_bound, out_bound);
  for (double& v : p.hidden_bias.values()) v = bias(rng);
  for (double& v : p.output.values()) v = out(rng);
  return p;
}

void MlpParams::validate() const {
  if (d == 0 || hidden == 0) throw ShapeError("MlpParams: d and hidden must be positive");
  if (first_layer.rows() != d * hidden || first_layer.cols() != d) {
    throw ShapeError("MlpParams: first layer is " + shape_string(first_layer) + ", expected " +
                     std::to_string(d * hidden) + "x" + std::to_string(d));
  }
  if (hidden_bias.rows() != d || hidden_bias.cols() != hidden || output.rows() != d ||
      output.cols() != hidden) {
    throw ShapeError("MlpParams: bias/output layers must be " + std::to_string(d) + "x" +
                     std::to_string(hidden));
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < hidden; ++k)
      if (first_layer(i * hidden + k, i) != 0.0) {
        throw ShapeError("MlpParams: variable " + std::to_string(i) + " has a self-input weight");
      }
}

LinearLoss::LinearLoss(const DenseMatrix& x) {
  if (x.rows() == 0) throw ShapeError("LinearLoss: data has no rows");
  covariance_ = matmul_tn(x, x);
  covariance_ *= 1.0 / static_cast<double>(x.rows());
}

LinearEvaluation LinearLoss::evaluate(const DenseMatrix& w, double lambda1,
                                      const ProximalTerm* prox,
                                      const AugmentedTerms& terms) const {
  const std::size_t d = covariance_.rows();
  if (w.rows() != d || w.cols() != d) {
    throw ShapeError("linear objective: W is " + shape_string(w) + ", data has " +
                     std::to_string(d) + " columns");
  }
  // ½n⁻¹||X - XW||² = ½ tr((I - W)ᵀ C (I - W)); gradient -C(I - W).
  DenseMatrix residual_map = DenseMatrix::identity(d) - w;
  DenseMatrix c_r = matmul(covariance_, residual_map);
  LinearEvaluation out;
  double loss = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) loss += residual_map(i, j) * c_r(i, j);
  out.loss = 0.5 * loss;
  out.gradient = c_r * -1.0;

  const double prox_value = add_proximal(w, prox, out.gradient);

  const DenseMatrix squares = hadamard(w, w);
  const auto constraint = trace_exp_constraint(squares);
  out.h = constraint.value;
  const double coef = terms.rho * out.h + terms.alpha;
  if (coef != 0.0) {
    auto g = out.gradient.values();
    auto e = constraint.gradient.values();
    auto wv = w.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += coef * e[i] * 2.0 * wv[i];
  }
  out.value = out.loss + lambda1 * l1_norm(w) + prox_value +
              0.5 * terms.rho * out.h * out.h + terms.alpha * out.h;
  return out;
}

LinearEvaluation linear_objective(const LinearParams& params, const DenseMatrix& x,
                                  double lambda1, const ProximalTerm* prox,
                                  const AugmentedTerms& terms) {
  if (x.cols() != params.w.rows()) {
    throw ShapeError("linear_objective: data has " + std::to_string(x.cols()) +
                     " columns, W is " + shape_string(params.w));
  }
  return LinearLoss(x).evaluate(params.w, lambda1, prox, terms);
}

namespace {

void check_data(const MlpParams& params, const DenseMatrix& x) {
  params.validate();
  if (x.cols() != params.d) {
    throw ShapeError("mlp: data has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(params.d));
  }
}

// Hidden activations, n x (d*hidden).
DenseMatrix hidden_layer(const MlpParams& params, const DenseMatrix& x) {
  DenseMatrix z = matmul_nt(x, params.first_layer);
  const auto bias = params.hidden_bias.values();
  const std::size_t width = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < width; ++c) {
      const double v = row[c] + bias[c];
      row[c] = params.activation == Activation::Sigmoid ? 1.0 / (1.0 + std::exp(-v)) : v;
    }
  }
  return z;
}

DenseMatrix output_layer(const MlpParams& params, const DenseMatrix& hidden) {
  const std::size_t n = hidden.rows();
  const std::size_t m = params.hidden;
  DenseMatrix out(n, params.d);
  const auto w = params.output.values();
  for (std::size_t r = 0; r < n; ++r) {
    const auto h = hidden.row(r);
    auto o = out.row(r);
    for (std::size_t i = 0; i < params.d; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += h[i * m + k] * w[i * m + k];
      o[i] = s;
    }
  }
  return out;
}

}  // namespace

DenseMatrix mlp_forward(const MlpParams& params, const DenseMatrix& x) {
  check_data(params, x);
  return output_layer(params, hidden_layer(params, x));
}

MlpEvaluation mlp_objective(const MlpParams& params, const DenseMatrix& x, double lambda1,
                            const ProximalTerm* prox, const AugmentedTerms& terms) {
  check_data(params, x);
  const std::size_t n = x.rows();
  const std::size_t d = params.d;
  const std::size_t m = params.hidden;
  if (n == 0) throw ShapeError("mlp_objective: data has no rows");

  DenseMatrix hidden = hidden_layer(params, x);
  DenseMatrix out = output_layer(params, hidden);

  MlpEvaluation eval;
  eval.gradient.output = DenseMatrix(d, m);
  eval.gradient.hidden_bias = DenseMatrix(d, m);

  // Residual scaled by 1/n doubles as d(loss)/d(out).
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  auto gout = eval.gradient.output.values();
  auto gbias = eval.gradient.hidden_bias.values();
  const auto wout = params.output.values();
  // hidden is overwritten in place with d(loss)/d(pre-activation).
  for (std::size_t r = 0; r < n; ++r) {
    auto h = hidden.row(r);
    const auto xr = x.row(r);
    const auto o = out.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double res = o[i] - xr[i];
      loss += res * res;
      const double dres = res * inv_n;
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t c = i * m + k;
        const double a = h[c];
        gout[c] += a * dres;
        const double da = dres * wout[c];
        const double dz = params.activation == Activation::Sigmoid ? da * a * (1.0 - a) : da;
        gbias[c] += dz;
        h[c] = dz;
      }
    }
  }
  eval.loss = 0.5 * loss * inv_n;
  eval.gradient.first_layer = matmul_tn(hidden, x);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < m; ++k) eval.gradient.first_layer(i * m + k, i) = 0.0;

  const double prox_value = add_proximal(params.first_layer, prox, eval.gradient.first_layer);

  const auto acyc = first_layer_acyclicity(params.first_layer, d, m);
  eval.h = acyc.value;
  const double coef = terms.rho * eval.h + terms.alpha;
  if (coef != 0.0) {
    auto g = eval.gradient.first_layer.values();
    auto a = acyc.gradient.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += coef * a[i];
  }
  eval.value = eval.loss + lambda1 * l1_norm(params.first_layer) + prox_value +
               0.5 * terms.rho * eval.h * eval.h + terms.alpha * eval.h;
  return eval;
}

DenseMatrix first_layer_squares(const DenseMatrix& first_layer, std::size_t d,
                                std::size_t hidden) {
  if (first_layer.rows() != d * hidden || first_layer.cols() != d) {
    throw ShapeError("first layer is " + shape_string(first_layer) + ", expected " +
                     std::to_string(d * hidden) + "x" + std::to_string(d));
  }
  DenseMatrix s(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < hidden; ++k) {
      const auto row = first_layer.row(i * hidden + k);
      for (std::size_t j = 0; j < d; ++j) s(j, i) += row[j] * row[j];
    }
  for (std::size_t i = 0; i < d; ++i) s(i, i) = 0.0;
  return s;
}

DenseMatrix extract_weight_matrix(const DenseMatrix& first_layer, std::size_t d,
                                  std::size_t hidden) {
  DenseMatrix w = first_layer_squares(first_layer, d, hidden);
  for (double& v : w.values()) v = std::sqrt(v);
  return w;
}

FirstLayerAcyclicity first_layer_acyclicity(const DenseMatrix& first_layer, std::size_t d,
                                            std::size_t hidden) {
  const auto constraint = trace_exp_constraint(first_layer_squares(first_layer, d, hidden));
  FirstLayerAcyclicity out;
  out.value = constraint.value;
  out.gradient = DenseMatrix(d * hidden, d);
  // d h / d A_i(k, j) = (e^S)ᵀ(j, i) · 2 A_i(k, j)
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < hidden; ++k) {
      const auto a = first_layer.row(i * hidden + k);
      auto g = out.gradient.row(i * hidden + k);
      for (std::size_t j = 0; j < d; ++j) {
        g[j] = j == i ? 0.0 : 2.0 * a[j] * constraint.gradient(j, i);
      }
    }
  return out;
}

void save_checkpoint(std::ostream& out, const MlpParams& params) {
  params.validate();
  nlohmann::json j;
  j["family"] = "mlp";
  j["d"] = params.d;
  j["hidden"] = params.hidden;
  j["activation"] = to_string(params.activation);
  j["layers"] = {layer_json("first_layer", params.first_layer),
                 layer_json("hidden_bias", params.hidden_bias),
                 layer_json("output", params.output)};
  out << j.dump() << '\n';
}

MlpParams load_mlp_checkpoint(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  if (j.at("family").get<std::string>() != "mlp") {
    throw std::runtime_error("checkpoint: not an MLP checkpoint");
  }
  MlpParams p;
  p.d = j.at("d").get<std::size_t>();
  p.hidden = j.at("hidden").get<std::size_t>();
  p.activation = parse_activation(j.at("activation").get<std::string>());
  const auto& layers = j.at("layers");
  p.first_layer = layer_from_json(layers, "first_layer");
  p.hidden_bias = layer_from_json(layers, "hidden_bias");
  p.output = layer_from_json(layers, "output");
  p.validate();
  return p;
}

void save_checkpoint(std::ostream& out, const LinearParams& params) {
  nlohmann::json j;
  j["family"] = "linear";
  j["layers"] = {layer_json("w", params.w)};
  out << j.dump() << '\n';
}

LinearParams load_linear_checkpoint(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  if (j.at("family").get<std::string>() != "linear") {
    throw std::runtime_error("checkpoint: not a linear checkpoint");
  }
  LinearParams p{layer_from_json(j.at("layers"), "w")};
  if (!p.w.is_square()) throw ShapeError("checkpoint: linear W must be square");
  return p;
}

}  // namespace fedcausal
