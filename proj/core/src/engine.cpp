#include "fedcausal/engine.hpp"

#include "fedcausal/linalg.hpp"
#include "fedcausal/random.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

namespace fedcausal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_positive(bool ok, const char* field, const std::string& why) {
  if (!ok) throw std::invalid_argument(std::string("hyper.") + field + ": " + why);
}

std::string solver_field(const char* prefix, const char* name) {
  return std::string(prefix) + "." + name;
}

void validate_solver(const SolverConfig& c, const char* prefix) {
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(solver_field(prefix, "solver") + ": " + e.what());
  }
}

}  // namespace

HyperParams HyperParams::defaults_for(ModelFamily family) {
  HyperParams h;
  h.server_solver.max_iterations = 500;
  h.server_solver.gradient_tolerance = 1e-9;
  if (family == ModelFamily::Linear) {
    h.lambda1 = 0.1;
    h.local_solver.max_iterations = 100;
  } else {
    h.lambda1 = 0.01;
    h.weight_decay = 0.01;
    h.local_solver.max_iterations = 300;
  }
  return h;
}

void HyperParams::validate() const {
  require_positive(gamma > 0.0 && gamma < 1.0, "gamma", "must lie in (0, 1)");
  require_positive(beta > 1.0, "beta", "must be > 1");
  require_positive(rho_init > 0.0, "rho_init", "must be > 0");
  require_positive(h_tol > 0.0, "h_tol", "must be > 0");
  require_positive(rho_max >= rho_init, "rho_max", "must be >= rho_init");
  require_positive(std::isfinite(alpha_init), "alpha_init", "must be finite");
  require_positive(lambda1 >= 0.0, "lambda1", "must be >= 0");
  require_positive(lambda2 >= 0.0, "lambda2", "must be >= 0");
  require_positive(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require_positive(threshold >= 0.0, "threshold", "must be >= 0");
  require_positive(max_outer_rounds >= 1, "max_outer_rounds", "must be >= 1");
  require_positive(local_epochs >= 1, "local_epochs", "must be >= 1");
  require_positive(hidden_units >= 1, "hidden_units", "must be >= 1");
  validate_solver(local_solver, "local");
  validate_solver(server_solver, "server");
}

RoundState RoundState::initial(const HyperParams& hyper) {
  RoundState s;
  s.alpha = hyper.alpha_init;
  s.rho = hyper.rho_init;
  return s;
}

std::string to_string(FirstLayerInit init) {
  return init == FirstLayerInit::Zero ? "zero" : "uniform";
}

FirstLayerInit parse_first_layer_init(const std::string& text) {
  if (text == "zero") return FirstLayerInit::Zero;
  if (text == "uniform") return FirstLayerInit::Uniform;
  throw std::invalid_argument("unknown first-layer init '" + text + "' (expected zero or uniform)");
}

std::string to_string(Control control) {
  switch (control) {
    case Control::ContinueInner: return "continue_inner";
    case Control::AdvanceOuter: return "advance_outer";
    case Control::Stop: return "stop";
  }
  return "?";
}

ScheduleStep schedule_step(double h_now, const RoundState& state, const HyperParams& hyper) {
  if (!(h_now >= 0.0)) throw std::invalid_argument("schedule_step: h must be >= 0");
  ScheduleStep out{state, Control::ContinueInner};
  RoundState& s = out.state;
  if (h_now > hyper.h_tol && h_now > hyper.gamma * s.previous_h) {
    s.rho *= hyper.beta;
    if (s.rho < hyper.rho_max) return out;
  }
  s.previous_h = h_now;
  s.alpha += s.rho * h_now;
  s.outer_round += 1;
  if (h_now <= hyper.h_tol || s.rho >= hyper.rho_max || s.outer_round >= hyper.max_outer_rounds) {
    out.control = Control::Stop;
  } else {
    out.control = Control::AdvanceOuter;
  }
  return out;
}

DenseMatrix weighted_average(std::span<const DenseMatrix> blocks,
                             std::span<const std::size_t> sizes) {
  if (blocks.empty()) throw std::invalid_argument("weighted_average: no blocks");
  if (blocks.size() != sizes.size()) {
    throw std::invalid_argument("weighted_average: " + std::to_string(blocks.size()) +
                                " blocks but " + std::to_string(sizes.size()) + " sizes");
  }
  double total = 0.0;
  for (auto n : sizes) total += static_cast<double>(n);
  if (total <= 0.0) throw std::invalid_argument("weighted_average: total size is zero");
  DenseMatrix out(blocks[0].rows(), blocks[0].cols());
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    require_same_shape(out, blocks[k], "weighted_average");
    const double w = static_cast<double>(sizes[k]) / total;
    auto o = out.values();
    auto b = blocks[k].values();
    for (std::size_t t = 0; t < o.size(); ++t) o[t] += w * b[t];
  }
  return out;
}

std::size_t ModelShape::block_rows() const noexcept {
  return family == ModelFamily::Linear ? d : d * hidden;
}

std::uint32_t ModelShape::block_stacks() const noexcept {
  return family == ModelFamily::Linear ? 1U : static_cast<std::uint32_t>(d);
}

std::vector<bool> ModelShape::pinned_mask() const {
  std::vector<bool> mask(block_rows() * d, false);
  if (family == ModelFamily::Linear) {
    for (std::size_t i = 0; i < d; ++i) mask[i * d + i] = true;
  } else {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < hidden; ++k) mask[(i * hidden + k) * d + i] = true;
  }
  return mask;
}

DenseMatrix ModelShape::weight_matrix(const DenseMatrix& block) const {
  if (family == ModelFamily::Linear) return block;
  return extract_weight_matrix(block, d, hidden);
}

FirstLayerAcyclicity ModelShape::acyclicity(const DenseMatrix& block) const {
  if (family == ModelFamily::Mlp) return first_layer_acyclicity(block, d, hidden);
  return {acyclicity_value(block), acyclicity_gradient(block)};
}

DenseMatrix initial_first_layer(const ModelShape& shape, const HyperParams& hyper,
                                std::uint64_t seed) {
  DenseMatrix block(shape.block_rows(), shape.d);
  if (shape.family == ModelFamily::Linear || hyper.first_layer_init == FirstLayerInit::Zero) {
    return block;
  }
  std::mt19937_64 rng(derive_seed(seed, seed_stream::kFirstLayer));
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.d));
  std::uniform_real_distribution<double> u(-bound, bound);
  const auto pinned = shape.pinned_mask();
  auto v = block.values();
  for (std::size_t t = 0; t < v.size(); ++t) {
    const double x = u(rng);
    v[t] = pinned[t] ? 0.0 : x;
  }
  return block;
}

GlobalUpdateResult global_update(const ModelShape& shape, std::span<const DenseMatrix> uploads,
                                 std::span<const std::size_t> sizes, double alpha, double rho,
                                 const std::optional<DenseMatrix>& warm_start,
                                 const SolverConfig& solver, bool constrained) {
  const DenseMatrix avg = weighted_average(uploads, sizes);
  if (avg.rows() != shape.block_rows() || avg.cols() != shape.d) {
    throw ShapeError("global_update: uploads are " + shape_string(avg));
  }
  // Σ w_k||θ - θ_k||² = ||θ - θ̄||² + Σ w_k||θ_k - θ̄||²; the second part is constant.
  double total = 0.0;
  for (auto n : sizes) total += static_cast<double>(n);
  double spread = 0.0;
  for (std::size_t k = 0; k < uploads.size(); ++k) {
    spread += static_cast<double>(sizes[k]) / total * (uploads[k] - avg).squared_norm();
  }

  GlobalUpdateResult out;
  if (!constrained) {
    out.block = avg;
    out.objective = spread;
    out.h = shape.acyclicity(avg).value;
    return out;
  }

  const auto pinned = shape.pinned_mask();
  const std::size_t rows = shape.block_rows();
  const std::size_t cols = shape.d;
  Objective objective = [&](std::span<const double> x, std::span<double> g) {
    DenseMatrix theta(rows, cols, std::vector<double>(x.begin(), x.end()));
    const auto acyc = shape.acyclicity(theta);
    const double coef = rho * acyc.value + alpha;
    auto a = avg.values();
    auto ag = acyc.gradient.values();
    double value = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      const double diff = x[t] - a[t];
      value += diff * diff;
      g[t] = pinned[t] ? 0.0 : 2.0 * diff + coef * ag[t];
    }
    return value + 0.5 * rho * acyc.value * acyc.value + alpha * acyc.value;
  };

  std::vector<double> x0 = warm_start ? warm_start->storage() : avg.storage();
  if (x0.size() != avg.storage().size()) {
    throw ShapeError("global_update: warm start is " + shape_string(*warm_start));
  }
  for (std::size_t t = 0; t < x0.size(); ++t)
    if (pinned[t]) x0[t] = 0.0;
  auto result = minimize(objective, std::move(x0), solver);
  out.block = DenseMatrix(rows, cols, std::move(result.x));
  out.h = shape.acyclicity(out.block).value;
  out.objective = result.value + spread;
  out.iterations = result.iterations;
  return out;
}

ClientState::ClientState(std::size_t client_id, DenseMatrix x, const ModelShape& shape,
                         const HyperParams& hyper, std::uint64_t init_seed)
    : client_id_(client_id), x_(std::move(x)), shape_(shape) {
  if (x_.cols() != shape_.d) {
    throw ShapeError("client " + std::to_string(client_id) + ": data has " +
                     std::to_string(x_.cols()) + " columns, model expects " +
                     std::to_string(shape_.d));
  }
  if (x_.rows() == 0) throw ShapeError("client " + std::to_string(client_id) + " has no samples");
  if (shape_.family == ModelFamily::Linear) {
    linear_.w = DenseMatrix(shape_.d, shape_.d);
    linear_loss_.emplace(x_);
  } else {
    mlp_ = MlpParams::initialize(shape_.d, shape_.hidden, init_seed, hyper.activation);
  }
}

DenseMatrix ClientState::first_layer() const {
  return shape_.family == ModelFamily::Linear ? linear_.w : mlp_.first_layer;
}

void ClientState::set_first_layer(const DenseMatrix& block) {
  if (block.rows() != shape_.block_rows() || block.cols() != shape_.d) {
    throw ShapeError("client " + std::to_string(client_id_) + ": block is " +
                     shape_string(block) + ", expected " + std::to_string(shape_.block_rows()) +
                     "x" + std::to_string(shape_.d));
  }
  DenseMatrix copy = block;
  const auto pinned = shape_.pinned_mask();
  auto v = copy.values();
  for (std::size_t t = 0; t < v.size(); ++t)
    if (pinned[t]) v[t] = 0.0;
  if (shape_.family == ModelFamily::Linear) {
    linear_.w = std::move(copy);
  } else {
    mlp_.first_layer = std::move(copy);
  }
}

ClientState::Evaluation ClientState::evaluate(double lambda1, const ProximalTerm* prox,
                                              const AugmentedTerms& terms) const {
  if (shape_.family == ModelFamily::Linear) {
    const auto e = linear_loss_->evaluate(linear_.w, lambda1, prox, terms);
    return {e.value, e.loss, e.h};
  }
  const auto e = mlp_objective(mlp_, x_, lambda1, prox, terms);
  return {e.value, e.loss, e.h};
}

// Packs the client's parameters as [θ¹⁺, θ¹⁻, rest] so that the L1 norm of
// the first layer becomes the linear term λ1·Σ(θ¹⁺ + θ¹⁻) over a nonnegative box.
struct LocalSolve {
  static LocalUpdateResult run(ClientState& c, double lambda1, double decay,
                               const ProximalTerm* prox, const AugmentedTerms& terms,
                               const SolverConfig& solver) {
    const ModelShape& shape = c.shape_;
    const std::size_t nfirst = shape.block_rows() * shape.d;
    const auto pinned = shape.pinned_mask();
    const bool linear = shape.family == ModelFamily::Linear;
    const std::size_t nrest = linear ? 0 : 2 * shape.d * shape.hidden;

    std::vector<double> x0(2 * nfirst + nrest, 0.0);
    std::vector<double> lower(x0.size(), -kInf);
    {
      const DenseMatrix first = c.first_layer();
      auto f = first.values();
      for (std::size_t t = 0; t < nfirst; ++t) {
        x0[t] = std::max(f[t], 0.0);
        x0[nfirst + t] = std::max(-f[t], 0.0);
        lower[t] = 0.0;
        lower[nfirst + t] = 0.0;
      }
      if (!linear) {
        const auto hb = c.mlp_.hidden_bias.values();
        const auto out = c.mlp_.output.values();
        std::copy(hb.begin(), hb.end(), x0.begin() + static_cast<std::ptrdiff_t>(2 * nfirst));
        std::copy(out.begin(), out.end(),
                  x0.begin() + static_cast<std::ptrdiff_t>(2 * nfirst + hb.size()));
      }
    }

    MlpParams scratch = c.mlp_;
    DenseMatrix w(shape.d, shape.d);
    auto unpack = [&](std::span<const double> x) {
      auto dst = linear ? w.values() : scratch.first_layer.values();
      for (std::size_t t = 0; t < nfirst; ++t) dst[t] = x[t] - x[nfirst + t];
      if (!linear) {
        auto hb = scratch.hidden_bias.values();
        auto out = scratch.output.values();
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(2 * nfirst), hb.size(), hb.begin());
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(2 * nfirst + hb.size()), out.size(),
                    out.begin());
      }
    };

    Objective objective = [&](std::span<const double> x, std::span<double> g) {
      unpack(x);
      double value = 0.0;
      std::span<const double> gfirst;
      LinearEvaluation le;
      MlpEvaluation me;
      if (linear) {
        le = c.linear_loss_->evaluate(w, 0.0, prox, terms);
        value = le.value;
        gfirst = le.gradient.values();
      } else {
        me = mlp_objective(scratch, c.x_, 0.0, prox, terms);
        value = me.value;
        gfirst = me.gradient.first_layer.values();
        const auto ghb = me.gradient.hidden_bias.values();
        const auto gout = me.gradient.output.values();
        std::copy(ghb.begin(), ghb.end(), g.begin() + static_cast<std::ptrdiff_t>(2 * nfirst));
        std::copy(gout.begin(), gout.end(),
                  g.begin() + static_cast<std::ptrdiff_t>(2 * nfirst + ghb.size()));
        if (decay > 0.0) {
          const std::size_t off = 2 * nfirst + ghb.size();
          double ridge = 0.0;
          for (std::size_t t = 0; t < gout.size(); ++t) {
            ridge += x[off + t] * x[off + t];
            g[off + t] += decay * x[off + t];
          }
          value += 0.5 * decay * ridge;
        }
      }
      double l1 = 0.0;
      for (std::size_t t = 0; t < nfirst; ++t) {
        l1 += x[t] + x[nfirst + t];
        if (pinned[t]) {
          g[t] = 0.0;
          g[nfirst + t] = 0.0;
        } else if (linear || decay == 0.0) {
          g[t] = gfirst[t] + lambda1;
          g[nfirst + t] = -gfirst[t] + lambda1;
        } else {
          const double theta = x[t] - x[nfirst + t];
          value += 0.5 * decay * theta * theta;
          g[t] = gfirst[t] + decay * theta + lambda1;
          g[nfirst + t] = -gfirst[t] - decay * theta + lambda1;
        }
      }
      return value + lambda1 * l1;
    };

    auto result = minimize(objective, std::move(x0), solver, lower);
    if (!std::isfinite(result.value)) {
      throw SolverError("client " + std::to_string(c.client_id_) + ": local objective diverged");
    }
    unpack(result.x);
    if (linear) {
      c.linear_.w = w;
    } else {
      c.mlp_ = scratch;
    }
    const auto after = c.evaluate(lambda1, prox, terms);
    LocalUpdateResult out;
    out.value_before = result.trace.front();
    out.value_after = result.value;
    out.loss = after.loss;
    out.h = after.h;
    out.iterations = result.iterations;
    out.status = result.status;
    return out;
  }
};

LocalUpdateResult local_update(ClientState& client, const DenseMatrix& global_block, double alpha,
                               double rho, const HyperParams& hyper, bool anchor) {
  if (!std::isfinite(alpha) || !std::isfinite(rho)) {
    throw std::invalid_argument("local_update: alpha and rho must be finite");
  }
  client.set_first_layer(global_block);
  ProximalTerm prox{hyper.lambda2, client.first_layer()};
  const AugmentedTerms terms{alpha, rho};
  LocalUpdateResult first;
  for (std::size_t e = 0; e < hyper.local_epochs; ++e) {
    auto r = LocalSolve::run(client, hyper.lambda1, hyper.weight_decay,
                             anchor ? &prox : nullptr, terms, hyper.local_solver);
    if (e == 0) {
      first = r;
    } else {
      first.value_after = r.value_after;
      first.loss = r.loss;
      first.h = r.h;
      first.iterations += r.iterations;
      first.status = r.status;
    }
  }
  return first;
}

LocalUpdateResult solve_subproblem(ClientState& client, double alpha, double rho,
                                   const HyperParams& hyper) {
  return LocalSolve::run(client, hyper.lambda1, hyper.weight_decay, nullptr,
                         AugmentedTerms{alpha, rho}, hyper.local_solver);
}

std::string to_string(Method method) {
  switch (method) {
    case Method::FedCausal: return "fedcausal";
    case Method::NoAll: return "no_all";
    case Method::NoAvg: return "no_avg";
    case Method::NoWoAcy: return "no_woacy";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  if (text == "fedcausal") return Method::FedCausal;
  if (text == "no_all") return Method::NoAll;
  if (text == "no_avg") return Method::NoAvg;
  if (text == "no_woacy") return Method::NoWoAcy;
  throw std::invalid_argument("unknown method '" + text +
                              "' (expected fedcausal, no_all, no_avg or no_woacy)");
}

std::size_t TrainReport::total_bytes() const noexcept {
  return traffic.handshake_bytes + traffic.stop_bytes + traffic.total_upload_bytes() +
         traffic.total_broadcast_bytes();
}

namespace {

using Clock = std::chrono::steady_clock;

ModelShape shape_for(ModelFamily family, std::size_t d, const HyperParams& hyper) {
  return {family, d, family == ModelFamily::Mlp ? hyper.hidden_units : 1};
}

std::optional<StructureMetrics> metrics_for(const DenseMatrix& w, double threshold,
                                            const std::optional<DagSpec>& truth) {
  if (!truth) return std::nullopt;
  return compute_metrics(threshold_graph(w, threshold), *truth);
}

bool communication_cap_hit(const HyperParams& hyper, std::size_t rounds) {
  return hyper.max_communication_rounds > 0 && rounds >= hyper.max_communication_rounds;
}

void finalize(TrainReport& report, const ModelShape& shape, const DenseMatrix& block,
              const DenseMatrix& w, const HyperParams& hyper, const std::optional<DagSpec>& truth) {
  report.final_block = block;
  report.final_w = w;
  report.final_h = acyclicity_value(w);
  report.graph = threshold_graph(w, hyper.threshold);
  report.metrics = metrics_for(w, hyper.threshold, truth);
  if (!report.rounds.empty()) {
    report.h_tol_reached = report.rounds.back().h_schedule <= hyper.h_tol;
  }
  if (!is_acyclic(report.graph)) {
    report.warnings.push_back("thresholded global graph contains a cycle (h = " +
                              std::to_string(report.final_h) + ")");
  }
  (void)shape;
}

std::vector<std::uint64_t> client_seeds(const FederatedDataset& data, std::uint64_t seed,
                                        bool shared) {
  const std::uint64_t base = derive_seed(seed, seed_stream::kModelInit);
  std::vector<std::uint64_t> out;
  for (const auto& c : data.clients) out.push_back(shared ? base : derive_seed(base, c.client_id));
  return out;
}

class ClientNode final : public ClientRole {
 public:
  ClientNode(const ClientDataset& data, const ModelShape& shape, const HyperParams& hyper,
             std::uint64_t seed, bool train_to_convergence)
      : state_(data.client_id, data.x, shape, hyper, seed),
        hyper_(hyper),
        seed_(seed),
        standalone_(train_to_convergence) {}

  [[nodiscard]] std::uint32_t client_id() const override {
    return static_cast<std::uint32_t>(state_.client_id());
  }
  [[nodiscard]] std::uint32_t sample_count() const override {
    return static_cast<std::uint32_t>(state_.sample_count());
  }

  ParameterBlock on_broadcast(const RoundBroadcast& b) override {
    if (standalone_) {
      auto local = centralized_notears(state_.data(), state_.shape().family, hyper_,
                                       seed_, std::nullopt);
      losses_[b.round] = local.rounds.empty() ? 0.0 : local.rounds.back().mean_local_loss;
      return ParameterBlock::from_matrix(local.final_block, state_.shape().block_stacks());
    }
    const auto r = local_update(state_, b.global_block.to_matrix(), b.alpha, b.rho, hyper_);
    losses_[b.round] = r.loss;
    return ParameterBlock::from_matrix(state_.first_layer(), state_.shape().block_stacks());
  }

  [[nodiscard]] const std::map<std::uint32_t, double>& losses() const { return losses_; }

 private:
  ClientState state_;
  HyperParams hyper_;
  std::uint64_t seed_;
  bool standalone_;
  std::map<std::uint32_t, double> losses_;
};

class ServerCoordinator final : public ServerRole {
 public:
  ServerCoordinator(Method method, const ModelShape& shape, const HyperParams& hyper,
                    const std::optional<DagSpec>& truth, TrainReport& report, DenseMatrix initial)
      : method_(method),
        shape_(shape),
        hyper_(hyper),
        truth_(truth),
        report_(report),
        state_(RoundState::initial(hyper)),
        global_(std::move(initial)) {}

  RoundBroadcast open() override { return broadcast(1); }

  std::variant<RoundBroadcast, Stop> aggregate(std::vector<ClientUpload> uploads) override {
    std::vector<DenseMatrix> blocks;
    std::vector<std::size_t> sizes;
    for (const auto& u : uploads) {
      blocks.push_back(u.first_layer.to_matrix());
      sizes.push_back(u.n_k);
    }
    const std::uint32_t round = uploads.front().round;
    if (method_ == Method::NoAvg) return combine_independent(blocks, sizes, round);

    const DenseMatrix avg = weighted_average(blocks, sizes);
    RoundRecord rec;
    rec.round = round;
    rec.outer_round = state_.outer_round;
    rec.rho = state_.rho;
    rec.alpha = state_.alpha;
    rec.h_schedule = shape_.acyclicity(avg).value;

    std::optional<DenseMatrix> warm;
    if (round > 1) warm = global_;
    auto g = global_update(shape_, blocks, sizes, state_.alpha, state_.rho, warm,
                           hyper_.server_solver, method_ != Method::NoWoAcy);
    global_ = std::move(g.block);
    rec.h_global = g.h;
    rec.metrics = metrics_for(shape_.weight_matrix(global_), hyper_.threshold, truth_);

    const auto step = schedule_step(rec.h_schedule, state_, hyper_);
    state_ = step.state;
    rec.control = step.control;
    if (communication_cap_hit(hyper_, report_.rounds.size() + 1)) rec.control = Control::Stop;
    report_.rounds.push_back(rec);
    if (rec.control == Control::Stop) {
      return Stop{ParameterBlock::from_matrix(global_, shape_.block_stacks())};
    }
    return broadcast(round + 1);
  }

  [[nodiscard]] const DenseMatrix& global() const { return global_; }
  [[nodiscard]] const DenseMatrix& final_w() const { return final_w_; }

 private:
  RoundBroadcast broadcast(std::uint32_t round) const {
    return {round, state_.alpha, state_.rho,
            ParameterBlock::from_matrix(global_, shape_.block_stacks())};
  }

  Stop combine_independent(const std::vector<DenseMatrix>& blocks,
                           const std::vector<std::size_t>& sizes, std::uint32_t round) {
    std::vector<DenseMatrix> graphs;
    for (const auto& b : blocks) graphs.push_back(shape_.weight_matrix(b));
    global_ = weighted_average(blocks, sizes);
    final_w_ = weighted_average(graphs, sizes);
    RoundRecord rec;
    rec.round = round;
    rec.h_schedule = acyclicity_value(final_w_);
    rec.h_global = rec.h_schedule;
    rec.metrics = metrics_for(final_w_, hyper_.threshold, truth_);
    rec.control = Control::Stop;
    report_.rounds.push_back(rec);
    return Stop{ParameterBlock::from_matrix(global_, shape_.block_stacks())};
  }

  Method method_;
  ModelShape shape_;
  HyperParams hyper_;
  const std::optional<DagSpec>& truth_;
  TrainReport& report_;
  RoundState state_;
  DenseMatrix global_;
  DenseMatrix final_w_;
};

TrainReport run_federated(Method method, const FederatedDataset& data, ModelFamily family,
                          const HyperParams& hyper, const RunOptions& options) {
  hyper.validate();
  if (data.clients.empty()) throw std::invalid_argument("run: dataset has no clients");
  const auto start = Clock::now();
  const ModelShape shape = shape_for(family, data.d(), hyper);

  TrainReport report;
  report.method = method;
  report.family = family;

  const auto seeds = client_seeds(data, options.seed, options.shared_init);
  std::vector<std::unique_ptr<ClientNode>> nodes;
  std::vector<ClientRole*> roles;
  for (std::size_t k = 0; k < data.clients.size(); ++k) {
    nodes.push_back(std::make_unique<ClientNode>(data.clients[k], shape, hyper, seeds[k],
                                                 method == Method::NoAvg));
    roles.push_back(nodes.back().get());
  }

  ServerCoordinator server(method, shape, hyper, data.truth, report,
                           initial_first_layer(shape, hyper,
                                               derive_seed(options.seed, seed_stream::kModelInit)));
  SessionConfig session;
  session.clients = data.clients.size();
  session.d = shape.d;
  session.hidden = shape.hidden;
  session.family = family;
  session.transport = options.transport;
  session.endpoint = options.endpoint;

  SessionHooks hooks;
  if (options.record_uploads) {
    hooks.on_upload = [&report](const ClientUpload& u) {
      if (report.uploads.empty() || report.uploads.back().front().round != u.round) {
        report.uploads.emplace_back();
      }
      report.uploads.back().push_back(u);
    };
  }
  report.traffic = run_session(server, roles, session, hooks);

  for (std::size_t r = 0; r < report.rounds.size(); ++r) {
    auto& rec = report.rounds[r];
    if (r < report.traffic.rounds.size()) {
      rec.upload_bytes = report.traffic.rounds[r].upload_bytes;
      rec.broadcast_bytes = report.traffic.rounds[r].broadcast_bytes;
    }
    double sum = 0.0;
    for (const auto& node : nodes) {
      const auto it = node->losses().find(rec.round);
      if (it != node->losses().end()) sum += it->second;
    }
    rec.mean_local_loss = sum / static_cast<double>(nodes.size());
  }

  if (method == Method::NoAvg) {
    finalize(report, shape, server.global(), server.final_w(), hyper, data.truth);
  } else {
    finalize(report, shape, server.global(), shape.weight_matrix(server.global()), hyper,
             data.truth);
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

}  // namespace

TrainReport centralized_notears(const DenseMatrix& x, ModelFamily family, const HyperParams& hyper,
                                std::uint64_t seed, const std::optional<DagSpec>& truth) {
  hyper.validate();
  const auto start = Clock::now();
  const ModelShape shape = shape_for(family, x.cols(), hyper);
  ClientState client(0, x, shape, hyper, seed);
  client.set_first_layer(initial_first_layer(shape, hyper, seed));

  TrainReport report;
  report.method = Method::NoAll;
  report.family = family;
  RoundState state = RoundState::initial(hyper);
  for (std::uint32_t round = 1;; ++round) {
    const auto r = solve_subproblem(client, state.alpha, state.rho, hyper);
    RoundRecord rec;
    rec.round = round;
    rec.outer_round = state.outer_round;
    rec.rho = state.rho;
    rec.alpha = state.alpha;
    rec.h_schedule = r.h;
    rec.h_global = r.h;
    rec.mean_local_loss = r.loss;
    rec.metrics = metrics_for(shape.weight_matrix(client.first_layer()), hyper.threshold, truth);
    const auto step = schedule_step(r.h, state, hyper);
    state = step.state;
    rec.control = step.control;
    if (communication_cap_hit(hyper, round)) rec.control = Control::Stop;
    report.rounds.push_back(rec);
    if (rec.control == Control::Stop) break;
  }
  const DenseMatrix block = client.first_layer();
  finalize(report, shape, block, shape.weight_matrix(block), hyper, truth);
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

TrainReport run_fedcausal(const FederatedDataset& data, ModelFamily family,
                          const HyperParams& hyper, const RunOptions& options) {
  return run_federated(Method::FedCausal, data, family, hyper, options);
}

TrainReport run_baseline(Method method, const FederatedDataset& data, ModelFamily family,
                         const HyperParams& hyper, const RunOptions& options) {
  switch (method) {
    case Method::NoAll: {
      if (data.clients.empty()) throw std::invalid_argument("run: dataset has no clients");
      const std::uint64_t seed = derive_seed(options.seed, seed_stream::kModelInit);
      return centralized_notears(data.pooled(), family, hyper, seed, data.truth);
    }
    case Method::NoAvg:
    case Method::NoWoAcy:
      return run_federated(method, data, family, hyper, options);
    case Method::FedCausal:
      break;
  }
  throw std::invalid_argument("run_baseline: fedcausal is not a baseline");
}

TrainReport run_method(Method method, const FederatedDataset& data, ModelFamily family,
                       const HyperParams& hyper, const RunOptions& options) {
  if (method == Method::FedCausal) return run_fedcausal(data, family, hyper, options);
  return run_baseline(method, data, family, hyper, options);
}

}  // namespace fedcausal
