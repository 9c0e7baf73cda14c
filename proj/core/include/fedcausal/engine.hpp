#pragma once

#include "fedcausal/dense_matrix.hpp"
#include "fedcausal/graphs.hpp"
#include "fedcausal/lbfgs.hpp"
#include "fedcausal/models.hpp"
#include "fedcausal/sem.hpp"
#include "fedcausal/transport.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedcausal {

enum class FirstLayerInit { Zero, Uniform };

std::string to_string(FirstLayerInit init);
FirstLayerInit parse_first_layer_init(const std::string& text);

struct HyperParams {
  double alpha_init = 0.0;
  double rho_init = 1.0;
  double h_tol = 1e-11;
  double rho_max = 1e16;
  double gamma = 0.25;
  double beta = 10.0;
  double lambda1 = 0.1;
  double lambda2 = 1e-3;
  /// Ridge ½·μ·||·||² on the MLP first-layer and output weights. Without it
  /// the L1 term can shrink the first layer for free by growing the output.
  double weight_decay = 0.0;
  /// Edge threshold ω applied to |W| after training.
  double threshold = 0.3;
  SolverConfig local_solver;
  SolverConfig server_solver;
  std::size_t max_outer_rounds = 100;
  /// Hard cap on broadcast/upload rounds; 0 means no cap.
  std::size_t max_communication_rounds = 0;
  /// Local solves per broadcast.
  std::size_t local_epochs = 1;
  std::size_t hidden_units = 10;
  Activation activation = Activation::Sigmoid;
  /// Starting first layer of MLP models (the linear W always starts at 0).
  /// Uniform draws ±1/sqrt(d), shared by server and every client.
  FirstLayerInit first_layer_init = FirstLayerInit::Uniform;

  /// Family-specific defaults (λ1 and the local iteration budget differ).
  static HyperParams defaults_for(ModelFamily family);
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Augmented-Lagrangian state shared by server and clients.
struct RoundState {
  double alpha = 0.0;
  double rho = 1.0;
  /// Constraint value at the last dual update; +inf before the first.
  double previous_h = std::numeric_limits<double>::infinity();
  std::size_t outer_round = 0;

  static RoundState initial(const HyperParams& hyper);
};

enum class Control { ContinueInner, AdvanceOuter, Stop };

std::string to_string(Control control);

struct ScheduleStep {
  RoundState state;
  Control control = Control::ContinueInner;
};

/// One pass of the ρ/α schedule for a freshly measured constraint value.
///
/// If h_now > γ·H (and h_now > h_tol) ρ grows by β and the inner loop repeats
/// while ρ < ρ_max. Otherwise H ← h_now and α ← α + ρ·h_now, and the run stops
/// when h_now ≤ h_tol, ρ ≥ ρ_max or the outer-round cap is hit.
ScheduleStep schedule_step(double h_now, const RoundState& state, const HyperParams& hyper);

/// Σ(n_k/n)·block_k with a fixed summation order.
DenseMatrix weighted_average(std::span<const DenseMatrix> blocks,
                             std::span<const std::size_t> sizes);

/// Shape bookkeeping for one model family.
struct ModelShape {
  ModelFamily family = ModelFamily::Linear;
  std::size_t d = 0;
  std::size_t hidden = 1;

  /// d x d for linear, (d*hidden) x d for MLP.
  [[nodiscard]] std::size_t block_rows() const noexcept;
  [[nodiscard]] std::uint32_t block_stacks() const noexcept;
  /// True for coordinates that encode a self-loop and must stay at zero.
  [[nodiscard]] std::vector<bool> pinned_mask() const;
  /// Weighted adjacency of a first-layer block (W itself for linear).
  [[nodiscard]] DenseMatrix weight_matrix(const DenseMatrix& block) const;
  /// h of a first-layer block and its gradient with respect to the block.
  [[nodiscard]] FirstLayerAcyclicity acyclicity(const DenseMatrix& block) const;
};

/// The first block the server broadcasts.
DenseMatrix initial_first_layer(const ModelShape& shape, const HyperParams& hyper,
                                std::uint64_t seed);

struct GlobalUpdateResult {
  DenseMatrix block;
  double objective = 0.0;
  double h = 0.0;
  int iterations = 0;
};

/// Server step: minimize Σ(n_k/n)||θ - θ_k||² + ρ/2·h(θ)² + α·h(θ) from
/// `warm_start` (the weighted average when absent). With `constrained` false
/// the minimizer is the weighted average itself.
GlobalUpdateResult global_update(const ModelShape& shape, std::span<const DenseMatrix> uploads,
                                 std::span<const std::size_t> sizes, double alpha, double rho,
                                 const std::optional<DenseMatrix>& warm_start,
                                 const SolverConfig& solver, bool constrained = true);

/// Everything one client owns. The server never sees this type.
class ClientState {
 public:
  ClientState(std::size_t client_id, DenseMatrix x, const ModelShape& shape,
              const HyperParams& hyper, std::uint64_t init_seed);

  [[nodiscard]] std::size_t client_id() const noexcept { return client_id_; }
  [[nodiscard]] std::size_t sample_count() const noexcept { return x_.rows(); }
  [[nodiscard]] const ModelShape& shape() const noexcept { return shape_; }
  [[nodiscard]] const DenseMatrix& data() const noexcept { return x_; }
  [[nodiscard]] const LinearParams& linear() const noexcept { return linear_; }
  [[nodiscard]] const MlpParams& mlp() const noexcept { return mlp_; }
  MlpParams& mlp() noexcept { return mlp_; }

  /// The block a client uploads: W, or the first-layer stack.
  [[nodiscard]] DenseMatrix first_layer() const;
  void set_first_layer(const DenseMatrix& block);

  struct Evaluation {
    double value = 0.0;
    double loss = 0.0;
    double h = 0.0;
  };
  [[nodiscard]] Evaluation evaluate(double lambda1, const ProximalTerm* prox,
                                    const AugmentedTerms& terms) const;

 private:
  friend struct LocalSolve;
  std::size_t client_id_;
  DenseMatrix x_;
  ModelShape shape_;
  LinearParams linear_;
  MlpParams mlp_;
  std::optional<LinearLoss> linear_loss_;
};

struct LocalUpdateResult {
  double value_before = 0.0;
  double value_after = 0.0;
  double loss = 0.0;
  double h = 0.0;
  int iterations = 0;
  SolverStatus status = SolverStatus::MaxIterations;
};

/// Client step: overwrite the first layer with `global_block`, then minimize
/// the local objective (L1, proximal pull to `global_block`, α/ρ terms) under
/// the local solver budget. `anchor` false drops the proximal term.
LocalUpdateResult local_update(ClientState& client, const DenseMatrix& global_block, double alpha,
                               double rho, const HyperParams& hyper, bool anchor = true);

/// Minimizes the client's objective at fixed (α, ρ) from its current
/// parameters, without overwriting or anchoring. Used by the centralized path.
LocalUpdateResult solve_subproblem(ClientState& client, double alpha, double rho,
                                   const HyperParams& hyper);

enum class Method { FedCausal, NoAll, NoAvg, NoWoAcy };

std::string to_string(Method method);
Method parse_method(const std::string& text);

struct RoundRecord {
  std::uint32_t round = 0;
  std::size_t outer_round = 0;
  /// h of the weighted average of uploads, which drives the schedule.
  double h_schedule = 0.0;
  /// h of the server's minimizer, which is what gets broadcast.
  double h_global = 0.0;
  double mean_local_loss = 0.0;
  /// ρ and α used during the round.
  double rho = 0.0;
  double alpha = 0.0;
  std::size_t upload_bytes = 0;
  std::size_t broadcast_bytes = 0;
  Control control = Control::ContinueInner;
  /// Metrics of the thresholded global after the round, when the truth is known.
  std::optional<StructureMetrics> metrics;
};

struct TrainReport {
  Method method = Method::FedCausal;
  ModelFamily family = ModelFamily::Linear;
  std::vector<RoundRecord> rounds;
  DenseMatrix final_block;
  DenseMatrix final_w;
  Adjacency graph;
  double final_h = 0.0;
  bool h_tol_reached = false;
  std::vector<std::string> warnings;
  std::optional<StructureMetrics> metrics;
  SessionStats traffic;
  /// Uploads per round, kept only when RunOptions::record_uploads is set.
  std::vector<std::vector<ClientUpload>> uploads;
  double wall_seconds = 0.0;

  [[nodiscard]] std::size_t communication_rounds() const noexcept { return rounds.size(); }
  [[nodiscard]] std::size_t total_bytes() const noexcept;
};

struct RunOptions {
  TransportKind transport = TransportKind::InProcess;
  std::string endpoint = "127.0.0.1:0";
  bool record_uploads = false;
  /// Seeds the clients' initial remaining layers.
  std::uint64_t seed = 0;
  /// Start every client from the same remaining layers, so hidden units line
  /// up across clients. False gives each client its own draw.
  bool shared_init = true;
};

TrainReport run_fedcausal(const FederatedDataset& data, ModelFamily family,
                          const HyperParams& hyper, const RunOptions& options = {});

TrainReport run_baseline(Method method, const FederatedDataset& data, ModelFamily family,
                         const HyperParams& hyper, const RunOptions& options = {});

/// Dispatches to run_fedcausal or run_baseline.
TrainReport run_method(Method method, const FederatedDataset& data, ModelFamily family,
                       const HyperParams& hyper, const RunOptions& options = {});

/// Plain augmented-Lagrangian structure learning on one data matrix.
TrainReport centralized_notears(const DenseMatrix& x, ModelFamily family, const HyperParams& hyper,
                                std::uint64_t seed, const std::optional<DagSpec>& truth = {});

}  // namespace fedcausal
