#pragma once

#include "fedcausal/dense_matrix.hpp"
#include "fedcausal/graphs.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedcausal {

enum class MechanismKind { LG, AnmMlp, AddGp, Mim };

inline constexpr MechanismKind kAllMechanisms[] = {MechanismKind::LG, MechanismKind::AnmMlp,
                                                   MechanismKind::AddGp, MechanismKind::Mim};

std::string to_string(MechanismKind kind);
MechanismKind parse_mechanism_kind(const std::string& text);

/// Generation constants. None of them are pinned down by the method itself, so
/// all are configurable and recorded in dataset manifests.
struct MechanismSettings {
  /// Linear and index weights are drawn uniformly from ±[weight_low, weight_high].
  double weight_low = 0.5;
  double weight_high = 2.0;
  std::size_t mlp_hidden = 100;
  double gp_bandwidth = 1.0;
  double noise_scale = 1.0;
};

/// Parameters of one structural equation x_i = f_i(parents) + noise.
struct VariableMechanism {
  std::vector<std::size_t> parents;
  /// LG: one weight per parent. MIM: three index vectors a, b, c laid end to end.
  std::vector<double> weights;
  /// ANM-MLP: parents x hidden input weights (row-major) and hidden output weights.
  DenseMatrix hidden_in;
  std::vector<double> hidden_out;
  /// ADD-GP: seed of the per-parent function draws.
  std::uint64_t function_seed = 0;
  double noise_scale = 1.0;
};

struct SemInstance {
  DagSpec dag;
  MechanismKind kind = MechanismKind::LG;
  MechanismSettings settings;
  std::vector<VariableMechanism> variables;
};

SemInstance instantiate_mechanism(const DagSpec& dag, MechanismKind kind, std::uint64_t seed,
                                  const MechanismSettings& settings = {});

/// Draws n rows. Columns are produced in topological order; variable j's noise
/// comes from its own stream derived from (seed, j).
DenseMatrix simulate(const SemInstance& sem, std::size_t n, std::uint64_t seed);

/// Same as simulate, with an explicit noise seed per variable.
DenseMatrix simulate_with_noise_seeds(const SemInstance& sem, std::size_t n,
                                      std::span<const std::uint64_t> noise_seeds);

/// Centers every column and scales it to unit variance in place.
void standardize_columns(DenseMatrix& x);

struct ClientDataset {
  std::size_t client_id = 0;
  DenseMatrix x;
  /// Absent for real data.
  std::optional<MechanismKind> kind;
  std::uint64_t mechanism_seed = 0;

  [[nodiscard]] std::size_t n() const noexcept { return x.rows(); }
  [[nodiscard]] std::size_t d() const noexcept { return x.cols(); }
};

struct FederatedDataset {
  std::vector<ClientDataset> clients;
  std::optional<DagSpec> truth;

  [[nodiscard]] std::size_t total_samples() const noexcept;
  [[nodiscard]] std::size_t d() const;
  /// Row-wise concatenation of every client's data.
  [[nodiscard]] DenseMatrix pooled() const;
};

struct PartitionPlan {
  enum class Mode { Even, Packages };
  Mode mode = Mode::Even;
  std::size_t clients = 10;
  std::size_t samples_per_client = 200;
  std::size_t packages = 40;
  std::size_t package_size = 50;

  static PartitionPlan even(std::size_t clients, std::size_t samples_per_client);
  static PartitionPlan by_packages(std::size_t clients, std::size_t packages,
                                   std::size_t package_size);

  [[nodiscard]] std::size_t total_samples() const noexcept;
};

/// Per-client sample counts. Package mode shuffles the packages, gives every
/// client one, then assigns the remainder uniformly at random.
std::vector<std::size_t> client_sizes(const PartitionPlan& plan, std::uint64_t seed);

enum class Regime { Iid, Heterogeneous };

std::string to_string(Regime regime);
Regime parse_regime(const std::string& text);

struct FederatedSpec {
  PartitionPlan partition;
  Regime regime = Regime::Iid;
  /// Mechanism shared by all clients in the iid regime.
  MechanismKind iid_kind = MechanismKind::LG;
  MechanismSettings settings;
  bool standardize = false;
};

/// iid: one SemInstance, disjoint row blocks per client. Heterogeneous: each
/// client draws its kind uniformly from the four families and gets its own
/// parameters over the shared DAG.
FederatedDataset make_federated(const DagSpec& dag, const FederatedSpec& spec, std::uint64_t seed);

/// Parses a numeric CSV; a non-numeric first row is treated as a header.
struct CsvTable {
  std::vector<std::string> header;
  DenseMatrix values;
};
CsvTable read_numeric_csv(const std::filesystem::path& path);

struct SachsData {
  DenseMatrix x;
  DagSpec truth;
  std::vector<std::string> names;
};

inline constexpr std::size_t kSachsVariables = 11;

/// Loads the protein-signalling measurements and the consensus edge list.
SachsData load_sachs(const std::filesystem::path& csv_path,
                     const std::filesystem::path& truth_path);

/// Random subsample of `total` rows split evenly across `clients`.
FederatedDataset federate_rows(const DenseMatrix& x, std::optional<DagSpec> truth,
                               std::size_t total, std::size_t clients, std::uint64_t seed,
                               bool standardize);

/// Writes client_<k>.csv per client and manifest.json into `dir`.
void write_federated_dataset(const std::filesystem::path& dir, const FederatedDataset& data,
                             const MechanismSettings& settings, std::uint64_t seed);

}  // namespace fedcausal
