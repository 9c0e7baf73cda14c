#pragma once

#include "fedcausal/engine.hpp"
#include "fedcausal/graphs.hpp"
#include "fedcausal/sem.hpp"
#include "fedcausal/transport.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedcausal {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DataSource { Synthetic, Sachs };

std::string to_string(DataSource source);
DataSource parse_data_source(const std::string& text);

enum class SweepAxis { None, Variables, Clients, Partition };

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& text);

struct ExperimentConfig {
  std::string name = "experiment";
  DataSource source = DataSource::Synthetic;

  GraphModel graph;
  std::size_t d = 10;

  FederatedSpec data;

  std::filesystem::path sachs_csv;
  std::filesystem::path sachs_truth;
  std::size_t sachs_samples = 7460;

  ModelFamily family = ModelFamily::Linear;
  HyperParams hyper = HyperParams::defaults_for(ModelFamily::Linear);

  std::vector<Method> methods{Method::FedCausal};
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "results";
  /// Write the per-round trajectory file.
  bool trajectory = false;

  TransportKind transport = TransportKind::InProcess;
  std::string endpoint = "127.0.0.1:0";

  SweepAxis sweep_axis = SweepAxis::None;
  /// d values, client counts, or partition modes ("even", "packages").
  std::vector<std::string> sweep_values;
  /// Samples held across all clients in a client-count sweep.
  std::size_t sweep_total_samples = 2048;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Parses INI text with sections [experiment], [graph], [data], [model],
/// [hyper], [local_solver], [server_solver], [transport] and [sweep].
/// Unknown sections or keys are errors; absent keys keep their defaults.
/// Family-dependent defaults (λ1, local budget) follow [model] family.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical INI text with every key present; parse_config_text inverts it.
std::string emit_config(const ExperimentConfig& config);

/// Hex SHA-256 of the canonical text.
std::string config_hash(const ExperimentConfig& config);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace fedcausal
