#pragma once

#include "fedcausal/config.hpp"
#include "fedcausal/engine.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fedcausal {

struct RunRecord {
  Method method = Method::FedCausal;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::optional<StructureMetrics> metrics;
  double final_h = 0.0;
  std::size_t rounds = 0;
  std::size_t bytes = 0;
  double wall_seconds = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
};

struct MethodSummary {
  Method method = Method::FedCausal;
  std::size_t runs = 0;
  std::size_t failed = 0;
  MetricSummary shd, tpr, fdr, nnz, final_h;
  double max_h = 0.0;
};

struct SummaryTable {
  std::vector<MethodSummary> rows;
};

MetricSummary summarize(const std::vector<double>& values);

/// Summary over successful runs, one row per method in first-seen order.
SummaryTable summarize_runs(const std::vector<RunRecord>& records);

struct ExperimentResult {
  std::vector<RunRecord> records;
  SummaryTable summary;
  /// Per-round trajectories of every run, kept in memory when requested.
  std::vector<std::pair<RunRecord, std::vector<RoundRecord>>> trajectories;

  [[nodiscard]] bool all_ok() const;
};

struct ExecutionOptions {
  std::size_t parallel = 1;
  /// Print one line per finished run to stderr.
  bool verbose = false;
};

/// Dataset for one seed: synthetic draws use the seed for graph, mechanisms and
/// partition; the Sachs source subsamples and splits rows with it.
FederatedDataset build_dataset(const ExperimentConfig& config, std::uint64_t seed);

/// Trains every (method, seed) pair and writes under config.output_dir:
/// runs/<method>_seed<seed>.json, runs.csv, summary.csv, optionally
/// trajectory.csv, and manifest.json. Failed runs are rows with an error.
ExperimentResult run_experiment(const ExperimentConfig& config, const ExecutionOptions& exec = {});

struct SweepResult {
  std::vector<std::pair<std::string, ExperimentResult>> points;
  [[nodiscard]] bool all_ok() const;
};

/// The per-value configs a sweep runs, validated, with their output dirs.
std::vector<std::pair<std::string, ExperimentConfig>> sweep_points(const ExperimentConfig& config);

/// One run_experiment per axis value under <output>/<axis>_<value>/, plus
/// sweep_long.csv (axis, value, method, metric, mean, std, runs) and
/// sweep_trajectory.csv at the top level.
SweepResult sweep(const ExperimentConfig& config, const ExecutionOptions& exec = {});

/// Rebuilds a summary from a runs.csv file.
std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path);
void write_runs_csv(const std::filesystem::path& path, const std::vector<RunRecord>& records);
void write_summary_csv(const std::filesystem::path& path, const SummaryTable& table);

/// Recomputes summary.csv for every runs.csv under `dir` and returns the tables.
std::vector<std::pair<std::filesystem::path, SummaryTable>> report(const std::filesystem::path& dir);

/// Writes one dataset per seed under dir/seed_<s>/.
void generate_datasets(const ExperimentConfig& config, const std::filesystem::path& dir);

/// Path of the bundled Sachs files when the config leaves them empty.
std::filesystem::path default_data_dir();

std::string version_string();

}  // namespace fedcausal
