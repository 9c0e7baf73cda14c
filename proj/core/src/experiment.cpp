#include "fedcausal/experiment.hpp"

#include "fedcausal/random.hpp"

#include "json.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef FEDCAUSAL_DEFAULT_DATA_DIR
#define FEDCAUSAL_DEFAULT_DATA_DIR "data"
#endif
#ifndef FEDCAUSAL_VERSION_STRING
#define FEDCAUSAL_VERSION_STRING "0.0.0"
#endif

namespace fedcausal {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version_string() { return FEDCAUSAL_VERSION_STRING; }

fs::path default_data_dir() {
  if (const char* env = std::getenv("FEDCAUSAL_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return FEDCAUSAL_DEFAULT_DATA_DIR;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_num(const std::string& s) {
  if (s.empty()) return std::nan("");
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad number '" + s + "' in CSV");
  }
  return v;
}

std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r' || c == '"') c = ' ';
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json metrics_json(const std::optional<StructureMetrics>& m) {
  if (!m) return nullptr;
  return {{"shd", m->shd}, {"tpr", m->tpr}, {"fdr", m->fdr}, {"nnz", m->nnz}};
}

json run_json(const RunRecord& rec, const TrainReport* report) {
  json j;
  j["method"] = to_string(rec.method);
  j["seed"] = rec.seed;
  j["ok"] = rec.ok;
  if (!rec.ok) j["error"] = rec.error;
  j["metrics"] = metrics_json(rec.metrics);
  j["final_h"] = finite_or_null(rec.final_h);
  j["rounds"] = rec.rounds;
  j["bytes"] = rec.bytes;
  j["wall_seconds"] = rec.wall_seconds;
  if (report != nullptr) {
    j["family"] = to_string(report->family);
    j["h_tol_reached"] = report->h_tol_reached;
    j["warnings"] = report->warnings;
    json rounds = json::array();
    for (const auto& r : report->rounds) {
      rounds.push_back({{"round", r.round},
                        {"outer_round", r.outer_round},
                        {"h_schedule", finite_or_null(r.h_schedule)},
                        {"h_global", finite_or_null(r.h_global)},
                        {"mean_local_loss", finite_or_null(r.mean_local_loss)},
                        {"rho", r.rho},
                        {"alpha", finite_or_null(r.alpha)},
                        {"upload_bytes", r.upload_bytes},
                        {"broadcast_bytes", r.broadcast_bytes},
                        {"control", to_string(r.control)},
                        {"metrics", metrics_json(r.metrics)}});
    }
    j["history"] = rounds;
    json w = json::array();
    for (std::size_t i = 0; i < report->final_w.rows(); ++i) {
      const auto row = report->final_w.row(i);
      w.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["final_w"] = w;
    json edges = json::array();
    for (const auto& [a, b] : report->graph.edges()) edges.push_back({a, b});
    j["edges"] = edges;
    j["traffic"] = {{"handshake_bytes", report->traffic.handshake_bytes},
                    {"stop_bytes", report->traffic.stop_bytes},
                    {"upload_bytes", report->traffic.total_upload_bytes()},
                    {"broadcast_bytes", report->traffic.total_broadcast_bytes()}};
  }
  return j;
}

const char* kTrajectoryHeader =
    "method,seed,round,outer_round,h_schedule,h_global,rho,alpha,mean_local_loss,tpr,shd,"
    "upload_bytes,broadcast_bytes\n";

std::string trajectory_rows(const RunRecord& rec, const std::vector<RoundRecord>& rounds,
                            const std::string& prefix = {}) {
  std::string out;
  for (const auto& r : rounds) {
    out += prefix + to_string(rec.method) + "," + std::to_string(rec.seed) + "," +
           std::to_string(r.round) + "," + std::to_string(r.outer_round) + "," +
           num(r.h_schedule) + "," + num(r.h_global) + "," + num(r.rho) + "," + num(r.alpha) +
           "," + num(r.mean_local_loss) + "," + (r.metrics ? num(r.metrics->tpr) : "") + "," +
           (r.metrics ? std::to_string(r.metrics->shd) : "") + "," +
           std::to_string(r.upload_bytes) + "," + std::to_string(r.broadcast_bytes) + "\n";
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return {std::nan(""), std::nan("")};
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

SummaryTable summarize_runs(const std::vector<RunRecord>& records) {
  std::vector<Method> order;
  for (const auto& r : records)
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
  SummaryTable table;
  for (Method m : order) {
    MethodSummary row;
    row.method = m;
    std::vector<double> shd, tpr, fdr, nnz, h;
    for (const auto& r : records) {
      if (r.method != m) continue;
      ++row.runs;
      if (!r.ok) {
        ++row.failed;
        continue;
      }
      if (r.metrics) {
        shd.push_back(static_cast<double>(r.metrics->shd));
        tpr.push_back(r.metrics->tpr);
        fdr.push_back(r.metrics->fdr);
        nnz.push_back(static_cast<double>(r.metrics->nnz));
      }
      h.push_back(r.final_h);
      row.max_h = std::max(row.max_h, r.final_h);
    }
    row.shd = summarize(shd);
    row.tpr = summarize(tpr);
    row.fdr = summarize(fdr);
    row.nnz = summarize(nnz);
    row.final_h = summarize(h);
    table.rows.push_back(row);
  }
  return table;
}

bool ExperimentResult::all_ok() const {
  return std::all_of(records.begin(), records.end(), [](const RunRecord& r) { return r.ok; });
}

bool SweepResult::all_ok() const {
  return std::all_of(points.begin(), points.end(), [](const auto& p) { return p.second.all_ok(); });
}

FederatedDataset build_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  if (config.source == DataSource::Sachs) {
    const fs::path dir = default_data_dir() / "sachs";
    const fs::path csv = config.sachs_csv.empty() ? dir / "sachs.csv" : config.sachs_csv;
    const fs::path truth = config.sachs_truth.empty() ? dir / "sachs_truth.txt" : config.sachs_truth;
    const auto sachs = load_sachs(csv, truth);
    return federate_rows(sachs.x, sachs.truth, config.sachs_samples, config.data.partition.clients,
                         derive_seed(seed, seed_stream::kSubsample), config.data.standardize);
  }
  const DagSpec dag = sample_dag(config.graph, config.d, derive_seed(seed, seed_stream::kGraph));
  return make_federated(dag, config.data, seed);
}

void write_runs_csv(const fs::path& path, const std::vector<RunRecord>& records) {
  std::string out = "method,seed,status,shd,tpr,fdr,nnz,final_h,rounds,bytes,error\n";
  for (const auto& r : records) {
    out += to_string(r.method) + "," + std::to_string(r.seed) + "," + (r.ok ? "ok" : "failed") + ",";
    if (r.ok && r.metrics) {
      out += std::to_string(r.metrics->shd) + "," + num(r.metrics->tpr) + "," + num(r.metrics->fdr) +
             "," + std::to_string(r.metrics->nnz) + ",";
    } else {
      out += ",,,,";
    }
    out += (r.ok ? num(r.final_h) : "") + "," + std::to_string(r.rounds) + "," +
           std::to_string(r.bytes) + "," + csv_safe(r.error) + "\n";
  }
  write_text(path, out);
}

std::vector<RunRecord> read_runs_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("method,seed,status", 0) != 0) {
    throw std::runtime_error(path.string() + " is not a runs table");
  }
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 11) throw std::runtime_error("malformed row in " + path.string() + ": " + line);
    RunRecord r;
    r.method = parse_method(cells[0]);
    r.seed = std::stoull(cells[1]);
    r.ok = cells[2] == "ok";
    if (!cells[3].empty()) {
      StructureMetrics m;
      m.shd = std::stoull(cells[3]);
      m.tpr = parse_num(cells[4]);
      m.fdr = parse_num(cells[5]);
      m.nnz = std::stoull(cells[6]);
      r.metrics = m;
    }
    r.final_h = cells[7].empty() ? 0.0 : parse_num(cells[7]);
    r.rounds = std::stoull(cells[8]);
    r.bytes = std::stoull(cells[9]);
    r.error = cells[10];
    out.push_back(r);
  }
  return out;
}

void write_summary_csv(const fs::path& path, const SummaryTable& table) {
  std::string out =
      "# mean and population standard deviation over successful runs\n"
      "method,runs,failed,shd_mean,shd_std,tpr_mean,tpr_std,fdr_mean,fdr_std,nnz_mean,nnz_std,"
      "h_mean,h_std,h_max\n";
  for (const auto& r : table.rows) {
    out += to_string(r.method) + "," + std::to_string(r.runs) + "," + std::to_string(r.failed) + "," +
           num(r.shd.mean) + "," + num(r.shd.std) + "," + num(r.tpr.mean) + "," + num(r.tpr.std) +
           "," + num(r.fdr.mean) + "," + num(r.fdr.std) + "," + num(r.nnz.mean) + "," +
           num(r.nnz.std) + "," + num(r.final_h.mean) + "," + num(r.final_h.std) + "," +
           num(r.max_h) + "\n";
  }
  write_text(path, out);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExecutionOptions& exec) {
  config.validate();
  const fs::path out = config.output_dir;
  fs::create_directories(out / "runs");

  struct Job {
    std::uint64_t seed;
    Method method;
  };
  std::vector<Job> jobs;
  for (auto seed : config.seeds)
    for (auto method : config.methods) jobs.push_back({seed, method});

  std::vector<RunRecord> records(jobs.size());
  std::vector<std::vector<RoundRecord>> histories(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      RunRecord& rec = records[i];
      rec.method = jobs[i].method;
      rec.seed = jobs[i].seed;
      std::optional<TrainReport> report;
      try {
        const auto data = build_dataset(config, rec.seed);
        RunOptions opts;
        opts.transport = config.transport;
        opts.endpoint = config.endpoint;
        opts.seed = rec.seed;
        report = run_method(rec.method, data, config.family, config.hyper, opts);
        rec.metrics = report->metrics;
        rec.final_h = report->final_h;
        rec.rounds = report->communication_rounds();
        rec.bytes = report->total_bytes();
        rec.wall_seconds = report->wall_seconds;
        histories[i] = report->rounds;
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
      }
      const auto path = out / "runs" / (to_string(rec.method) + "_seed" + std::to_string(rec.seed) + ".json");
      write_text(path, run_json(rec, report ? &*report : nullptr).dump(2) + "\n");
      if (exec.verbose) {
        std::lock_guard lock(log_mutex);
        std::cerr << config.name << " " << to_string(rec.method) << " seed " << rec.seed << ": "
                  << (rec.ok ? "ok" : "failed: " + rec.error);
        if (rec.metrics) std::cerr << " shd " << rec.metrics->shd << " tpr " << rec.metrics->tpr;
        std::cerr << " h " << rec.final_h << " rounds " << rec.rounds << "\n";
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(exec.parallel, jobs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentResult result;
  result.records = records;
  result.summary = summarize_runs(records);
  for (std::size_t i = 0; i < jobs.size(); ++i) result.trajectories.emplace_back(records[i], histories[i]);

  write_runs_csv(out / "runs.csv", records);
  write_summary_csv(out / "summary.csv", result.summary);
  std::vector<std::string> files{"runs.csv", "summary.csv"};
  if (config.trajectory) {
    std::string text = kTrajectoryHeader;
    for (std::size_t i = 0; i < jobs.size(); ++i) text += trajectory_rows(records[i], histories[i]);
    write_text(out / "trajectory.csv", text);
    files.push_back("trajectory.csv");
  }
  for (const auto& r : records) {
    files.push_back("runs/" + to_string(r.method) + "_seed" + std::to_string(r.seed) + ".json");
  }
  json manifest;
  manifest["name"] = config.name;
  manifest["version"] = version_string();
  manifest["config_hash"] = config_hash(config);
  manifest["seeds"] = config.seeds;
  json methods = json::array();
  for (auto m : config.methods) methods.push_back(to_string(m));
  manifest["methods"] = methods;
  manifest["files"] = files;
  manifest["std_convention"] = "population";
  manifest["config"] = emit_config(config);
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

std::vector<std::pair<std::string, ExperimentConfig>> sweep_points(const ExperimentConfig& config) {
  config.validate();
  if (config.sweep_axis == SweepAxis::None) throw ConfigError("sweep.axis: no sweep axis configured");
  const fs::path out = config.output_dir;
  const std::string axis = to_string(config.sweep_axis);

  std::vector<std::pair<std::string, ExperimentConfig>> points;
  for (const auto& value : config.sweep_values) {
    ExperimentConfig point = config;
    point.sweep_axis = SweepAxis::None;
    point.sweep_values.clear();
    point.trajectory = true;
    point.output_dir = out / (axis + "_" + value);
    try {
      switch (config.sweep_axis) {
        case SweepAxis::Variables:
          point.d = std::stoull(value);
          break;
        case SweepAxis::Clients: {
          const std::size_t k = std::stoull(value);
          if (k == 0 || config.sweep_total_samples % k != 0) {
            throw ConfigError("sweep.values: " + std::to_string(config.sweep_total_samples) +
                              " samples do not split evenly over " + value + " clients");
          }
          point.data.partition.mode = PartitionPlan::Mode::Even;
          point.data.partition.clients = k;
          point.data.partition.samples_per_client = config.sweep_total_samples / k;
          break;
        }
        case SweepAxis::Partition:
          if (value == "even") point.data.partition.mode = PartitionPlan::Mode::Even;
          else if (value == "packages") point.data.partition.mode = PartitionPlan::Mode::Packages;
          else throw ConfigError("sweep.values: partition must be even or packages, got " + value);
          break;
        case SweepAxis::None:
          break;
      }
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw;
      throw ConfigError("sweep.values: bad value '" + value + "' for axis " + axis);
    }
    point.validate();
    points.emplace_back(value, std::move(point));
  }
  return points;
}

SweepResult sweep(const ExperimentConfig& config, const ExecutionOptions& exec) {
  const auto points = sweep_points(config);
  const fs::path out = config.output_dir;
  const std::string axis = to_string(config.sweep_axis);

  SweepResult result;
  for (const auto& [value, point] : points) result.points.emplace_back(value, run_experiment(point, exec));

  std::string long_csv =
      "# std is the population standard deviation over successful runs\n"
      "axis,value,method,metric,mean,std,runs\n";
  std::string traj = std::string("axis,value,") + kTrajectoryHeader;
  for (const auto& [value, res] : result.points) {
    for (const auto& row : res.summary.rows) {
      const std::size_t ok = row.runs - row.failed;
      const std::pair<const char*, MetricSummary> metrics[] = {
          {"shd", row.shd}, {"tpr", row.tpr}, {"fdr", row.fdr}, {"nnz", row.nnz}, {"h", row.final_h}};
      for (const auto& [name, s] : metrics) {
        long_csv += axis + "," + value + "," + to_string(row.method) + "," + name + "," + num(s.mean) +
                    "," + num(s.std) + "," + std::to_string(ok) + "\n";
      }
    }
    for (const auto& [rec, rounds] : res.trajectories) {
      traj += trajectory_rows(rec, rounds, axis + "," + value + ",");
    }
  }
  write_text(out / "sweep_long.csv", long_csv);
  write_text(out / "sweep_trajectory.csv", traj);
  json manifest;
  manifest["name"] = config.name;
  manifest["version"] = version_string();
  manifest["config_hash"] = config_hash(config);
  manifest["seeds"] = config.seeds;
  manifest["axis"] = axis;
  manifest["values"] = config.sweep_values;
  manifest["files"] = {"sweep_long.csv", "sweep_trajectory.csv"};
  manifest["std_convention"] = "population";
  manifest["config"] = emit_config(config);
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

std::vector<std::pair<fs::path, SummaryTable>> report(const fs::path& dir) {
  if (!fs::exists(dir)) throw std::runtime_error("report: " + dir.string() + " does not exist");
  std::vector<fs::path> tables;
  if (fs::is_regular_file(dir)) {
    tables.push_back(dir);
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "runs.csv") tables.push_back(entry.path());
    }
  }
  std::sort(tables.begin(), tables.end());
  if (tables.empty()) throw std::runtime_error("report: no runs.csv under " + dir.string());
  std::vector<std::pair<fs::path, SummaryTable>> out;
  for (const auto& t : tables) {
    auto table = summarize_runs(read_runs_csv(t));
    write_summary_csv(t.parent_path() / "summary.csv", table);
    out.emplace_back(t, std::move(table));
  }
  return out;
}

void generate_datasets(const ExperimentConfig& config, const fs::path& dir) {
  config.validate();
  for (auto seed : config.seeds) {
    const auto data = build_dataset(config, seed);
    write_federated_dataset(dir / ("seed_" + std::to_string(seed)), data, config.data.settings, seed);
  }
}

}  // namespace fedcausal
