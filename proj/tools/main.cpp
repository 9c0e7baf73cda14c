#include "fedcausal/config.hpp"
#include "fedcausal/experiment.hpp"

#include "CLI11.hpp"

#include <iomanip>
#include <iostream>
#include <sstream>

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string seeds;
  std::size_t parallel = 1;
  std::string transport;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "INI experiment file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Output directory (overrides experiment.output)");
  cmd->add_option("--seeds", c.seeds, "Comma-separated seeds (overrides experiment.seeds)");
  cmd->add_option("--parallel", c.parallel, "Concurrent runs")->check(CLI::PositiveNumber);
  cmd->add_option("--transport", c.transport, "inproc or socket")
      ->check(CLI::IsMember({"inproc", "socket"}));
  cmd->add_flag("--quiet", c.quiet, "No per-run progress lines");
}

fedcausal::ExperimentConfig load(const Common& c) {
  auto cfg = fedcausal::parse_config(c.config);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (!c.seeds.empty()) cfg.seeds = fedcausal::parse_seed_list(c.seeds);
  if (!c.transport.empty()) cfg.transport = fedcausal::parse_transport_kind(c.transport);
  cfg.validate();
  return cfg;
}

void print_summary(const fedcausal::SummaryTable& table) {
  std::cout << std::left << std::setw(10) << "method" << std::right << std::setw(6) << "runs"
            << std::setw(14) << "SHD" << std::setw(16) << "TPR" << std::setw(16) << "FDR"
            << std::setw(14) << "NNZ" << std::setw(12) << "max h" << "\n";
  auto pm = [](const fedcausal::MetricSummary& s, int prec) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(prec) << s.mean << "±" << s.std;
    return o.str();
  };
  for (const auto& r : table.rows) {
    std::cout << std::left << std::setw(10) << fedcausal::to_string(r.method) << std::right
              << std::setw(6) << (r.runs - r.failed) << std::setw(15) << pm(r.shd, 1)
              << std::setw(17) << pm(r.tpr, 3) << std::setw(17) << pm(r.fdr, 3) << std::setw(15)
              << pm(r.nnz, 1) << std::setw(12) << std::scientific << std::setprecision(1)
              << r.max_h << std::defaultfloat << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated causal structure learning experiments"};
  app.set_version_flag("--version", fedcausal::version_string());
  app.require_subcommand(1);

  Common gen_opts, run_opts, sweep_opts;
  std::string report_dir;
  auto* gen = app.add_subcommand("gen", "Write client datasets for every seed");
  add_common(gen, gen_opts);
  auto* run = app.add_subcommand("run", "Train every method on every seed");
  add_common(run, run_opts);
  auto* sw = app.add_subcommand("sweep", "Repeat run over the configured sweep axis");
  add_common(sw, sweep_opts);
  auto* rep = app.add_subcommand("report", "Recompute summaries from runs.csv files");
  rep->add_option("dir", report_dir, "Results directory or runs.csv")->required();
  rep->add_option("--out", report_dir, "Same as the positional argument");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = load(gen_opts);
      const std::filesystem::path dir = gen_opts.out.empty() ? cfg.output_dir : std::filesystem::path(gen_opts.out);
      fedcausal::generate_datasets(cfg, dir);
      std::cout << "wrote " << cfg.seeds.size() << " dataset(s) under " << dir.string() << "\n";
      return 0;
    }
    if (*run) {
      const auto cfg = load(run_opts);
      const auto result = fedcausal::run_experiment(cfg, {run_opts.parallel, !run_opts.quiet});
      print_summary(result.summary);
      for (const auto& r : result.records)
        if (!r.ok) std::cerr << fedcausal::to_string(r.method) << " seed " << r.seed << " failed: " << r.error << "\n";
      return result.all_ok() ? 0 : 1;
    }
    if (*sw) {
      const auto cfg = load(sweep_opts);
      const auto result = fedcausal::sweep(cfg, {sweep_opts.parallel, !sweep_opts.quiet});
      for (const auto& [value, point] : result.points) {
        std::cout << fedcausal::to_string(cfg.sweep_axis) << " = " << value << "\n";
        print_summary(point.summary);
      }
      return result.all_ok() ? 0 : 1;
    }
    if (*rep) {
      bool ok = true;
      for (const auto& [path, table] : fedcausal::report(report_dir)) {
        std::cout << path.string() << "\n";
        print_summary(table);
        for (const auto& r : table.rows) ok = ok && r.failed == 0;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
