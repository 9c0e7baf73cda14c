#include "fedcausal/sem.hpp"

#include "fedcausal/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace fedcausal {

namespace {

double signed_uniform(std::mt19937_64& rng, double low, double high) {
  std::uniform_real_distribution<double> magnitude(low, high);
  std::bernoulli_distribution sign(0.5);
  const double v = magnitude(rng);
  return sign(rng) ? v : -v;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Values of one GP(0, RBF) sample path at the given inputs.
std::vector<double> gp_function_draw(std::span<const double> inputs, double bandwidth,
                                     std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  Eigen::MatrixXd gram(n, n);
  const double scale = 1.0 / (2.0 * bandwidth * bandwidth);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double diff = inputs[static_cast<std::size_t>(i)] - inputs[static_cast<std::size_t>(j)];
      gram(i, j) = gram(j, i) = std::exp(-diff * diff * scale);
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);

  // Near-duplicate inputs make the Gram matrix singular; grow the jitter until it factors.
  for (double jitter = 1e-8; jitter < 1.0; jitter *= 10.0) {
    Eigen::MatrixXd shifted = gram;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd f = llt.matrixL() * z;
      return {f.data(), f.data() + n};
    }
  }
  throw std::runtime_error("gp_function_draw: Gram matrix could not be factored");
}

}  // namespace

std::string to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::LG: return "LG";
    case MechanismKind::AnmMlp: return "ANM_MLP";
    case MechanismKind::AddGp: return "ADD_GP";
    case MechanismKind::Mim: return "MIM";
  }
  return "?";
}

MechanismKind parse_mechanism_kind(const std::string& text) {
  for (auto kind : kAllMechanisms)
    if (to_string(kind) == text) return kind;
  throw std::invalid_argument("unknown mechanism kind '" + text +
                              "' (expected LG, ANM_MLP, ADD_GP or MIM)");
}

std::string to_string(Regime regime) {
  return regime == Regime::Iid ? "iid" : "heterogeneous";
}

Regime parse_regime(const std::string& text) {
  if (text == "iid") return Regime::Iid;
  if (text == "heterogeneous") return Regime::Heterogeneous;
  throw std::invalid_argument("unknown regime '" + text + "' (expected iid or heterogeneous)");
}

SemInstance instantiate_mechanism(const DagSpec& dag, MechanismKind kind, std::uint64_t seed,
                                  const MechanismSettings& settings) {
  if (!(settings.weight_low > 0.0 && settings.weight_high >= settings.weight_low)) {
    throw std::invalid_argument("MechanismSettings: need 0 < weight_low <= weight_high");
  }
  SemInstance sem{dag, kind, settings, {}};
  sem.variables.resize(dag.d());
  std::mt19937_64 rng(seed);
  const double lo = settings.weight_low;
  const double hi = settings.weight_high;
  for (std::size_t j = 0; j < dag.d(); ++j) {
    auto& var = sem.variables[j];
    var.parents = dag.adjacency().parents(j);
    var.noise_scale = settings.noise_scale;
    const std::size_t pa = var.parents.size();
    switch (kind) {
      case MechanismKind::LG:
        var.weights.resize(pa);
        for (double& w : var.weights) w = signed_uniform(rng, lo, hi);
        break;
      case MechanismKind::AnmMlp:
        var.hidden_in = DenseMatrix(pa, settings.mlp_hidden);
        for (double& w : var.hidden_in.values()) w = signed_uniform(rng, lo, hi);
        var.hidden_out.resize(settings.mlp_hidden);
        for (double& w : var.hidden_out) w = signed_uniform(rng, lo, hi);
        break;
      case MechanismKind::AddGp:
        var.function_seed = rng();
        break;
      case MechanismKind::Mim:
        var.weights.resize(3 * pa);
        for (double& w : var.weights) w = signed_uniform(rng, lo, hi);
        break;
    }
  }
  return sem;
}

DenseMatrix simulate_with_noise_seeds(const SemInstance& sem, std::size_t n,
                                      std::span<const std::uint64_t> noise_seeds) {
  if (n == 0) throw std::invalid_argument("simulate: n must be >= 1");
  const std::size_t d = sem.dag.d();
  if (noise_seeds.size() != d) throw std::invalid_argument("simulate: need one noise seed per variable");
  DenseMatrix x(n, d);
  std::vector<double> column(n);
  for (std::size_t j : sem.dag.topological_order()) {
    const auto& var = sem.variables[j];
    const std::size_t pa = var.parents.size();
    std::fill(column.begin(), column.end(), 0.0);
    if (pa > 0) {
      switch (sem.kind) {
        case MechanismKind::LG:
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t p = 0; p < pa; ++p) column[r] += x(r, var.parents[p]) * var.weights[p];
          break;
        case MechanismKind::AnmMlp: {
          const std::size_t hidden = var.hidden_out.size();
          for (std::size_t r = 0; r < n; ++r) {
            double out = 0.0;
            for (std::size_t h = 0; h < hidden; ++h) {
              double z = 0.0;
              for (std::size_t p = 0; p < pa; ++p) z += x(r, var.parents[p]) * var.hidden_in(p, h);
              out += sigmoid(z) * var.hidden_out[h];
            }
            column[r] = out;
          }
          break;
        }
        case MechanismKind::AddGp: {
          std::vector<double> inputs(n);
          for (std::size_t p = 0; p < pa; ++p) {
            for (std::size_t r = 0; r < n; ++r) inputs[r] = x(r, var.parents[p]);
            const auto f = gp_function_draw(inputs, sem.settings.gp_bandwidth,
                                            derive_seed(var.function_seed, p));
            for (std::size_t r = 0; r < n; ++r) column[r] += f[r];
          }
          break;
        }
        case MechanismKind::Mim:
          for (std::size_t r = 0; r < n; ++r) {
            double a = 0.0, b = 0.0, c = 0.0;
            for (std::size_t p = 0; p < pa; ++p) {
              const double v = x(r, var.parents[p]);
              a += v * var.weights[p];
              b += v * var.weights[pa + p];
              c += v * var.weights[2 * pa + p];
            }
            column[r] = std::tanh(a) + std::cos(b) + std::sin(c);
          }
          break;
      }
    }
    std::mt19937_64 rng(noise_seeds[j]);
    std::normal_distribution<double> noise(0.0, var.noise_scale);
    for (std::size_t r = 0; r < n; ++r) x(r, j) = column[r] + noise(rng);
  }
  return x;
}

DenseMatrix simulate(const SemInstance& sem, std::size_t n, std::uint64_t seed) {
  std::vector<std::uint64_t> seeds(sem.dag.d());
  for (std::size_t j = 0; j < seeds.size(); ++j) seeds[j] = derive_seed(seed, j);
  return simulate_with_noise_seeds(sem, n, seeds);
}

void standardize_columns(DenseMatrix& x) {
  const std::size_t n = x.rows();
  if (n == 0) return;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(n);
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t r = 0; r < n; ++r) x(r, c) = (x(r, c) - mean) * inv;
  }
}

std::size_t FederatedDataset::total_samples() const noexcept {
  std::size_t total = 0;
  for (const auto& c : clients) total += c.n();
  return total;
}

std::size_t FederatedDataset::d() const {
  if (clients.empty()) throw std::logic_error("FederatedDataset: no clients");
  return clients.front().d();
}

DenseMatrix FederatedDataset::pooled() const {
  DenseMatrix out(total_samples(), d());
  std::size_t row = 0;
  for (const auto& c : clients) {
    std::copy(c.x.values().begin(), c.x.values().end(), out.row(row).begin());
    row += c.n();
  }
  return out;
}

PartitionPlan PartitionPlan::even(std::size_t clients, std::size_t samples_per_client) {
  PartitionPlan p;
  p.mode = Mode::Even;
  p.clients = clients;
  p.samples_per_client = samples_per_client;
  return p;
}

PartitionPlan PartitionPlan::by_packages(std::size_t clients, std::size_t packages,
                                         std::size_t package_size) {
  PartitionPlan p;
  p.mode = Mode::Packages;
  p.clients = clients;
  p.packages = packages;
  p.package_size = package_size;
  return p;
}

std::size_t PartitionPlan::total_samples() const noexcept {
  return mode == Mode::Even ? clients * samples_per_client : packages * package_size;
}

std::vector<std::size_t> client_sizes(const PartitionPlan& plan, std::uint64_t seed) {
  if (plan.clients == 0) throw std::invalid_argument("partition: need at least one client");
  if (plan.mode == PartitionPlan::Mode::Even) {
    if (plan.samples_per_client == 0) {
      throw std::invalid_argument("partition: samples_per_client must be >= 1");
    }
    return std::vector<std::size_t>(plan.clients, plan.samples_per_client);
  }
  if (plan.package_size == 0) throw std::invalid_argument("partition: package_size must be >= 1");
  if (plan.clients > plan.packages) {
    throw std::invalid_argument("partition: " + std::to_string(plan.clients) +
                                " clients but only " + std::to_string(plan.packages) +
                                " packages");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> owner(plan.packages);
  std::iota(owner.begin(), owner.begin() + static_cast<long>(plan.clients), 0);
  std::uniform_int_distribution<std::size_t> pick(0, plan.clients - 1);
  for (std::size_t p = plan.clients; p < plan.packages; ++p) owner[p] = pick(rng);
  std::shuffle(owner.begin(), owner.end(), rng);
  std::vector<std::size_t> sizes(plan.clients, 0);
  for (std::size_t o : owner) sizes[o] += plan.package_size;
  return sizes;
}

FederatedDataset make_federated(const DagSpec& dag, const FederatedSpec& spec,
                                std::uint64_t seed) {
  const auto sizes = client_sizes(spec.partition, derive_seed(seed, seed_stream::kPartition));
  FederatedDataset out;
  out.truth = dag;
  out.clients.resize(sizes.size());

  if (spec.regime == Regime::Iid) {
    const std::uint64_t mech_seed = derive_seed(seed, seed_stream::kMechanism);
    const auto sem = instantiate_mechanism(dag, spec.iid_kind, mech_seed, spec.settings);
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    const DenseMatrix all = simulate(sem, total, derive_seed(seed, seed_stream::kSimulation));
    std::size_t row = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto& client = out.clients[k];
      client.client_id = k;
      client.kind = spec.iid_kind;
      client.mechanism_seed = mech_seed;
      std::vector<double> block(all.values().begin() + static_cast<long>(row * dag.d()),
                                all.values().begin() + static_cast<long>((row + sizes[k]) * dag.d()));
      client.x = DenseMatrix(sizes[k], dag.d(), std::move(block));
      row += sizes[k];
    }
  } else {
    std::mt19937_64 kind_rng(derive_seed(seed, seed_stream::kClientKind));
    std::uniform_int_distribution<std::size_t> pick_kind(0, std::size(kAllMechanisms) - 1);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      auto& client = out.clients[k];
      client.client_id = k;
      client.kind = kAllMechanisms[pick_kind(kind_rng)];
      client.mechanism_seed = derive_seed(derive_seed(seed, seed_stream::kMechanism), k);
      const auto sem = instantiate_mechanism(dag, *client.kind, client.mechanism_seed, spec.settings);
      client.x = simulate(sem, sizes[k],
                          derive_seed(derive_seed(seed, seed_stream::kSimulation), k));
    }
  }
  if (spec.standardize) {
    for (auto& c : out.clients) standardize_columns(c.x);
  }
  return out;
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);

    std::vector<double> parsed;
    bool numeric = true;
    for (const auto& f : fields) {
      try {
        std::size_t used = 0;
        parsed.push_back(std::stod(f, &used));
        if (f.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (rows == 0 && table.header.empty()) {
        table.header = fields;
        cols = fields.size();
        continue;
      }
      throw std::runtime_error(path.string() + ": non-numeric value on line " +
                               std::to_string(line_no));
    }
    if (cols == 0) cols = parsed.size();
    if (parsed.size() != cols) {
      throw std::runtime_error(path.string() + ": expected " + std::to_string(cols) +
                               " columns on line " + std::to_string(line_no) + ", found " +
                               std::to_string(parsed.size()));
    }
    values.insert(values.end(), parsed.begin(), parsed.end());
    ++rows;
  }
  table.values = DenseMatrix(rows, cols, std::move(values));
  return table;
}

SachsData load_sachs(const std::filesystem::path& csv_path,
                     const std::filesystem::path& truth_path) {
  auto table = read_numeric_csv(csv_path);
  if (table.values.cols() != kSachsVariables) {
    throw std::runtime_error(csv_path.string() + ": expected " + std::to_string(kSachsVariables) +
                             " columns, found " + std::to_string(table.values.cols()));
  }
  if (table.values.rows() == 0) throw std::runtime_error(csv_path.string() + ": no data rows");
  std::ifstream truth_in(truth_path);
  if (!truth_in) throw std::runtime_error("cannot open " + truth_path.string());
  Adjacency truth = read_edge_list(truth_in);
  if (truth.d() != kSachsVariables) {
    throw std::runtime_error(truth_path.string() + ": truth graph has wrong dimension");
  }
  return SachsData{std::move(table.values), DagSpec(std::move(truth)), std::move(table.header)};
}

FederatedDataset federate_rows(const DenseMatrix& x, std::optional<DagSpec> truth,
                               std::size_t total, std::size_t clients, std::uint64_t seed,
                               bool standardize) {
  if (clients == 0) throw std::invalid_argument("federate_rows: need at least one client");
  if (total > x.rows()) {
    throw std::invalid_argument("federate_rows: requested " + std::to_string(total) +
                                " rows from " + std::to_string(x.rows()));
  }
  if (total % clients != 0) {
    throw std::invalid_argument("federate_rows: " + std::to_string(total) +
                                " rows do not split evenly over " + std::to_string(clients) +
                                " clients");
  }
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, seed_stream::kSubsample));
  std::shuffle(rows.begin(), rows.end(), rng);

  FederatedDataset out;
  out.truth = std::move(truth);
  const std::size_t per_client = total / clients;
  for (std::size_t k = 0; k < clients; ++k) {
    ClientDataset c;
    c.client_id = k;
    c.x = DenseMatrix(per_client, x.cols());
    for (std::size_t r = 0; r < per_client; ++r) {
      const auto src = x.row(rows[k * per_client + r]);
      std::copy(src.begin(), src.end(), c.x.row(r).begin());
    }
    if (standardize) standardize_columns(c.x);
    out.clients.push_back(std::move(c));
  }
  return out;
}

void write_federated_dataset(const std::filesystem::path& dir, const FederatedDataset& data,
                             const MechanismSettings& settings, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["d"] = data.d();
  manifest["total_samples"] = data.total_samples();
  manifest["settings"] = {{"weight_low", settings.weight_low},
                          {"weight_high", settings.weight_high},
                          {"mlp_hidden", settings.mlp_hidden},
                          {"gp_bandwidth", settings.gp_bandwidth},
                          {"noise_scale", settings.noise_scale},
                          {"mim_coefficients", "uniform +-[weight_low, weight_high]"},
                          {"gp_realization", "exact Cholesky draw on realized inputs, RBF kernel"}};
  auto& clients = manifest["clients"] = nlohmann::json::array();
  for (const auto& c : data.clients) {
    const std::string file = "client_" + std::to_string(c.client_id) + ".csv";
    std::ofstream out(dir / file);
    if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    out.precision(17);
    for (std::size_t r = 0; r < c.n(); ++r) {
      for (std::size_t j = 0; j < c.d(); ++j) out << (j ? "," : "") << c.x(r, j);
      out << '\n';
    }
    clients.push_back({{"client_id", c.client_id},
                       {"file", file},
                       {"n", c.n()},
                       {"kind", c.kind ? to_string(*c.kind) : "real"},
                       {"mechanism_seed", c.mechanism_seed}});
  }
  if (data.truth) {
    auto& edges = manifest["truth_edges"] = nlohmann::json::array();
    for (auto [i, j] : data.truth->adjacency().edges()) edges.push_back({i, j});
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

}  // namespace fedcausal
