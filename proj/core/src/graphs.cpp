#include "fedcausal/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace fedcausal {

std::size_t Adjacency::edge_count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::pair<std::size_t, std::size_t>> Adjacency::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < d_; ++i)
    for (std::size_t j = 0; j < d_; ++j)
      if (has_edge(i, j)) out.emplace_back(i, j);
  return out;
}

std::vector<std::size_t> Adjacency::parents(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d_; ++i)
    if (has_edge(i, node)) out.push_back(i);
  return out;
}

DagSpec::DagSpec(Adjacency adjacency) : adjacency_(std::move(adjacency)) {
  for (std::size_t i = 0; i < adjacency_.d(); ++i) {
    if (adjacency_.has_edge(i, i)) {
      throw CycleError("DagSpec: self-loop on node " + std::to_string(i));
    }
  }
  auto order = fedcausal::topological_order(adjacency_);
  if (!order) throw CycleError("DagSpec: adjacency contains a directed cycle");
  order_ = std::move(*order);
}

std::string to_string(GraphKind kind) {
  return kind == GraphKind::ErdosRenyi ? "ER" : "SF";
}

GraphKind parse_graph_kind(const std::string& text) {
  if (text == "ER" || text == "er") return GraphKind::ErdosRenyi;
  if (text == "SF" || text == "sf") return GraphKind::ScaleFree;
  throw std::invalid_argument("unknown graph kind '" + text + "' (expected ER or SF)");
}

std::optional<std::vector<std::size_t>> topological_order(const Adjacency& adjacency) {
  const std::size_t d = adjacency.d();
  std::vector<std::size_t> indegree(d, 0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (adjacency.has_edge(i, j)) ++indegree[j];

  std::vector<std::size_t> ready;
  for (std::size_t j = d; j-- > 0;)
    if (indegree[j] == 0) ready.push_back(j);

  std::vector<std::size_t> order;
  order.reserve(d);
  while (!ready.empty()) {
    const std::size_t node = ready.back();
    ready.pop_back();
    order.push_back(node);
    for (std::size_t j = d; j-- > 0;) {
      if (adjacency.has_edge(node, j) && --indegree[j] == 0) ready.push_back(j);
    }
  }
  if (order.size() != d) return std::nullopt;
  return order;
}

bool is_acyclic(const Adjacency& adjacency) {
  return topological_order(adjacency).has_value();
}

namespace {

std::vector<std::size_t> random_permutation(std::size_t d, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

DagSpec sample_scale_free(std::size_t d, std::size_t attach, std::mt19937_64& rng) {
  // Preferential attachment over an insertion order; edges point from older to newer nodes.
  std::vector<std::pair<std::size_t, std::size_t>> ordered_edges;
  std::vector<double> degree(d, 0.0);
  for (std::size_t t = 1; t < d; ++t) {
    std::vector<std::size_t> targets;
    if (t <= attach) {
      targets.resize(t);
      std::iota(targets.begin(), targets.end(), 0);
    } else {
      std::vector<double> weight(degree.begin(), degree.begin() + static_cast<long>(t));
      while (targets.size() < attach) {
        std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
        const std::size_t chosen = pick(rng);
        targets.push_back(chosen);
        weight[chosen] = 0.0;
      }
    }
    for (std::size_t s : targets) {
      ordered_edges.emplace_back(s, t);
      degree[s] += 1.0;
      degree[t] += 1.0;
    }
  }
  const auto perm = random_permutation(d, rng);
  Adjacency adj(d);
  for (auto [from, to] : ordered_edges) adj.set_edge(perm[from], perm[to]);
  return DagSpec(std::move(adj));
}

}  // namespace

DagSpec sample_er_dag(std::size_t d, double edge_probability, std::uint64_t seed) {
  if (d == 0) throw std::invalid_argument("sample_dag: d must be >= 1");
  if (!(edge_probability >= 0.0 && edge_probability <= 1.0)) {
    throw std::invalid_argument("sample_er_dag: edge probability must lie in [0,1]");
  }
  std::mt19937_64 rng(seed);
  const auto perm = random_permutation(d, rng);
  std::bernoulli_distribution coin(edge_probability);
  Adjacency adj(d);
  // Lower triangle of the permuted order: position a precedes position b when a < b.
  for (std::size_t b = 1; b < d; ++b)
    for (std::size_t a = 0; a < b; ++a)
      if (coin(rng)) adj.set_edge(perm[a], perm[b]);
  return DagSpec(std::move(adj));
}

DagSpec sample_dag(const GraphModel& model, std::size_t d, std::uint64_t seed) {
  if (d == 0) throw std::invalid_argument("sample_dag: d must be >= 1");
  if (!(model.edge_factor >= 1.0)) {
    throw std::invalid_argument("sample_dag: edge_factor must be >= 1");
  }
  if (d == 1) return DagSpec(Adjacency(1));
  if (model.kind == GraphKind::ErdosRenyi) {
    const double pairs = static_cast<double>(d) * static_cast<double>(d - 1) / 2.0;
    const double p = std::min(1.0, model.edge_factor * static_cast<double>(d) / pairs);
    return sample_er_dag(d, p, seed);
  }
  std::mt19937_64 rng(seed);
  const auto attach = static_cast<std::size_t>(std::llround(model.edge_factor));
  return sample_scale_free(d, attach, rng);
}

Adjacency threshold_graph(const DenseMatrix& w, double threshold) {
  if (!w.is_square()) throw ShapeError("threshold_graph: non-square input " + shape_string(w));
  if (threshold < 0.0) throw std::invalid_argument("threshold_graph: threshold must be >= 0");
  Adjacency adj(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j)
      if (i != j && std::abs(w(i, j)) > threshold) adj.set_edge(i, j);
  return adj;
}

StructureMetrics compute_metrics(const Adjacency& estimated, const Adjacency& truth) {
  if (estimated.d() != truth.d()) {
    throw ShapeError("compute_metrics: dimension mismatch " + std::to_string(estimated.d()) +
                     " vs " + std::to_string(truth.d()));
  }
  const std::size_t d = truth.d();
  std::size_t correct = 0, reversed = 0, false_pos = 0, extra = 0, missing = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!estimated.has_edge(i, j)) continue;
      if (truth.has_edge(i, j)) {
        ++correct;
      } else if (truth.has_edge(j, i)) {
        ++reversed;
      } else {
        ++false_pos;
      }
    }
  }
  // Skeleton differences, one count per unordered pair.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const bool in_est = estimated.has_edge(i, j) || estimated.has_edge(j, i);
      const bool in_truth = truth.has_edge(i, j) || truth.has_edge(j, i);
      if (in_est && !in_truth) ++extra;
      if (in_truth && !in_est) ++missing;
    }
  }
  StructureMetrics m;
  const std::size_t true_edges = truth.edge_count();
  m.nnz = estimated.edge_count();
  m.tpr = true_edges == 0 ? 1.0
                          : static_cast<double>(correct) / static_cast<double>(true_edges);
  m.fdr = static_cast<double>(reversed + false_pos) /
          static_cast<double>(std::max<std::size_t>(1, m.nnz));
  m.shd = missing + extra + reversed;
  return m;
}

StructureMetrics compute_metrics(const Adjacency& estimated, const DagSpec& truth) {
  return compute_metrics(estimated, truth.adjacency());
}

void write_edge_list(std::ostream& out, const Adjacency& adjacency) {
  out << "d=" << adjacency.d() << '\n';
  for (auto [i, j] : adjacency.edges()) out << i << ' ' << j << '\n';
}

Adjacency read_edge_list(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("d=", 0) != 0) {
    throw std::invalid_argument("edge list: missing 'd=<n>' header");
  }
  std::size_t d = 0;
  try {
    d = std::stoul(line.substr(2));
  } catch (const std::exception&) {
    throw std::invalid_argument("edge list: bad header '" + line + "'");
  }
  Adjacency adj(d);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    long long from = -1, to = -1;
    if (!(fields >> from >> to) || from < 0 || to < 0 || static_cast<std::size_t>(from) >= d ||
        static_cast<std::size_t>(to) >= d) {
      throw std::invalid_argument("edge list: bad edge on line " + std::to_string(line_no));
    }
    adj.set_edge(static_cast<std::size_t>(from), static_cast<std::size_t>(to));
  }
  return adj;
}

}  // namespace fedcausal
