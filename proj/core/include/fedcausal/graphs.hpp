#pragma once

#include "fedcausal/dense_matrix.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedcausal {

/// Square 0/1 matrix; entry (i, j) set means an edge i -> j.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t d) : d_(d), bits_(d * d, 0) {}

  [[nodiscard]] std::size_t d() const noexcept { return d_; }
  [[nodiscard]] bool has_edge(std::size_t from, std::size_t to) const {
    return bits_[from * d_ + to] != 0;
  }
  void set_edge(std::size_t from, std::size_t to, bool present = true) {
    bits_[from * d_ + to] = present ? 1 : 0;
  }
  [[nodiscard]] std::size_t edge_count() const noexcept;
  [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  [[nodiscard]] std::vector<std::size_t> parents(std::size_t node) const;

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  std::size_t d_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Thrown when a graph that must be acyclic is not.
class CycleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An adjacency known to be acyclic with an empty diagonal.
class DagSpec {
 public:
  DagSpec() = default;
  /// Throws CycleError if `adjacency` has a self-loop or a directed cycle.
  explicit DagSpec(Adjacency adjacency);

  [[nodiscard]] std::size_t d() const noexcept { return adjacency_.d(); }
  [[nodiscard]] const Adjacency& adjacency() const noexcept { return adjacency_; }
  [[nodiscard]] const std::vector<std::size_t>& topological_order() const noexcept {
    return order_;
  }
  [[nodiscard]] std::size_t edge_count() const noexcept { return adjacency_.edge_count(); }

 private:
  Adjacency adjacency_;
  std::vector<std::size_t> order_;
};

enum class GraphKind { ErdosRenyi, ScaleFree };

std::string to_string(GraphKind kind);
GraphKind parse_graph_kind(const std::string& text);

struct GraphModel {
  GraphKind kind = GraphKind::ErdosRenyi;
  /// ER: expected edge count is edge_factor * d. SF: edges attached per new node.
  double edge_factor = 2.0;
};

struct StructureMetrics {
  std::size_t shd = 0;
  double tpr = 0.0;
  double fdr = 0.0;
  std::size_t nnz = 0;
};

/// Kahn's algorithm; empty when the graph has a cycle.
std::optional<std::vector<std::size_t>> topological_order(const Adjacency& adjacency);

bool is_acyclic(const Adjacency& adjacency);

/// Samples a random DAG. Throws std::invalid_argument for d == 0 or edge_factor < 1.
DagSpec sample_dag(const GraphModel& model, std::size_t d, std::uint64_t seed);

/// ER sampling with an explicit edge probability over a random ordering.
DagSpec sample_er_dag(std::size_t d, double edge_probability, std::uint64_t seed);

/// Edge (i, j) kept iff |W(i, j)| > threshold; the diagonal is always dropped.
Adjacency threshold_graph(const DenseMatrix& w, double threshold);

/// Reversed predictions count as false discoveries and as one SHD unit.
/// TPR is defined as 1 when the truth has no edges.
StructureMetrics compute_metrics(const Adjacency& estimated, const DagSpec& truth);
StructureMetrics compute_metrics(const Adjacency& estimated, const Adjacency& truth);

/// Edge-list text: `d=<n>` then one `i j` pair per line, 0-indexed.
void write_edge_list(std::ostream& out, const Adjacency& adjacency);
Adjacency read_edge_list(std::istream& in);

}  // namespace fedcausal
