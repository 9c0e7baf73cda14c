#pragma once

#include "fedcausal/dense_matrix.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace fedcausal {

/// Linear SEM weights. W(i, j) is the effect of variable i on variable j; the
/// diagonal is structurally zero.
struct LinearParams {
  DenseMatrix w;
};

enum class Activation { Sigmoid, Identity };

std::string to_string(Activation activation);
Activation parse_activation(const std::string& text);

/// One single-hidden-layer network per variable, stored as stacked blocks.
///
/// first_layer is (d*hidden) x d: rows [i*hidden, (i+1)*hidden) hold A_i, the
/// input weights of variable i's network, and column i of A_i is always zero.
/// hidden_bias and output are d x hidden. The output layer has no bias.
struct MlpParams {
  std::size_t d = 0;
  std::size_t hidden = 0;
  Activation activation = Activation::Sigmoid;
  DenseMatrix first_layer;
  DenseMatrix hidden_bias;
  DenseMatrix output;

  static MlpParams zeros(std::size_t d, std::size_t hidden,
                         Activation activation = Activation::Sigmoid);
  /// First layer at zero, remaining layers uniform in ±1/sqrt(fan-in).
  static MlpParams initialize(std::size_t d, std::size_t hidden, std::uint64_t seed,
                              Activation activation = Activation::Sigmoid);

  /// Throws ShapeError on inconsistent shapes or a non-zero self-input weight.
  void validate() const;
};

/// Pull λ2·||θ - anchor||² towards a broadcast block.
struct ProximalTerm {
  double lambda2 = 0.0;
  DenseMatrix anchor;
};

/// α·h + ρ/2·h² on the model's weighted adjacency.
struct AugmentedTerms {
  double alpha = 0.0;
  double rho = 0.0;
};

struct LinearEvaluation {
  /// Full objective including the L1 term.
  double value = 0.0;
  /// ½n⁻¹||X - XW||².
  double loss = 0.0;
  double h = 0.0;
  /// Gradient of every term except L1.
  DenseMatrix gradient;
};

/// Squared loss through the sufficient statistic C = XᵀX/n, so repeated
/// evaluations cost O(d³) regardless of n.
class LinearLoss {
 public:
  explicit LinearLoss(const DenseMatrix& x);

  [[nodiscard]] std::size_t d() const noexcept { return covariance_.rows(); }
  [[nodiscard]] LinearEvaluation evaluate(const DenseMatrix& w, double lambda1,
                                          const ProximalTerm* prox,
                                          const AugmentedTerms& terms) const;

 private:
  DenseMatrix covariance_;
};

LinearEvaluation linear_objective(const LinearParams& params, const DenseMatrix& x,
                                  double lambda1, const ProximalTerm* prox,
                                  const AugmentedTerms& terms);

/// Column i holds variable i's network applied row-wise to X.
DenseMatrix mlp_forward(const MlpParams& params, const DenseMatrix& x);

struct MlpGradient {
  DenseMatrix first_layer;
  DenseMatrix hidden_bias;
  DenseMatrix output;
};

struct MlpEvaluation {
  double value = 0.0;
  double loss = 0.0;
  double h = 0.0;
  /// Gradient of every term except the first-layer L1 norm.
  MlpGradient gradient;
};

MlpEvaluation mlp_objective(const MlpParams& params, const DenseMatrix& x, double lambda1,
                            const ProximalTerm* prox, const AugmentedTerms& terms);

/// Weighted adjacency of a first-layer stack: entry (j, i) is the norm of column j of A_i.
DenseMatrix extract_weight_matrix(const DenseMatrix& first_layer, std::size_t d,
                                  std::size_t hidden);

/// Squared version of extract_weight_matrix, the matrix inside the trace exponential.
DenseMatrix first_layer_squares(const DenseMatrix& first_layer, std::size_t d,
                                std::size_t hidden);

/// h(θ¹) and its gradient with respect to the first-layer stack.
struct FirstLayerAcyclicity {
  double value = 0.0;
  DenseMatrix gradient;
};
FirstLayerAcyclicity first_layer_acyclicity(const DenseMatrix& first_layer, std::size_t d,
                                            std::size_t hidden);

/// JSON checkpoints: one entry per layer with an explicit shape. Values are
/// written with round-trip precision so a reload is bit-exact.
void save_checkpoint(std::ostream& out, const MlpParams& params);
MlpParams load_mlp_checkpoint(std::istream& in);
void save_checkpoint(std::ostream& out, const LinearParams& params);
LinearParams load_linear_checkpoint(std::istream& in);

}  // namespace fedcausal
