#pragma once

#include "fedcausal/dense_matrix.hpp"

#include <functional>
#include <span>
#include <vector>

namespace fedcausal {

/// e^M by scaling and squaring around an order-10 Taylor core.
///
/// The argument is scaled by 2^-s with s = ceil(log2(max(1, ||M||_1))) + 3,
/// so the series is evaluated on a matrix of 1-norm at most 1/8.
/// Throws ShapeError for non-square input and std::domain_error for
/// non-finite entries.
DenseMatrix matrix_exponential(const DenseMatrix& m);

/// Value of tr(e^S) - d together with its derivative e^Sᵀ with respect to S.
struct TraceExpResult {
  double value = 0.0;
  DenseMatrix gradient;
};

/// tr(e^S) - d for a square S holding squared weights (S = W∘W).
TraceExpResult trace_exp_constraint(const DenseMatrix& squared_weights);

/// h(W) = tr(e^{W∘W}) - d. Zero exactly when the support of W is acyclic.
double acyclicity_value(const DenseMatrix& w);

/// ∇h(W) = (e^{W∘W})ᵀ ∘ 2W.
DenseMatrix acyclicity_gradient(const DenseMatrix& w);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h. Test oracle only.
std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> x, double step);

}  // namespace fedcausal
