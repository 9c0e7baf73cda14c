#include "fedcausal/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedcausal {

namespace {

constexpr int kTaylorOrder = 10;
constexpr int kExtraSquarings = 3;

}  // namespace

DenseMatrix matrix_exponential(const DenseMatrix& m) {
  if (!m.is_square()) {
    throw ShapeError("matrix_exponential: non-square input " + shape_string(m));
  }
  if (!m.all_finite()) {
    throw std::domain_error("matrix_exponential: non-finite entries");
  }
  const std::size_t n = m.rows();
  if (n == 0) return {};

  const double norm = m.norm1();
  const int squarings =
      static_cast<int>(std::ceil(std::log2(std::max(1.0, norm)))) + kExtraSquarings;
  const DenseMatrix scaled = m * std::ldexp(1.0, -squarings);

  // Horner form: I + A(I + A/2(I + A/3(...(I + A/10)))).
  DenseMatrix result = DenseMatrix::identity(n);
  for (int k = kTaylorOrder; k >= 1; --k) {
    result = matmul(scaled, result);
    result *= 1.0 / k;
    for (std::size_t i = 0; i < n; ++i) result(i, i) += 1.0;
  }
  for (int s = 0; s < squarings; ++s) result = matmul(result, result);
  return result;
}

TraceExpResult trace_exp_constraint(const DenseMatrix& squared_weights) {
  if (!squared_weights.is_square()) {
    throw ShapeError("acyclicity: non-square input " + shape_string(squared_weights));
  }
  DenseMatrix e = matrix_exponential(squared_weights);
  TraceExpResult out;
  out.value = e.trace() - static_cast<double>(e.rows());
  out.gradient = e.transposed();
  return out;
}

double acyclicity_value(const DenseMatrix& w) {
  if (!w.is_square()) throw ShapeError("acyclicity_value: non-square input " + shape_string(w));
  return trace_exp_constraint(hadamard(w, w)).value;
}

DenseMatrix acyclicity_gradient(const DenseMatrix& w) {
  if (!w.is_square()) {
    throw ShapeError("acyclicity_gradient: non-square input " + shape_string(w));
  }
  DenseMatrix g = trace_exp_constraint(hadamard(w, w)).gradient;
  auto gv = g.values();
  auto wv = w.values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= 2.0 * wv[i];
  return g;
}

std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be > 0");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite_difference_gradient: non-finite objective near x");
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace fedcausal
