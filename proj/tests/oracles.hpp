#pragma once

// Reference implementations used only to check the library.

#include "fedcausal/dense_matrix.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using fedcausal::DenseMatrix;

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                 double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  DenseMatrix m(r, c);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

inline DenseMatrix naive_product(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

/// Plain truncated series Σ_{k≤order} M^k / k!, no scaling.
inline DenseMatrix taylor_exp(const DenseMatrix& m, int order = 30) {
  const std::size_t n = m.rows();
  DenseMatrix sum(n, n), term(n, n);
  for (std::size_t i = 0; i < n; ++i) sum(i, i) = term(i, i) = 1.0;
  for (int k = 1; k <= order; ++k) {
    term = naive_product(term, m);
    for (auto& v : term.values()) v /= k;
    for (std::size_t t = 0; t < sum.values().size(); ++t) sum.values()[t] += term.values()[t];
  }
  return sum;
}

/// h(W) by the series oracle.
inline double series_h(const DenseMatrix& w) {
  DenseMatrix sq = w;
  for (auto& v : sq.values()) v = v * v;
  const auto e = taylor_exp(sq, 40);
  double tr = 0.0;
  for (std::size_t i = 0; i < e.rows(); ++i) tr += e(i, i);
  return tr - static_cast<double>(w.rows());
}

/// Cycle detection by depth-first colouring; bits[i*d+j] means edge i -> j.
inline bool dfs_acyclic(const std::vector<int>& bits, std::size_t d) {
  std::vector<int> colour(d, 0);
  std::function<bool(std::size_t)> visit = [&](std::size_t u) {
    colour[u] = 1;
    for (std::size_t v = 0; v < d; ++v) {
      if (!bits[u * d + v]) continue;
      if (colour[v] == 1) return false;
      if (colour[v] == 0 && !visit(v)) return false;
    }
    colour[u] = 2;
    return true;
  };
  for (std::size_t u = 0; u < d; ++u)
    if (colour[u] == 0 && !visit(u)) return false;
  return true;
}

inline std::vector<double> central_difference(const std::function<double(std::vector<double>&)>& f,
                                              std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// max |a - b| / max(scale, max |b|).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-6) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

}  // namespace oracle
