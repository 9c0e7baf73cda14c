#include "doctest.h"
#include "oracles.hpp"

#include "fedcausal/graphs.hpp"
#include "fedcausal/linalg.hpp"

#include <numeric>

using namespace fedcausal;

namespace {

std::vector<double> h_fd(const DenseMatrix& w) {
  const std::size_t d = w.rows();
  return oracle::central_difference(
      [d](std::vector<double>& x) { return acyclicity_value(DenseMatrix(d, d, x)); }, w.storage(),
      1e-5);
}

}  // namespace

TEST_CASE("matrix_exponential of zero is the identity") {
  CHECK(matrix_exponential(DenseMatrix(3, 3)) == DenseMatrix::identity(3));
}

TEST_CASE("matrix_exponential of a nilpotent matrix is I + A") {
  const DenseMatrix a{{0, 1}, {0, 0}};
  const auto e = matrix_exponential(a);
  CHECK(e(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(e(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(e(1, 0) == 0.0);
  CHECK(e(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("matrix_exponential matches an order-30 series on random 4x4") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_matrix(4, 4, rng);
    const auto got = matrix_exponential(m);
    const auto want = oracle::taylor_exp(m, 30);
    CHECK(oracle::relative_error(got.storage(), want.storage()) <= 1e-10);
  }
}

TEST_CASE("matrix_exponential stays accurate up to spectral radius 10") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    // Symmetric with eigenvalues spread up to about 10; compare e^M = (e^{M/8})^8.
    auto m = oracle::random_matrix(5, 5, rng, -2.0, 2.0);
    m = m + m.transposed();
    auto small = m;
    for (auto& v : small.values()) v /= 8.0;
    auto want = oracle::taylor_exp(small, 40);
    for (int k = 0; k < 3; ++k) want = oracle::naive_product(want, want);
    CHECK(oracle::relative_error(matrix_exponential(m).storage(), want.storage()) <= 1e-10);
  }
}

TEST_CASE("matrix_exponential rejects bad input") {
  CHECK_THROWS_AS(matrix_exponential(DenseMatrix(2, 3)), ShapeError);
  DenseMatrix bad(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(matrix_exponential(bad), std::domain_error);
  bad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(matrix_exponential(bad), std::domain_error);
}

TEST_CASE("matrix_exponential is permutation equivariant") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6;
    const auto m = oracle::random_matrix(n, n, rng, -1.5, 1.5);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    DenseMatrix p(n, n);
    for (std::size_t i = 0; i < n; ++i) p(perm[i], i) = 1.0;
    const auto lhs = matrix_exponential(oracle::naive_product(oracle::naive_product(p.transposed(), m), p));
    const auto rhs = oracle::naive_product(oracle::naive_product(p.transposed(), matrix_exponential(m)), p);
    CHECK((lhs - rhs).max_abs() <= 1e-10);
  }
}

TEST_CASE("acyclicity_value examples") {
  CHECK(acyclicity_value(DenseMatrix(4, 4)) == 0.0);
  CHECK(acyclicity_value(DenseMatrix{{0, 1}, {0, 0}}) == doctest::Approx(0.0));
  const double two_cycle = acyclicity_value(DenseMatrix{{0, 1}, {1, 0}});
  CHECK(two_cycle == doctest::Approx(2.0 * std::cosh(1.0) - 2.0).epsilon(1e-12));
  CHECK(two_cycle == doctest::Approx(1.0861612696).epsilon(1e-10));
  CHECK(two_cycle == doctest::Approx(oracle::series_h(DenseMatrix{{0, 1}, {1, 0}})).epsilon(1e-12));
  CHECK_THROWS_AS(acyclicity_value(DenseMatrix(2, 3)), ShapeError);
}

TEST_CASE("acyclicity_gradient examples") {
  CHECK(acyclicity_gradient(DenseMatrix(3, 3)) == DenseMatrix(3, 3));
  CHECK(acyclicity_gradient(DenseMatrix{{0, 1}, {0, 0}}).max_abs() == 0.0);
  CHECK_THROWS_AS(acyclicity_gradient(DenseMatrix(3, 2)), ShapeError);
}

TEST_CASE("acyclicity_gradient matches central differences on 100 random matrices") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> dim(2, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = dim(rng);
    const auto w = oracle::random_matrix(d, d, rng);
    CHECK(oracle::relative_error(acyclicity_gradient(w).storage(), h_fd(w)) <= 1e-5);
  }
}

TEST_CASE("acyclicity_value vanishes on DAG supports and is positive on cycles") {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::size_t> dim(2, 20);
  std::uniform_real_distribution<double> weight(0.1, 2.0);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = dim(rng);
    DenseMatrix w(d, d);
    std::vector<int> bits(d * d, 0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (i != j && coin(rng)) {
          w(i, j) = weight(rng);
          bits[i * d + j] = 1;
        }
    Adjacency adj(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (bits[i * d + j]) adj.set_edge(i, j);
    REQUIRE(is_acyclic(adj) == oracle::dfs_acyclic(bits, d));
    if (is_acyclic(adj)) {
      CHECK(acyclicity_value(w) <= 1e-12);
    } else {
      CHECK(acyclicity_value(w) > 0.0);
    }
  }
}

TEST_CASE("acyclicity_value is tiny for random upper-triangular supports") {
  std::mt19937_64 rng(23);
  for (std::size_t d = 2; d <= 20; ++d) {
    auto w = oracle::random_matrix(d, d, rng, -2.0, 2.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) w(i, j) = 0.0;
    CHECK(acyclicity_value(w) <= 1e-12);
  }
}

TEST_CASE("finite_difference_gradient examples") {
  const std::vector<double> x{2.0};
  const auto g = finite_difference_gradient([](std::span<const double> v) { return v[0] * v[0]; }, x, 1e-5);
  CHECK(g[0] == doctest::Approx(4.0).epsilon(1e-8));
  const std::vector<double> y{1.0, -3.0, 0.5};
  for (double v : finite_difference_gradient([](std::span<const double>) { return 7.0; }, y, 1e-3))
    CHECK(v == 0.0);
  CHECK_THROWS(finite_difference_gradient([](std::span<const double> v) { return v[0]; }, x, 0.0));
}

TEST_CASE("finite_difference_gradient agrees with the analytic h gradient") {
  std::mt19937_64 rng(24);
  const auto w = oracle::random_matrix(3, 3, rng);
  const auto fd = finite_difference_gradient(
      [](std::span<const double> v) {
        return acyclicity_value(DenseMatrix(3, 3, std::vector<double>(v.begin(), v.end())));
      },
      w.storage(), 1e-5);
  CHECK(oracle::relative_error(acyclicity_gradient(w).storage(), fd) <= 1e-5);
}

TEST_CASE("dense products match the naive oracle") {
  std::mt19937_64 rng(25);
  const auto a = oracle::random_matrix(7, 5, rng);
  const auto b = oracle::random_matrix(5, 9, rng);
  CHECK((matmul(a, b) - oracle::naive_product(a, b)).max_abs() <= 1e-13);
  CHECK((matmul_tn(a, a) - oracle::naive_product(a.transposed(), a)).max_abs() <= 1e-13);
  CHECK((matmul_nt(b, b) - oracle::naive_product(b, b.transposed())).max_abs() <= 1e-13);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}
