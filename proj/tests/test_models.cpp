#include "doctest.h"
#include "oracles.hpp"

#include "fedcausal/linalg.hpp"
#include "fedcausal/models.hpp"

#include <sstream>

using namespace fedcausal;

namespace {

DenseMatrix zero_diagonal(DenseMatrix w) {
  for (std::size_t i = 0; i < w.rows(); ++i) w(i, i) = 0.0;
  return w;
}

MlpParams random_mlp(std::size_t d, std::size_t m, std::mt19937_64& rng) {
  auto p = MlpParams::initialize(d, m, rng());
  p.first_layer = oracle::random_matrix(d * m, d, rng);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < m; ++k) p.first_layer(i * m + k, i) = 0.0;
  return p;
}

// Flattens every layer in order first_layer, hidden_bias, output.
std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> x(p.first_layer.storage());
  x.insert(x.end(), p.hidden_bias.storage().begin(), p.hidden_bias.storage().end());
  x.insert(x.end(), p.output.storage().begin(), p.output.storage().end());
  return x;
}

// Self-input weights stay pinned at zero, so finite differences see no change there.
void unflatten(MlpParams& p, const std::vector<double>& x) {
  auto it = x.begin();
  for (auto* m : {&p.first_layer, &p.hidden_bias, &p.output})
    for (auto& v : m->values()) v = *it++;
  for (std::size_t i = 0; i < p.d; ++i)
    for (std::size_t k = 0; k < p.hidden; ++k) p.first_layer(i * p.hidden + k, i) = 0.0;
}

std::vector<double> flatten(const MlpGradient& g) {
  std::vector<double> x(g.first_layer.storage());
  x.insert(x.end(), g.hidden_bias.storage().begin(), g.hidden_bias.storage().end());
  x.insert(x.end(), g.output.storage().begin(), g.output.storage().end());
  return x;
}

}  // namespace

TEST_CASE("linear objective at W = 0 is ||X||^2 / 2n") {
  std::mt19937_64 rng(1);
  const auto x = oracle::random_matrix(30, 4, rng);
  const auto e = linear_objective({DenseMatrix(4, 4)}, x, 0.0, nullptr, {});
  CHECK(e.value == doctest::Approx(x.squared_norm() / 60.0).epsilon(1e-12));
}

TEST_CASE("linear objective has zero residual on noiseless data") {
  // Column 2 = 2*col0 - col1, so W* has W(0,2)=2, W(1,2)=-1.
  std::mt19937_64 rng(2);
  auto x = oracle::random_matrix(20, 3, rng);
  for (std::size_t r = 0; r < 20; ++r) x(r, 2) = 2.0 * x(r, 0) - x(r, 1);
  DenseMatrix w(3, 3);
  w(0, 2) = 2.0;
  w(1, 2) = -1.0;
  // Columns 0 and 1 are not explained, so compare against their own share only.
  DenseMatrix x01 = x;
  for (std::size_t r = 0; r < 20; ++r) x01(r, 2) = 0.0;
  const auto e = linear_objective({w}, x, 0.0, nullptr, {});
  CHECK(e.loss == doctest::Approx(x01.squared_norm() / 40.0).epsilon(1e-12));
}

TEST_CASE("linear smooth gradient matches finite differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::random_matrix(25, 4, rng);
    const ProximalTerm prox{0.3, zero_diagonal(oracle::random_matrix(4, 4, rng))};
    const AugmentedTerms terms{0.7, 2.0};
    const auto w = zero_diagonal(oracle::random_matrix(4, 4, rng, -0.5, 0.5));
    const auto e = linear_objective({w}, x, 0.0, &prox, terms);
    const auto fd = oracle::central_difference(
        [&](std::vector<double>& v) {
          return linear_objective({DenseMatrix(4, 4, v)}, x, 0.0, &prox, terms).value;
        },
        w.storage(), 1e-6);
    // Diagonal entries are pinned; the gradient reports them as the smooth part would.
    CHECK(oracle::relative_error(e.gradient.storage(), fd) <= 1e-5);
  }
}

TEST_CASE("linear gradient identity -X^T(X - XW)/n") {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_matrix(40, 3, rng);
  const auto w = zero_diagonal(oracle::random_matrix(3, 3, rng));
  const auto e = linear_objective({w}, x, 0.0, nullptr, {});
  const auto resid = x - oracle::naive_product(x, w);
  const auto want = oracle::naive_product(x.transposed(), resid) * (-1.0 / 40.0);
  CHECK(oracle::relative_error(e.gradient.storage(), want.storage()) <= 1e-12);
}

TEST_CASE("mlp forward of all-zero parameters is zero") {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_matrix(10, 3, rng);
  const auto out = mlp_forward(MlpParams::zeros(3, 4), x);
  for (double v : out.values()) CHECK(v == 0.0);
  const auto e = mlp_objective(MlpParams::zeros(3, 4), x, 0.0, nullptr, {});
  CHECK(e.value == doctest::Approx(x.squared_norm() / 20.0).epsilon(1e-12));
}

TEST_CASE("zero first layer for a variable gives a constant column") {
  std::mt19937_64 rng(6);
  auto p = random_mlp(3, 4, rng);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 3; ++j) p.first_layer(1 * 4 + k, j) = 0.0;
  const auto out = mlp_forward(p, oracle::random_matrix(12, 3, rng));
  for (std::size_t r = 1; r < 12; ++r) CHECK(out(r, 1) == out(0, 1));
}

TEST_CASE("identity activation at m=1 is an affine map of the parent") {
  auto p = MlpParams::zeros(2, 1, Activation::Identity);
  p.first_layer(1, 0) = 1.5;  // variable 1 reads variable 0
  p.hidden_bias(1, 0) = 0.25;
  p.output(1, 0) = 2.0;
  const DenseMatrix x{{1.0, 9.0}, {-2.0, 9.0}, {0.5, 9.0}};
  const auto out = mlp_forward(p, x);
  for (std::size_t r = 0; r < 3; ++r) CHECK(out(r, 1) == doctest::Approx(2.0 * (1.5 * x(r, 0) + 0.25)));
}

TEST_CASE("mlp gradients match finite differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_mlp(3, 4, rng);
    const auto x = oracle::random_matrix(15, 3, rng);
    const ProximalTerm prox{0.2, oracle::random_matrix(12, 3, rng)};
    const AugmentedTerms terms{0.5, 3.0};
    const auto e = mlp_objective(p, x, 0.0, &prox, terms);
    MlpParams q = p;
    const auto fd = oracle::central_difference(
        [&](std::vector<double>& v) {
          unflatten(q, v);
          return mlp_objective(q, x, 0.0, &prox, terms).value;
        },
        flatten(p), 1e-6);
    auto got = flatten(e.gradient);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 4; ++k) got[(i * 4 + k) * 3 + i] = 0.0;
    CHECK(oracle::relative_error(got, fd) <= 1e-4);
  }
}

TEST_CASE("proximal term anchored at the current block contributes nothing") {
  std::mt19937_64 rng(8);
  const auto p = random_mlp(3, 2, rng);
  const auto x = oracle::random_matrix(10, 3, rng);
  const ProximalTerm prox{5.0, p.first_layer};
  const auto a = mlp_objective(p, x, 0.0, &prox, {});
  const auto b = mlp_objective(p, x, 0.0, nullptr, {});
  CHECK(a.value == b.value);
  CHECK(a.gradient.first_layer == b.gradient.first_layer);
}

TEST_CASE("augmented gradient is (rho h + alpha) grad h through the MLP path") {
  std::mt19937_64 rng(9);
  const auto p = random_mlp(3, 2, rng);
  const auto x = oracle::random_matrix(10, 3, rng);
  const double alpha = 0.4, rho = 7.0;
  const auto with = mlp_objective(p, x, 0.0, nullptr, {alpha, rho});
  const auto without = mlp_objective(p, x, 0.0, nullptr, {});
  const auto ac = first_layer_acyclicity(p.first_layer, 3, 2);
  const auto diff = with.gradient.first_layer - without.gradient.first_layer;
  const auto want = ac.gradient * (rho * ac.value + alpha);
  CHECK(oracle::relative_error(diff.storage(), want.storage(), 1e-12) <= 1e-10);
}

TEST_CASE("extract_weight_matrix takes column norms") {
  DenseMatrix first(4, 2);  // d=2, m=2
  first(2, 0) = 3.0;        // A_2 column 1 = (3, 4)
  first(3, 0) = 4.0;
  const auto w = extract_weight_matrix(first, 2, 2);
  CHECK(w(0, 1) == doctest::Approx(5.0));
  CHECK(w(1, 0) == 0.0);
  CHECK(extract_weight_matrix(DenseMatrix(4, 2), 2, 2) == DenseMatrix(2, 2));
}

TEST_CASE("extract_weight_matrix is nonnegative with zero diagonal") {
  std::mt19937_64 rng(10);
  const auto p = random_mlp(5, 3, rng);
  const auto w = extract_weight_matrix(p.first_layer, 5, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(w(i, i) == 0.0);
    for (std::size_t j = 0; j < 5; ++j) CHECK(w(i, j) >= 0.0);
  }
}

TEST_CASE("a zero W entry means the output ignores that input") {
  std::mt19937_64 rng(11);
  auto p = random_mlp(4, 3, rng);
  for (std::size_t k = 0; k < 3; ++k) p.first_layer(2 * 3 + k, 0) = 0.0;  // W(0,2) = 0
  REQUIRE(extract_weight_matrix(p.first_layer, 4, 3)(0, 2) == 0.0);
  auto x = oracle::random_matrix(8, 4, rng);
  const auto before = mlp_forward(p, x);
  for (std::size_t r = 0; r < 8; ++r) x(r, 0) += 10.0;
  const auto after = mlp_forward(p, x);
  for (std::size_t r = 0; r < 8; ++r) CHECK(after(r, 2) == before(r, 2));
}

TEST_CASE("first-layer acyclicity gradient matches finite differences") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_mlp(4, 2, rng);
    const auto ac = first_layer_acyclicity(p.first_layer, 4, 2);
    const auto fd = oracle::central_difference(
        [](std::vector<double>& v) { return first_layer_acyclicity(DenseMatrix(8, 4, v), 4, 2).value; },
        p.first_layer.storage(), 1e-6);
    CHECK(oracle::relative_error(ac.gradient.storage(), fd) <= 1e-5);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  std::mt19937_64 rng(13);
  const auto p = random_mlp(3, 4, rng);
  std::stringstream s;
  save_checkpoint(s, p);
  const auto q = load_mlp_checkpoint(s);
  CHECK(q.first_layer == p.first_layer);
  CHECK(q.hidden_bias == p.hidden_bias);
  CHECK(q.output == p.output);

  const LinearParams lin{zero_diagonal(oracle::random_matrix(3, 3, rng))};
  std::stringstream t;
  save_checkpoint(t, lin);
  CHECK(load_linear_checkpoint(t).w == lin.w);
}

TEST_CASE("validate rejects a self-input weight") {
  auto p = MlpParams::zeros(2, 1);
  p.first_layer(0, 0) = 1.0;
  CHECK_THROWS_AS(p.validate(), ShapeError);
}
