#include "fedcausal/engine.hpp"
#include "fedcausal/linalg.hpp"
#include "fedcausal/models.hpp"
#include "fedcausal/transport.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace fedcausal;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  DenseMatrix m(r, c);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

void BM_MatrixExponential(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto m = random_matrix(d, d, 1, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(matrix_exponential(m));
}
BENCHMARK(BM_MatrixExponential)->Arg(10)->Arg(20)->Arg(40)->Arg(80);

void BM_AcyclicityGradient(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto w = random_matrix(d, d, 2, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(acyclicity_gradient(w));
}
BENCHMARK(BM_AcyclicityGradient)->Arg(10)->Arg(40)->Arg(80);

void BM_LinearObjective(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto x = random_matrix(200, d, 3, 1.0);
  const LinearLoss loss(x);
  const auto w = random_matrix(d, d, 4, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(loss.evaluate(w, 0.1, nullptr, {0.5, 10.0}));
}
BENCHMARK(BM_LinearObjective)->Arg(10)->Arg(40);

void BM_MlpObjective(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  auto p = MlpParams::initialize(d, 10, 5);
  p.first_layer = random_matrix(d * 10, d, 6, 0.3);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < 10; ++k) p.first_layer(i * 10 + k, i) = 0.0;
  const auto x = random_matrix(200, d, 7, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(mlp_objective(p, x, 0.01, nullptr, {0.5, 10.0}));
}
BENCHMARK(BM_MlpObjective)->Arg(10)->Arg(20)->Arg(40);

void BM_EncodeDecodeUpload(benchmark::State& state) {
  const auto d = static_cast<std::uint32_t>(state.range(0));
  ClientUpload u{1, 0, 200, ParameterBlock::from_matrix(random_matrix(d * 10, d, 8, 1.0), d)};
  for (auto _ : state) benchmark::DoNotOptimize(decode(encode(u)));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * d * d * 10 * 8);
}
BENCHMARK(BM_EncodeDecodeUpload)->Arg(20)->Arg(80);

}  // namespace

BENCHMARK_MAIN();
