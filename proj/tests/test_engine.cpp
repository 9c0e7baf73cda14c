#include "doctest.h"
#include "oracles.hpp"

#include "fedcausal/engine.hpp"
#include "fedcausal/linalg.hpp"
#include "fedcausal/random.hpp"

#include <cmath>

using namespace fedcausal;

namespace {

HyperParams linear_hyper() { return HyperParams::defaults_for(ModelFamily::Linear); }

FederatedDataset linear_data(std::size_t d, std::size_t k, std::size_t n, std::uint64_t seed) {
  FederatedSpec spec;
  spec.partition = PartitionPlan::even(k, n);
  return make_federated(sample_dag({}, d, seed), spec, seed);
}

DenseMatrix scalar(double v) { return DenseMatrix(1, 1, v); }

}  // namespace

TEST_CASE("weighted_average examples") {
  const std::vector<DenseMatrix> same{scalar(1.5), scalar(1.5), scalar(1.5)};
  const std::vector<std::size_t> n3{1, 2, 3};
  CHECK(weighted_average(same, n3)(0, 0) == doctest::Approx(1.5));

  const std::vector<DenseMatrix> two{scalar(0), scalar(2)};
  const std::vector<std::size_t> equal{5, 5};
  CHECK(weighted_average(two, equal)(0, 0) == 1.0);

  const std::vector<DenseMatrix> skew{scalar(0), scalar(4)};
  const std::vector<std::size_t> n{100, 300};
  CHECK(weighted_average(skew, n)(0, 0) == 3.0);

  const std::vector<std::size_t> none{0, 0};
  CHECK_THROWS(weighted_average(two, none));
}

TEST_CASE("schedule_step: first round exits the inner loop") {
  const auto hyper = linear_hyper();
  const auto s = schedule_step(0.8, RoundState::initial(hyper), hyper);
  CHECK(s.control == Control::AdvanceOuter);
  CHECK(s.state.previous_h == 0.8);
  CHECK(s.state.alpha == 0.8);
  CHECK(s.state.rho == 1.0);
  CHECK(s.state.outer_round == 1);
}

TEST_CASE("schedule_step: insufficient progress multiplies rho") {
  const auto hyper = linear_hyper();
  RoundState st = RoundState::initial(hyper);
  st.previous_h = 0.6;
  const auto s = schedule_step(0.5, st, hyper);
  CHECK(s.control == Control::ContinueInner);
  CHECK(s.state.rho == 10.0);
  CHECK(s.state.alpha == 0.0);
  CHECK(s.state.previous_h == 0.6);
}

TEST_CASE("schedule_step: h below h_tol stops") {
  const auto hyper = linear_hyper();
  RoundState st = RoundState::initial(hyper);
  st.previous_h = 1e-3;
  st.rho = 100.0;
  const auto s = schedule_step(1e-12, st, hyper);
  CHECK(s.control == Control::Stop);
  CHECK(s.state.alpha == doctest::Approx(1e-10));
}

TEST_CASE("schedule_step: rho reaching rho_max stops") {
  const auto hyper = linear_hyper();
  RoundState st = RoundState::initial(hyper);
  st.previous_h = 1.0;
  st.rho = 1e15;
  const auto s = schedule_step(0.9, st, hyper);
  CHECK(s.state.rho == 1e16);
  CHECK(s.control == Control::Stop);
}

TEST_CASE("global_update: identical acyclic uploads are returned as is") {
  DenseMatrix w(3, 3);
  w(0, 1) = 1.2;
  w(1, 2) = -0.7;
  const std::vector<DenseMatrix> ups{w, w, w};
  const std::vector<std::size_t> n{10, 20, 30};
  const ModelShape shape{ModelFamily::Linear, 3, 1};
  const auto r = global_update(shape, ups, n, 0.5, 10.0, std::nullopt, linear_hyper().server_solver);
  CHECK(r.h == 0.0);
  CHECK(r.objective == doctest::Approx(0.0).epsilon(1e-14));
  CHECK((r.block - w).max_abs() <= 1e-12);
}

TEST_CASE("global_update: K=1 acyclic upload is a fixed point") {
  std::mt19937_64 rng(1);
  auto w = oracle::random_matrix(4, 4, rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j <= i; ++j) w(i, j) = 0.0;
  const std::vector<DenseMatrix> ups{w};
  const std::vector<std::size_t> n{50};
  const auto r = global_update({ModelFamily::Linear, 4, 1}, ups, n, 1.0, 100.0, std::nullopt,
                               linear_hyper().server_solver);
  CHECK((r.block - w).max_abs() <= 1e-8);
}

TEST_CASE("global_update breaks an opposing-edge tie; the plain average does not") {
  DenseMatrix a(2, 2), b(2, 2);
  a(0, 1) = 1.0;
  b(1, 0) = 1.0;
  const std::vector<DenseMatrix> ups{a, b};
  const std::vector<std::size_t> n{100, 100};
  const ModelShape shape{ModelFamily::Linear, 2, 1};
  const auto hyper = linear_hyper();
  const auto r = global_update(shape, ups, n, 0.0, 1e16, std::nullopt, hyper.server_solver);
  CHECK(acyclicity_value(r.block) <= 1e-8);
  CHECK_FALSE((std::abs(r.block(0, 1)) > hyper.threshold && std::abs(r.block(1, 0)) > hyper.threshold));

  const auto avg = global_update(shape, ups, n, 0.0, 1e8, std::nullopt, hyper.server_solver, false);
  CHECK(avg.block == weighted_average(ups, n));
  CHECK(acyclicity_value(avg.block) > 0.0);
}

TEST_CASE("local_update keeps an anchor that already explains its column") {
  // Noiseless x1 = 1.5 x0 and penalties off. The loss separates by column, so
  // column 1 of W stays at the anchor; column 0 is free to regress on x1 and
  // the objective goes to zero.
  std::mt19937_64 rng(2);
  auto x = oracle::random_matrix(50, 2, rng);
  for (std::size_t r = 0; r < 50; ++r) x(r, 1) = 1.5 * x(r, 0);
  DenseMatrix w(2, 2);
  w(0, 1) = 1.5;
  auto hyper = linear_hyper();
  hyper.lambda1 = 0.0;
  hyper.lambda2 = 0.0;
  ClientState c(0, x, {ModelFamily::Linear, 2, 1}, hyper, 1);
  const auto r = local_update(c, w, 0.0, 0.0, hyper);
  CHECK(std::abs(c.first_layer()(0, 1) - 1.5) <= 1e-4);
  CHECK(r.value_after <= 1e-8);
  CHECK(r.value_after <= r.value_before);
}

TEST_CASE("a huge lambda2 pins the local block to the global one") {
  const auto data = linear_data(5, 1, 200, 3);
  auto hyper = linear_hyper();
  hyper.lambda2 = 1e6;
  std::mt19937_64 rng(3);
  auto global = oracle::random_matrix(5, 5, rng, -0.3, 0.3);
  for (std::size_t i = 0; i < 5; ++i) global(i, i) = 0.0;
  ClientState c(0, data.clients[0].x, {ModelFamily::Linear, 5, 1}, hyper, 1);
  local_update(c, global, 0.0, 1.0, hyper);
  CHECK((c.first_layer() - global).frobenius_norm() <= 1e-2);
}

TEST_CASE("local objective is non-increasing across the solve") {
  const auto data = linear_data(6, 1, 100, 4);
  auto hyper = linear_hyper();
  for (double rho : {1.0, 100.0}) {
    ClientState c(0, data.clients[0].x, {ModelFamily::Linear, 6, 1}, hyper, 1);
    const auto r = local_update(c, DenseMatrix(6, 6), 0.3, rho, hyper);
    CHECK(r.value_after <= r.value_before);
  }
}

TEST_CASE("lambda2 sensitivity: larger lambda2 keeps clients closer to the global") {
  const auto data = linear_data(6, 1, 200, 5);
  std::mt19937_64 rng(5);
  auto global = oracle::random_matrix(6, 6, rng, -0.5, 0.5);
  for (std::size_t i = 0; i < 6; ++i) global(i, i) = 0.0;
  double last = std::numeric_limits<double>::infinity();
  for (double l2 : {0.0, 1.0, 100.0, 1e4}) {
    auto hyper = linear_hyper();
    hyper.lambda2 = l2;
    ClientState c(0, data.clients[0].x, {ModelFamily::Linear, 6, 1}, hyper, 1);
    local_update(c, global, 0.0, 1.0, hyper);
    const double dist = (c.first_layer() - global).frobenius_norm();
    CHECK(dist <= last + 1e-9);
    last = dist;
  }
}

TEST_CASE("federated runs end with an acyclic global") {
  const auto data = linear_data(5, 3, 100, 6);
  const auto hyper = linear_hyper();
  for (auto m : {Method::FedCausal, Method::NoAll, Method::NoWoAcy}) {
    const auto r = run_method(m, data, ModelFamily::Linear, hyper, {.seed = 1});
    CHECK(r.method == m);
    CHECK(r.final_h <= 1e-8);
    REQUIRE(r.metrics.has_value());
    CHECK(r.graph.d() == 5);
  }
}

TEST_CASE("NO-Avg with identical clients returns any client's solution") {
  auto data = linear_data(4, 3, 150, 7);
  for (auto& c : data.clients) c.x = data.clients[0].x;
  const auto hyper = linear_hyper();
  const auto avg = run_baseline(Method::NoAvg, data, ModelFamily::Linear, hyper, {.seed = 2});
  const auto one = centralized_notears(data.clients[0].x, ModelFamily::Linear, hyper,
                                       derive_seed(2, seed_stream::kModelInit));
  CHECK((avg.final_w - one.final_w).max_abs() <= 1e-12);
  CHECK(avg.communication_rounds() == 1);
}

TEST_CASE("K=1 FedCausal tracks centralized NOTEARS") {
  auto hyper = linear_hyper();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = linear_data(6, 1, 300, seed);
    const auto fed = run_fedcausal(data, ModelFamily::Linear, hyper, {.seed = seed});
    const auto cen = run_baseline(Method::NoAll, data, ModelFamily::Linear, hyper, {.seed = seed});
    const auto a = static_cast<long>(fed.metrics->shd), b = static_cast<long>(cen.metrics->shd);
    CHECK(std::abs(a - b) <= 2);
  }
}

TEST_CASE("communication cap stops after the given number of rounds") {
  const auto data = linear_data(5, 2, 100, 8);
  auto hyper = linear_hyper();
  hyper.max_communication_rounds = 4;
  const auto r = run_fedcausal(data, ModelFamily::Linear, hyper, {.seed = 1});
  CHECK(r.communication_rounds() == 4);
  CHECK(r.rounds.back().control == Control::Stop);
}

TEST_CASE("MLP shapes and the shared first-layer init") {
  const ModelShape shape{ModelFamily::Mlp, 4, 3};
  CHECK(shape.block_rows() == 12);
  CHECK(shape.block_stacks() == 4);
  auto hyper = HyperParams::defaults_for(ModelFamily::Mlp);
  const auto a = initial_first_layer(shape, hyper, 5);
  CHECK(a == initial_first_layer(shape, hyper, 5));
  const auto mask = shape.pinned_mask();
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t]) CHECK(a.values()[t] == 0.0);
  CHECK(a.max_abs() <= 0.5);
  CHECK(a.max_abs() > 0.0);
  hyper.first_layer_init = FirstLayerInit::Zero;
  CHECK(initial_first_layer(shape, hyper, 5) == DenseMatrix(12, 4));
}

TEST_CASE("hyperparameter validation names the field") {
  auto hyper = linear_hyper();
  hyper.gamma = 1.5;
  CHECK_THROWS_WITH(hyper.validate(), doctest::Contains("gamma"));
  hyper = linear_hyper();
  hyper.beta = 1.0;
  CHECK_THROWS_WITH(hyper.validate(), doctest::Contains("beta"));
}

TEST_CASE("method names round-trip") {
  for (auto m : {Method::FedCausal, Method::NoAll, Method::NoAvg, Method::NoWoAcy})
    CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS(parse_method("feddag"));
}
