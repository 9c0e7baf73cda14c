#include "doctest.h"

#include "fedcausal/config.hpp"

using namespace fedcausal;

TEST_CASE("a minimal file fills in the documented defaults") {
  const auto c = parse_config_text("[model]\nfamily = mlp\n");
  CHECK(c.family == ModelFamily::Mlp);
  CHECK(c.hyper.lambda1 == 0.01);
  CHECK(c.hyper.lambda2 == 1e-3);
  CHECK(c.hyper.rho_init == 1.0);
  CHECK(c.hyper.h_tol == 1e-11);
  CHECK(c.hyper.rho_max == 1e16);
  CHECK(c.hyper.gamma == 0.25);
  CHECK(c.hyper.beta == 10.0);
  CHECK(c.hyper.threshold == 0.3);
  CHECK(c.hyper.hidden_units == 10);
  CHECK(c.data.partition.clients == 10);
  CHECK(c.data.partition.samples_per_client == 200);
  CHECK(c.seeds == std::vector<std::uint64_t>{1});

  const auto lin = parse_config_text("[model]\nfamily = linear\n");
  CHECK(lin.hyper.lambda1 == 0.1);
  CHECK(lin.hyper.weight_decay == 0.0);
}

TEST_CASE("a missing family is an error") {
  CHECK_THROWS_WITH_AS(parse_config_text("[graph]\nd = 5\n"), doctest::Contains("model.family"),
                       ConfigError);
}

TEST_CASE("gamma outside (0, 1) is rejected by name") {
  CHECK_THROWS_WITH_AS(parse_config_text("[model]\nfamily = linear\n[hyper]\ngamma = 1.5\n"),
                       doctest::Contains("gamma"), ConfigError);
}

TEST_CASE("unknown keys and sections are errors") {
  CHECK_THROWS_WITH_AS(parse_config_text("[model]\nfamily = linear\nwidth = 3\n"),
                       doctest::Contains("model.width"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[model]\nfamily = linear\n[extra]\nx = 1\n"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("[model]\nfamily = linear\n[graph]\nd = ten\n"),
                       doctest::Contains("graph.d"), ConfigError);
}

TEST_CASE("emit then parse is the identity") {
  auto c = parse_config_text(R"([experiment]
name = rt
methods = fedcausal, no_avg
seeds = 3, 1, 4
trajectory = true
[graph]
kind = SF
d = 7
edge_factor = 3
[data]
regime = heterogeneous
partition = packages
clients = 4
packages = 12
package_size = 25
noise_scale = 0.7
[model]
family = mlp
hidden_units = 6
[hyper]
lambda1 = 0.123456789012345
rho_max = 1e12
max_communication_rounds = 16
[transport]
kind = socket
[sweep]
axis = clients
values = 2, 4
)");
  const auto text = emit_config(c);
  const auto back = parse_config_text(text);
  CHECK(emit_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(back.hyper.lambda1 == 0.123456789012345);
  CHECK(back.seeds == std::vector<std::uint64_t>{3, 1, 4});
  CHECK(back.methods == std::vector<Method>{Method::FedCausal, Method::NoAvg});
  CHECK(back.data.partition.mode == PartitionPlan::Mode::Packages);
  CHECK(back.transport == TransportKind::Socket);

  c.hyper.lambda1 = 0.2;
  CHECK(config_hash(c) != config_hash(back));
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("1, 2,3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK_THROWS(parse_seed_list("1, x"));
}
