#include "fedcausal/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fedcausal {

namespace pt = boost::property_tree;

std::string to_string(DataSource source) {
  return source == DataSource::Synthetic ? "synthetic" : "sachs";
}

DataSource parse_data_source(const std::string& text) {
  if (text == "synthetic") return DataSource::Synthetic;
  if (text == "sachs") return DataSource::Sachs;
  throw std::invalid_argument("unknown data source '" + text + "' (expected synthetic or sachs)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::None: return "none";
    case SweepAxis::Variables: return "d";
    case SweepAxis::Clients: return "clients";
    case SweepAxis::Partition: return "partition";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "none" || text.empty()) return SweepAxis::None;
  if (text == "d") return SweepAxis::Variables;
  if (text == "clients" || text == "K") return SweepAxis::Clients;
  if (text == "partition") return SweepAxis::Partition;
  throw std::invalid_argument("unknown sweep axis '" + text + "' (expected d, clients or partition)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& text) {
  double v = 0.0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    if (t == "inf") return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t to_unsigned(const std::string& text) {
  std::uint64_t v = 0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool to_bool(const std::string& text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + text + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T, class F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += f(items[i]);
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Member>
Field size_field(std::string section, std::string key, Member member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) {
            member(c) = static_cast<std::decay_t<decltype(member(c))>>(to_unsigned(v));
          },
          [member](const ExperimentConfig& c) {
            return fmt(static_cast<std::uint64_t>(member(const_cast<ExperimentConfig&>(c))));
          }};
}

template <class Member>
Field real_field(std::string section, std::string key, Member member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) { member(c) = to_double(v); },
          [member](const ExperimentConfig& c) {
            return fmt(static_cast<double>(member(const_cast<ExperimentConfig&>(c))));
          }};
}

template <class Member>
Field bool_field(std::string section, std::string key, Member member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) { member(c) = to_bool(v); },
          [member](const ExperimentConfig& c) {
            return fmt(static_cast<bool>(member(const_cast<ExperimentConfig&>(c))));
          }};
}

void add_solver_fields(std::vector<Field>& f, const std::string& section,
                       SolverConfig& (*pick)(ExperimentConfig&)) {
  f.push_back(size_field(section, "max_iterations",
                         [pick](ExperimentConfig& c) -> int& { return pick(c).max_iterations; }));
  f.push_back(real_field(section, "gradient_tolerance", [pick](ExperimentConfig& c) -> double& {
    return pick(c).gradient_tolerance;
  }));
  f.push_back(size_field(section, "history_size",
                         [pick](ExperimentConfig& c) -> int& { return pick(c).history_size; }));
  f.push_back(real_field(section, "function_tolerance", [pick](ExperimentConfig& c) -> double& {
    return pick(c).function_tolerance;
  }));
  f.push_back(real_field(section, "c1",
                         [pick](ExperimentConfig& c) -> double& { return pick(c).line_search.c1; }));
  f.push_back(real_field(section, "shrink", [pick](ExperimentConfig& c) -> double& {
    return pick(c).line_search.shrink;
  }));
  f.push_back(size_field(section, "max_steps", [pick](ExperimentConfig& c) -> int& {
    return pick(c).line_search.max_steps;
  }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    using C = ExperimentConfig;
    f.push_back({"experiment", "name", [](C& c, const std::string& v) { c.name = trim(v); },
                 [](const C& c) { return c.name; }});
    f.push_back({"experiment", "methods",
                 [](C& c, const std::string& v) {
                   c.methods.clear();
                   for (const auto& m : split_list(v)) c.methods.push_back(parse_method(m));
                 },
                 [](const C& c) {
                   return join(c.methods, [](Method m) { return to_string(m); });
                 }});
    f.push_back({"experiment", "seeds",
                 [](C& c, const std::string& v) { c.seeds = parse_seed_list(v); },
                 [](const C& c) {
                   return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
                 }});
    f.push_back({"experiment", "output",
                 [](C& c, const std::string& v) { c.output_dir = trim(v); },
                 [](const C& c) { return c.output_dir.string(); }});
    f.push_back(bool_field("experiment", "trajectory", [](C& c) -> bool& { return c.trajectory; }));

    f.push_back({"graph", "kind",
                 [](C& c, const std::string& v) { c.graph.kind = parse_graph_kind(trim(v)); },
                 [](const C& c) { return to_string(c.graph.kind); }});
    f.push_back(size_field("graph", "d", [](C& c) -> std::size_t& { return c.d; }));
    f.push_back(real_field("graph", "edge_factor", [](C& c) -> double& { return c.graph.edge_factor; }));

    f.push_back({"data", "source",
                 [](C& c, const std::string& v) { c.source = parse_data_source(trim(v)); },
                 [](const C& c) { return to_string(c.source); }});
    f.push_back({"data", "regime",
                 [](C& c, const std::string& v) { c.data.regime = parse_regime(trim(v)); },
                 [](const C& c) { return to_string(c.data.regime); }});
    f.push_back({"data", "mechanism",
                 [](C& c, const std::string& v) { c.data.iid_kind = parse_mechanism_kind(trim(v)); },
                 [](const C& c) { return to_string(c.data.iid_kind); }});
    f.push_back(bool_field("data", "standardize", [](C& c) -> bool& { return c.data.standardize; }));
    f.push_back({"data", "partition",
                 [](C& c, const std::string& v) {
                   const auto t = trim(v);
                   if (t == "even") c.data.partition.mode = PartitionPlan::Mode::Even;
                   else if (t == "packages") c.data.partition.mode = PartitionPlan::Mode::Packages;
                   else throw std::invalid_argument("expected even or packages, got '" + t + "'");
                 },
                 [](const C& c) {
                   return std::string(c.data.partition.mode == PartitionPlan::Mode::Even ? "even"
                                                                                        : "packages");
                 }});
    f.push_back(size_field("data", "clients", [](C& c) -> std::size_t& { return c.data.partition.clients; }));
    f.push_back(size_field("data", "samples_per_client",
                           [](C& c) -> std::size_t& { return c.data.partition.samples_per_client; }));
    f.push_back(size_field("data", "packages", [](C& c) -> std::size_t& { return c.data.partition.packages; }));
    f.push_back(size_field("data", "package_size",
                           [](C& c) -> std::size_t& { return c.data.partition.package_size; }));
    f.push_back(real_field("data", "weight_low", [](C& c) -> double& { return c.data.settings.weight_low; }));
    f.push_back(real_field("data", "weight_high", [](C& c) -> double& { return c.data.settings.weight_high; }));
    f.push_back(size_field("data", "mlp_hidden", [](C& c) -> std::size_t& { return c.data.settings.mlp_hidden; }));
    f.push_back(real_field("data", "gp_bandwidth", [](C& c) -> double& { return c.data.settings.gp_bandwidth; }));
    f.push_back(real_field("data", "noise_scale", [](C& c) -> double& { return c.data.settings.noise_scale; }));
    f.push_back({"data", "sachs_csv", [](C& c, const std::string& v) { c.sachs_csv = trim(v); },
                 [](const C& c) { return c.sachs_csv.string(); }});
    f.push_back({"data", "sachs_truth", [](C& c, const std::string& v) { c.sachs_truth = trim(v); },
                 [](const C& c) { return c.sachs_truth.string(); }});
    f.push_back(size_field("data", "sachs_samples", [](C& c) -> std::size_t& { return c.sachs_samples; }));

    f.push_back({"model", "family",
                 [](C& c, const std::string& v) { c.family = parse_model_family(trim(v)); },
                 [](const C& c) { return to_string(c.family); }});
    f.push_back(size_field("model", "hidden_units", [](C& c) -> std::size_t& { return c.hyper.hidden_units; }));
    f.push_back({"model", "activation",
                 [](C& c, const std::string& v) { c.hyper.activation = parse_activation(trim(v)); },
                 [](const C& c) { return to_string(c.hyper.activation); }});
    f.push_back({"model", "first_layer_init",
                 [](C& c, const std::string& v) { c.hyper.first_layer_init = parse_first_layer_init(trim(v)); },
                 [](const C& c) { return to_string(c.hyper.first_layer_init); }});

    f.push_back(real_field("hyper", "alpha_init", [](C& c) -> double& { return c.hyper.alpha_init; }));
    f.push_back(real_field("hyper", "rho_init", [](C& c) -> double& { return c.hyper.rho_init; }));
    f.push_back(real_field("hyper", "h_tol", [](C& c) -> double& { return c.hyper.h_tol; }));
    f.push_back(real_field("hyper", "rho_max", [](C& c) -> double& { return c.hyper.rho_max; }));
    f.push_back(real_field("hyper", "gamma", [](C& c) -> double& { return c.hyper.gamma; }));
    f.push_back(real_field("hyper", "beta", [](C& c) -> double& { return c.hyper.beta; }));
    f.push_back(real_field("hyper", "lambda1", [](C& c) -> double& { return c.hyper.lambda1; }));
    f.push_back(real_field("hyper", "lambda2", [](C& c) -> double& { return c.hyper.lambda2; }));
    f.push_back(real_field("hyper", "weight_decay", [](C& c) -> double& { return c.hyper.weight_decay; }));
    f.push_back(real_field("hyper", "threshold", [](C& c) -> double& { return c.hyper.threshold; }));
    f.push_back(size_field("hyper", "max_outer_rounds",
                           [](C& c) -> std::size_t& { return c.hyper.max_outer_rounds; }));
    f.push_back(size_field("hyper", "max_communication_rounds",
                           [](C& c) -> std::size_t& { return c.hyper.max_communication_rounds; }));
    f.push_back(size_field("hyper", "local_epochs", [](C& c) -> std::size_t& { return c.hyper.local_epochs; }));

    add_solver_fields(f, "local_solver", [](C& c) -> SolverConfig& { return c.hyper.local_solver; });
    add_solver_fields(f, "server_solver", [](C& c) -> SolverConfig& { return c.hyper.server_solver; });

    f.push_back({"transport", "kind",
                 [](C& c, const std::string& v) { c.transport = parse_transport_kind(trim(v)); },
                 [](const C& c) { return to_string(c.transport); }});
    f.push_back({"transport", "endpoint", [](C& c, const std::string& v) { c.endpoint = trim(v); },
                 [](const C& c) { return c.endpoint; }});

    f.push_back({"sweep", "axis",
                 [](C& c, const std::string& v) { c.sweep_axis = parse_sweep_axis(trim(v)); },
                 [](const C& c) { return to_string(c.sweep_axis); }});
    f.push_back({"sweep", "values", [](C& c, const std::string& v) { c.sweep_values = split_list(v); },
                 [](const C& c) { return join(c.sweep_values, [](const std::string& s) { return s; }); }});
    f.push_back(size_field("sweep", "total_samples",
                           [](C& c) -> std::size_t& { return c.sweep_total_samples; }));
    return f;
  }();
  return table;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) out.push_back(to_unsigned(s));
  return out;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  if (methods.empty()) fail("experiment.methods", "at least one method is required");
  if (seeds.empty()) fail("experiment.seeds", "at least one seed is required");
  if (source == DataSource::Synthetic) {
    if (d == 0) fail("graph.d", "must be >= 1");
    if (graph.edge_factor < 1.0) fail("graph.edge_factor", "must be >= 1");
  }
  if (data.partition.clients == 0) fail("data.clients", "must be >= 1");
  if (data.partition.mode == PartitionPlan::Mode::Even && data.partition.samples_per_client == 0) {
    fail("data.samples_per_client", "must be >= 1");
  }
  if (data.partition.mode == PartitionPlan::Mode::Packages) {
    if (data.partition.package_size == 0) fail("data.package_size", "must be >= 1");
    if (data.partition.packages < data.partition.clients) {
      fail("data.packages", "must be at least the number of clients");
    }
  }
  if (data.settings.weight_low <= 0.0 || data.settings.weight_high < data.settings.weight_low) {
    fail("data.weight_low", "need 0 < weight_low <= weight_high");
  }
  if (source == DataSource::Sachs && sachs_samples < data.partition.clients) {
    fail("data.sachs_samples", "must be at least the number of clients");
  }
  try {
    hyper.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (sweep_axis != SweepAxis::None && sweep_values.empty()) {
    fail("sweep.values", "a sweep needs at least one value");
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  std::set<std::pair<std::string, std::string>> known;
  for (const auto& f : fields()) known.emplace(f.section, f.key);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' is outside any section");
    }
    for (const auto& [key, value] : body) {
      if (!known.count({section, key})) throw ConfigError("unknown key " + section + "." + key);
    }
  }

  // The family picks the hyperparameter defaults, so it is the one required key.
  ExperimentConfig c;
  const auto family = tree.get_optional<std::string>("model.family");
  if (!family) throw ConfigError("model.family: missing required key");
  try {
    c.family = parse_model_family(trim(*family));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model.family: ") + e.what());
  }
  c.hyper = HyperParams::defaults_for(c.family);

  for (const auto& f : fields()) {
    const auto section = tree.get_child_optional(f.section);
    if (!section) continue;
    const auto value = section->get_optional<std::string>(pt::ptree::path_type(f.key, '\0'));
    if (!value) continue;
    try {
      f.set(c, *value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(f.section + "." + f.key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string emit_config(const ExperimentConfig& config) {
  std::string out;
  std::string current;
  for (const auto& f : fields()) {
    if (f.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = emit_config(config);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("config_hash: SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace fedcausal
