// SPDX-License-Identifier: Apache-2.0
#include "cml/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "cml/errors.hpp"
#include "cml/param_store.hpp"
#include "cml/serialize.hpp"

namespace cml {

std::string to_string(TrajectoryOrder order) {
  switch (order) {
    case TrajectoryOrder::H2L: return "h2l";
    case TrajectoryOrder::L2H: return "l2h";
    case TrajectoryOrder::Explicit: return "explicit";
  }
  return "?";
}

TrajectoryOrder parse_trajectory_order(const std::string& text) {
  if (text == "h2l") return TrajectoryOrder::H2L;
  if (text == "l2h") return TrajectoryOrder::L2H;
  if (text == "explicit") return TrajectoryOrder::Explicit;
  throw ConfigError("unknown trajectory order '" + text + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Shortest text that parses back to the same double.
std::string fmt(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

Field size_field(std::string key, std::size_t ExperimentConfig::*outer) {
  return {key, [outer](const ExperimentConfig& c) { return std::to_string(c.*outer); },
          [key, outer](ExperimentConfig& c, const std::string& v) { c.*outer = to_u64(key, v); }};
}

template <typename Get>
Field num(std::string key, Get ref) {
  return {key, [ref](const ExperimentConfig& c) { return fmt(ref(const_cast<ExperimentConfig&>(c))); },
          [key, ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_double(key, v); }};
}

template <typename Get>
Field count(std::string key, Get ref) {
  return {key, [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); },
          [key, ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_u64(key, v); }};
}

std::string optimizer_name(OptimMode m) { return m == OptimMode::SGD ? "sgd" : "adamw"; }
OptimMode parse_optimizer(const std::string& key, const std::string& v) {
  if (v == "sgd") return OptimMode::SGD;
  if (v == "adamw") return OptimMode::AdamW;
  throw ConfigError(key + ": expected sgd or adamw, got '" + v + "'");
}

Field optimizer_field(std::string key, std::function<OptimConfig&(ExperimentConfig&)> ref) {
  return {key, [ref](const ExperimentConfig& c) { return optimizer_name(ref(const_cast<ExperimentConfig&>(c)).mode); },
          [key, ref](ExperimentConfig& c, const std::string& v) { ref(c).mode = parse_optimizer(key, v); }};
}

/// One lr for every group of an optimizer config.
Field lr_field(std::string key, std::function<OptimConfig&(ExperimentConfig&)> ref) {
  return {key, [ref](const ExperimentConfig& c) { return fmt(ref(const_cast<ExperimentConfig&>(c)).lr.at(GroupKind::Base)); },
          [key, ref](ExperimentConfig& c, const std::string& v) {
            const double lr = to_double(key, v);
            for (auto& [k, x] : ref(c).lr) x = lr;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using C = ExperimentConfig;
    std::vector<Field> f;
    f.push_back(count("languages.families", [](C& c) -> std::size_t& { return c.languages.n_families; }));
    f.push_back(count("languages.per_family", [](C& c) -> std::size_t& { return c.languages.langs_per_family; }));
    f.push_back(num("languages.p_in", [](C& c) -> double& { return c.languages.p_in; }));
    f.push_back(num("languages.p_out", [](C& c) -> double& { return c.languages.p_out; }));
    f.push_back(count("languages.features", [](C& c) -> std::size_t& { return c.languages.n_features; }));
    f.push_back(count("languages.concepts", [](C& c) -> std::size_t& { return c.languages.n_concepts; }));
    f.push_back(count("languages.classes", [](C& c) -> std::size_t& { return c.languages.n_concept_classes; }));
    f.push_back(num("languages.overlap", [](C& c) -> double& { return c.languages.overlap_fraction; }));
    f.push_back({"languages.resource_ratios",
                 [](const C& c) { return join<double>(c.languages.resource_ratios, fmt); },
                 [](C& c, const std::string& v) {
                   c.languages.resource_ratios.clear();
                   for (const auto& x : split_list(v)) {
                     c.languages.resource_ratios.push_back(to_double("languages.resource_ratios", x));
                   }
                 }});
    f.push_back(count("languages.max_examples", [](C& c) -> std::size_t& { return c.languages.max_examples; }));
    f.push_back(count("languages.seed", [](C& c) -> std::uint64_t& { return c.languages.seed; }));
    f.push_back({"task", [](const C& c) { return to_string(c.task); },
                 [](C& c, const std::string& v) { c.task = parse_task_kind(v); }});
    f.push_back(size_field("data.min_len", &C::min_len));
    f.push_back(size_field("data.max_len", &C::max_len));
    f.push_back(size_field("data.test_examples", &C::test_examples));
    f.push_back(size_field("data.stages", &C::stages));
    f.push_back({"seeds",
                 [](const C& c) {
                   return join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); });
                 },
                 [](C& c, const std::string& v) { c.seeds = parse_seed_list(v); }});
    f.push_back(count("model.layers", [](C& c) -> std::size_t& { return c.model.n_layers; }));
    f.push_back(count("model.d_model", [](C& c) -> std::size_t& { return c.model.d_model; }));
    f.push_back(count("model.heads", [](C& c) -> std::size_t& { return c.model.n_heads; }));
    f.push_back(count("model.d_ffn", [](C& c) -> std::size_t& { return c.model.d_ffn; }));
    f.push_back(count("model.max_seq_len", [](C& c) -> std::size_t& { return c.model.max_seq_len; }));
    f.push_back(count("model.bottleneck", [](C& c) -> std::size_t& { return c.model.adapter_bottleneck; }));
    f.push_back({"strategies",
                 [](const C& c) {
                   return join<StrategyKind>(c.strategies, [](const StrategyKind& k) { return to_string(k); });
                 },
                 [](C& c, const std::string& v) {
                   c.strategies.clear();
                   for (const auto& s : split_list(v)) c.strategies.push_back(parse_strategy(s));
                 }});
    auto inc = [](C& c) -> OptimConfig& { return c.strategy.inception.optim; };
    auto cont = [](C& c) -> OptimConfig& { return c.strategy.continuation.optim; };
    auto sft = [](C& c) -> OptimConfig& { return c.strategy.sft.optim; };
    f.push_back(count("inception.epochs", [](C& c) -> std::size_t& { return c.strategy.inception.epochs; }));
    f.push_back(count("inception.batch_size", [](C& c) -> std::size_t& { return c.strategy.inception.batch_size; }));
    f.push_back(lr_field("inception.lr", inc));
    f.push_back(optimizer_field("inception.optimizer", inc));
    f.push_back(num("inception.weight_decay", [](C& c) -> double& { return c.strategy.inception.optim.weight_decay; }));
    f.push_back(count("continuation.epochs", [](C& c) -> std::size_t& { return c.strategy.continuation.epochs; }));
    f.push_back(
        count("continuation.batch_size", [](C& c) -> std::size_t& { return c.strategy.continuation.batch_size; }));
    f.push_back(lr_field("continuation.lr", cont));
    f.push_back(optimizer_field("continuation.optimizer", cont));
    f.push_back(
        num("continuation.weight_decay", [](C& c) -> double& { return c.strategy.continuation.optim.weight_decay; }));
    f.push_back(num("laft.adapter_lr", [](C& c) -> double& { return c.strategy.laft.adapter_lr; }));
    f.push_back(num("laft.fixed_factor", [](C& c) -> double& { return c.strategy.laft.fixed_factor; }));
    f.push_back(count("laft.adapter_epochs", [](C& c) -> std::size_t& { return c.strategy.laft.adapter_epochs; }));
    f.push_back(count("laft.language_epochs", [](C& c) -> std::size_t& { return c.strategy.laft.language_epochs; }));
    f.push_back(num("laft.factor_slope", [](C& c) -> double& { return c.strategy.laft.factor_fn.slope; }));
    f.push_back(num("laft.factor_intercept", [](C& c) -> double& { return c.strategy.laft.factor_fn.intercept; }));
    f.push_back(num("laft.factor_step", [](C& c) -> double& { return c.strategy.laft.factor_fn.step; }));
    f.push_back(num("laft.factor_min", [](C& c) -> double& { return c.strategy.laft.factor_fn.min_factor; }));
    f.push_back(count("sft.ft_epochs", [](C& c) -> std::size_t& { return c.strategy.sft.ft_epochs; }));
    f.push_back(count("sft.st_epochs", [](C& c) -> std::size_t& { return c.strategy.sft.st_epochs; }));
    f.push_back(num("sft.rho", [](C& c) -> double& { return c.strategy.sft.rho; }));
    f.push_back(num("sft.continuation_rho", [](C& c) -> double& { return c.strategy.sft.continuation_rho; }));
    f.push_back({"sft.freeze_layer_norm", [](const C& c) { return std::string(c.strategy.sft.freeze_layer_norm ? "true" : "false"); },
                 [](C& c, const std::string& v) { c.strategy.sft.freeze_layer_norm = to_bool("sft.freeze_layer_norm", v); }});
    f.push_back(num("sft.mask_rate", [](C& c) -> double& { return c.strategy.sft.mask_rate; }));
    f.push_back(count("sft.batch_size", [](C& c) -> std::size_t& { return c.strategy.sft.batch_size; }));
    f.push_back(lr_field("sft.lr", sft));
    f.push_back({"trajectory.order", [](const C& c) { return to_string(c.order); },
                 [](C& c, const std::string& v) { c.order = parse_trajectory_order(v); }});
    f.push_back({"trajectory.languages",
                 [](const C& c) { return join<std::string>(c.explicit_order, [](const std::string& s) { return s; }); },
                 [](C& c, const std::string& v) { c.explicit_order = split_list(v); }});
    f.push_back({"out", [](const C& c) { return c.out.generic_string(); },
                 [](C& c, const std::string& v) { c.out = v; }});
    return f;
  }();
  return table;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(text)) out.push_back(to_u64("seeds", s));
  if (out.empty()) throw ConfigError("seeds: list is empty");
  return out;
}

void ExperimentConfig::validate() const {
  languages.validate();
  if (seeds.empty()) throw ConfigError("seeds: list is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds: duplicate seed");
  }
  if (stages < 2) throw ConfigError("data.stages: need an inception shard and at least one continuation shard");
  if (min_len == 0 || max_len < min_len) throw ConfigError("data.min_len/max_len: invalid range");
  if (max_len > model.max_seq_len) throw ConfigError("model.max_seq_len: shorter than data.max_len");
  if (test_examples == 0) throw ConfigError("data.test_examples: must be >= 1");
  if (strategies.empty()) throw ConfigError("strategies: list is empty");
  strategy.inception.validate();
  strategy.continuation.validate();
  strategy.laft.validate();
  strategy.sft.validate();
  if (order == TrajectoryOrder::Explicit) {
    if (explicit_order.empty()) throw ConfigError("trajectory.languages: required for an explicit order");
    if (std::set<std::string>(explicit_order.begin(), explicit_order.end()).size() != explicit_order.size()) {
      throw ConfigError("trajectory.languages: repeated language");
    }
  }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    it->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path));
}

std::string experiment_config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a(experiment_config_to_text(cfg)); }

}  // namespace cml
