// SPDX-License-Identifier: Apache-2.0
#include "cml/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "cml/errors.hpp"
#include "cml/log.hpp"

namespace cml {

namespace {

enum SeedStream : std::uint64_t {
  kTrainCorpus = 100,
  kTestCorpus = 200,
  kPartition = 300,
  kStrategySeed = 400,
  kArm = 500,
  kStage = 600,
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> row_for(const PerfRecord& before, const PerfRecord& after) {
  std::vector<double> row;
  for (const auto& [lang, b] : before) row.push_back(percent_change(b, after.at(lang)));
  return row;
}

/// Inception for one (strategy, seed), including language matrices for SFT.
DeployedModel deploy(const ExperimentConfig& cfg, const Benchmark& bench, StrategyKind kind, std::uint64_t seed) {
  const ModelConfig mc = resolve_model_config(cfg, bench.languages);
  const LanguageData inception = bench.shard(0);
  const std::uint64_t s = derive_seed(seed, kStrategySeed);
  if (kind != StrategyKind::SFT) return run_inception(kind, mc, bench.task, inception, cfg.strategy, s);
  const Model base = Model::build(mc, derive_seed(s, 1));
  auto matrices = pretrain_language_matrices(base, inception, cfg.strategy.sft, s);
  return inception_sft(base, bench.task, inception, cfg.strategy.sft, std::move(matrices), s);
}

}  // namespace

LanguageData Benchmark::shard(std::size_t s) const {
  LanguageData out;
  for (const auto& [lang, exs] : train) out[lang] = shard(lang, s);
  return out;
}

std::vector<Example> Benchmark::shard(const std::string& language, std::size_t s) const {
  const auto& part = partitions.at(language);
  if (s >= part.shards.size()) throw InputError("shard " + std::to_string(s) + " does not exist");
  const auto& exs = train.at(language);
  std::vector<Example> out;
  for (std::size_t i : part.shards[s]) out.push_back(exs[i]);
  return out;
}

Benchmark build_benchmark(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Benchmark b;
  b.languages = generate_language_set(cfg.languages);
  b.task = cfg.task;
  const std::uint64_t lang_seed = cfg.languages.seed;
  std::uint64_t i = 0;
  for (const auto& p : b.languages.profiles) {
    CorpusSpec spec{cfg.task, p.resource_count, cfg.min_len, cfg.max_len, cfg.languages.n_concept_classes};
    b.train[p.id] = generate_corpus(p, spec, derive_seed(lang_seed, kTrainCorpus + i)).examples;
    spec.n_examples = cfg.test_examples;
    b.test[p.id] = generate_corpus(p, spec, derive_seed(lang_seed, kTestCorpus + i)).examples;
    b.partitions[p.id] = partition_stages(p.resource_count, cfg.stages, derive_seed(seed, kPartition + i));
    ++i;
  }
  return b;
}

ModelConfig resolve_model_config(const ExperimentConfig& cfg, const LanguageSet& languages) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = languages.vocab_size;
  mc.n_tags = tag_count(languages.n_concept_classes);
  mc.n_classes = languages.n_concept_classes;
  mc.validate();
  return mc;
}

std::vector<std::string> trajectory_order(const ExperimentConfig& cfg, const LanguageSet& languages) {
  if (cfg.order == TrajectoryOrder::Explicit) {
    std::vector<std::string> ids = languages.language_ids();
    std::vector<std::string> got = cfg.explicit_order;
    std::sort(ids.begin(), ids.end());
    std::sort(got.begin(), got.end());
    if (std::adjacent_find(got.begin(), got.end()) != got.end()) {
      throw ConfigError("trajectory.languages: repeated language");
    }
    if (got != ids) throw ConfigError("trajectory.languages: must list every language exactly once");
    return cfg.explicit_order;
  }
  std::vector<const LanguageProfile*> ps;
  for (const auto& p : languages.profiles) ps.push_back(&p);
  std::sort(ps.begin(), ps.end(), [](const LanguageProfile* a, const LanguageProfile* b) {
    if (a->resource_count != b->resource_count) return a->resource_count > b->resource_count;
    return a->id < b->id;
  });
  std::vector<std::string> order;
  for (const auto* p : ps) order.push_back(p->id);
  if (cfg.order == TrajectoryOrder::L2H) std::reverse(order.begin(), order.end());
  return order;
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("CML_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job) {
  const std::size_t threads = std::min(thread_budget(), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

bool StrategyResult::ok() const {
  return std::all_of(seeds.begin(), seeds.end(), [](const SeedResult& s) {
    return std::all_of(s.arms.begin(), s.arms.end(), [](const ArmResult& a) { return a.ok; });
  });
}

bool ExperimentResult::ok() const {
  return std::all_of(strategies.begin(), strategies.end(), [](const StrategyResult& s) { return s.ok(); });
}

const StrategyResult& ExperimentResult::strategy(StrategyKind kind) const {
  for (const auto& s : strategies) {
    if (s.kind == kind) return s;
  }
  throw InputError("strategy " + to_string(kind) + " was not run");
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;

  std::vector<Benchmark> benches;
  for (std::uint64_t seed : cfg.seeds) benches.push_back(build_benchmark(cfg, seed));
  result.distances = benches.front().languages.distances;
  const auto langs = benches.front().languages.language_ids();

  struct Cell {
    std::size_t strategy, seed;
  };
  std::vector<Cell> cells;
  for (std::size_t k = 0; k < cfg.strategies.size(); ++k) {
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) cells.push_back({k, s});
  }
  result.strategies.resize(cfg.strategies.size());
  for (std::size_t k = 0; k < cfg.strategies.size(); ++k) {
    result.strategies[k].kind = cfg.strategies[k];
    result.strategies[k].seeds.resize(cfg.seeds.size());
  }

  std::vector<std::optional<DeployedModel>> deployed(cells.size());
  parallel_for(cells.size(), [&](std::size_t c) {
    const auto [k, s] = cells[c];
    const auto t0 = std::chrono::steady_clock::now();
    const Benchmark& bench = benches[s];
    deployed[c] = deploy(cfg, bench, cfg.strategies[k], cfg.seeds[s]);
    auto& seed_result = result.strategies[k].seeds[s];
    seed_result.seed = cfg.seeds[s];
    seed_result.before = evaluate(*deployed[c], bench.test);
    seed_result.inception_seconds = seconds_since(t0);
    seed_result.arms.resize(langs.size());
    log_info(to_string(cfg.strategies[k]) + " seed " + std::to_string(cfg.seeds[s]) + ": inception done");
  });

  parallel_for(cells.size() * langs.size(), [&](std::size_t job) {
    const auto [k, s] = cells[job / langs.size()];
    const std::size_t li = job % langs.size();
    const std::string& lang = langs[li];
    const Benchmark& bench = benches[s];
    ArmResult& arm = result.strategies[k].seeds[s].arms[li];
    arm.language = lang;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ContinuationPlan plan{lang, bench.shard(lang, 1)};
      const DeployedModel updated = run_continuation(*deployed[job / langs.size()], plan, cfg.strategy,
                                                     &bench.languages.distances,
                                                     derive_seed(derive_seed(cfg.seeds[s], kArm), li));
      arm.after = evaluate(updated, bench.test);
      arm.ok = true;
    } catch (const std::exception& e) {
      arm.error = e.what();
      log_warn("arm " + to_string(cfg.strategies[k]) + "/" + lang + " failed: " + e.what());
    }
    arm.seconds = seconds_since(t0);
  });

  for (auto& sr : result.strategies) {
    std::vector<ChangeMatrix> matrices;
    std::vector<RowMetrics> means;
    std::vector<double> closest;
    for (auto& seed : sr.seeds) {
      if (!std::all_of(seed.arms.begin(), seed.arms.end(), [](const ArmResult& a) { return a.ok; })) continue;
      std::map<std::string, PerfRecord> after;
      for (const auto& a : seed.arms) after[a.language] = a.after;
      seed.matrix = build_change_matrix(seed.before, after);
      seed.report = metrics_report(*seed.matrix);
      if (seed.matrix->size() >= 3) seed.closest_language = closest_language_check(result.distances, *seed.matrix);
      matrices.push_back(*seed.matrix);
      means.push_back(seed.report->mean);
      if (seed.closest_language) closest.push_back(*seed.closest_language);
    }
    if (!matrices.empty()) {
      sr.mean_matrix = average_matrices(matrices);
      sr.mean = mean_metrics(means);
    }
    if (!closest.empty()) {
      double sum = 0.0;
      for (double c : closest) sum += c;
      sr.closest_language = sum / static_cast<double>(closest.size());
    }
  }
  return result;
}

std::vector<TrajectoryResult> run_trajectory(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<Benchmark> benches;
  for (std::uint64_t seed : cfg.seeds) benches.push_back(build_benchmark(cfg, seed));
  const auto order = trajectory_order(cfg, benches.front().languages);

  std::vector<TrajectoryResult> results(cfg.strategies.size());
  for (std::size_t k = 0; k < cfg.strategies.size(); ++k) {
    results[k].kind = cfg.strategies[k];
    results[k].order = order;
    results[k].seeds.resize(cfg.seeds.size());
  }
  parallel_for(cfg.strategies.size() * cfg.seeds.size(), [&](std::size_t job) {
    const std::size_t k = job / cfg.seeds.size(), s = job % cfg.seeds.size();
    const Benchmark& bench = benches[s];
    DeployedModel model = deploy(cfg, bench, cfg.strategies[k], cfg.seeds[s]);
    PerfRecord prev = evaluate(model, bench.test);
    TrajectorySeed& out = results[k].seeds[s];
    out.seed = cfg.seeds[s];
    std::vector<double> losses;
    for (std::size_t t = 0; t < order.size(); ++t) {
      ContinuationPlan plan{order[t], bench.shard(order[t], 1)};
      model = run_continuation(std::move(model), plan, cfg.strategy, &bench.languages.distances,
                               derive_seed(derive_seed(cfg.seeds[s], kStage), t));
      PerfRecord next = evaluate(model, bench.test);
      TrajectoryStage stage{order[t], row_for(prev, next), {}};
      stage.metrics = row_metrics(stage.changes);
      losses.push_back(stage.metrics.avg_percent_loss);
      out.stages.push_back(std::move(stage));
      prev = std::move(next);
    }
    out.worst_stage = worst_case_stage(losses);
    out.worst_loss = losses[out.worst_stage - 1];
  });
  for (auto& r : results) {
    r.languages = benches.front().languages.language_ids();
    std::sort(r.languages.begin(), r.languages.end());
    double sum = 0.0;
    for (const auto& s : r.seeds) sum += s.worst_loss;
    r.mean_worst_loss = sum / static_cast<double>(r.seeds.size());
  }
  return results;
}

}  // namespace cml
