// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cml/config.hpp"
#include "cml/metrics.hpp"
#include "cml/strategies.hpp"
#include "cml/synth.hpp"

namespace cml {

/// Language set, full training corpora, per-seed shards and the fixed test sets.
struct Benchmark {
  LanguageSet languages;
  TaskKind task = TaskKind::TokenTag;
  LanguageData train;
  std::map<std::string, StagePartition> partitions;
  LanguageData test;

  /// Examples of shard `s` for every language.
  LanguageData shard(std::size_t s) const;
  std::vector<Example> shard(const std::string& language, std::size_t s) const;
};

/// Corpora and test sets depend on the language seed only; shard assignment on `seed`.
Benchmark build_benchmark(const ExperimentConfig& cfg, std::uint64_t seed);
/// Model config with vocabulary and label counts taken from the benchmark.
ModelConfig resolve_model_config(const ExperimentConfig& cfg, const LanguageSet& languages);

/// Descending resource count (H2L) with ties by id, its exact reverse (L2H), or the explicit list.
std::vector<std::string> trajectory_order(const ExperimentConfig& cfg, const LanguageSet& languages);

/// Runs `n` jobs on up to CML_THREADS threads (default: hardware concurrency).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job);
std::size_t thread_budget();

struct ArmResult {
  std::string language;
  bool ok = false;
  std::string error;
  PerfRecord after;
  double seconds = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  PerfRecord before;
  std::vector<ArmResult> arms;
  std::optional<ChangeMatrix> matrix;
  std::optional<MetricsReport> report;
  std::optional<double> closest_language;
  double inception_seconds = 0.0;
};

struct StrategyResult {
  StrategyKind kind = StrategyKind::FFT;
  std::vector<SeedResult> seeds;
  std::optional<ChangeMatrix> mean_matrix;
  /// Mean over seeds of each seed's row-averaged metrics.
  std::optional<RowMetrics> mean;
  std::optional<double> closest_language;
  bool ok() const;
};

struct ExperimentResult {
  ExperimentConfig config;
  DistanceMatrix distances;
  std::vector<StrategyResult> strategies;
  bool ok() const;
  const StrategyResult& strategy(StrategyKind kind) const;
};

/// Per seed and strategy: inception, one continuation arm per language on
/// its first continuation shard, before/after evaluation on the test sets.
/// A failing arm is recorded and the run continues.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct TrajectoryStage {
  std::string language;
  std::vector<double> changes;  ///< aligned with the sorted language list
  RowMetrics metrics;
};

struct TrajectorySeed {
  std::uint64_t seed = 0;
  std::vector<TrajectoryStage> stages;
  std::size_t worst_stage = 0;  ///< 1-based
  double worst_loss = 0.0;
};

struct TrajectoryResult {
  StrategyKind kind = StrategyKind::FFT;
  std::vector<std::string> order;
  std::vector<std::string> languages;
  std::vector<TrajectorySeed> seeds;
  double mean_worst_loss = 0.0;
};

/// Stages run in order on the evolving model; each stage is compared with
/// the model right before it.
std::vector<TrajectoryResult> run_trajectory(const ExperimentConfig& cfg);

}  // namespace cml
