// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cml/metrics.hpp"
#include "cml/model.hpp"
#include "cml/sparse_update.hpp"
#include "cml/training.hpp"
#include "cml/uriel.hpp"

namespace cml {

enum class StrategyKind { FFT, SFT, LAFT, LAFTUriel };

std::string to_string(StrategyKind kind);
/// Accepts fft, sft, laft, laft-uriel.
StrategyKind parse_strategy(const std::string& text);

struct SftConfig {
  std::size_t ft_epochs = 3;  ///< pilot
  std::size_t st_epochs = 10; ///< sparse
  double rho = 0.05;          ///< trainable fraction for language matrices and inception
  double continuation_rho = 0.05;
  bool freeze_layer_norm = true;
  double mask_rate = 0.15;
  std::size_t batch_size = 16;
  OptimConfig optim = OptimConfig::uniform(1e-3);

  void validate() const;
};

struct LaftConfig {
  double adapter_lr = 1e-3;
  double fixed_factor = 10.0;
  std::size_t adapter_epochs = 3;   ///< shared adapter + head on all languages
  std::size_t language_epochs = 3;  ///< each cloned adapter on its own language
  DivisionFactorFn factor_fn{};

  void validate() const;
};

struct StrategyConfig {
  TrainConfig inception;
  TrainConfig continuation;
  SftConfig sft;
  LaftConfig laft;
};

/// The model currently serving all languages, plus the per-language artifacts
/// its strategy needs at inference.
struct DeployedModel {
  Model model;
  StrategyKind kind = StrategyKind::FFT;
  TaskKind task = TaskKind::TokenTag;
  std::vector<std::string> languages;
  std::map<std::string, SparseUpdate> language_matrices;
  std::vector<SparseUpdate> task_updates;
  std::size_t stage = 0;

  /// Throws DependencyError when an artifact required by `kind` is missing.
  void validate() const;
};

struct ContinuationPlan {
  std::string language;
  std::vector<Example> examples;
};

struct FixedFactor {
  double factor = 10.0;
};
struct UrielFactor {
  DistanceMatrix distances;
  DivisionFactorFn fn{};
};
using FactorSource = std::variant<FixedFactor, UrielFactor>;

double resolve_factor(const FactorSource& source, const std::string& language);

/// Coordinates of the k largest |store - snapshot| entries among parameters
/// passing `filter`; ties by (name, index).
std::set<std::pair<std::string, std::size_t>> top_k_changed(const NamedParamStore& store, const Snapshot& snap,
                                                            const GroupFilter& filter, std::size_t k);

/// floor(rho * count); throws ConfigError below 1.
std::size_t sparsity_budget(double rho, std::size_t count);

/// Per language: pilot masked-token training, top-k encoder coordinates,
/// rewind, sparse training. Every result shares the encoder fingerprint of `base`.
std::map<std::string, SparseUpdate> pretrain_language_matrices(const Model& base, const LanguageData& corpora,
                                                               const SftConfig& cfg, std::uint64_t seed);

/// Stage-0 model. SFT needs `language_matrices`; the other strategies ignore it.
DeployedModel run_inception(StrategyKind kind, const ModelConfig& model_cfg, TaskKind task, const LanguageData& data,
                            const StrategyConfig& cfg, std::uint64_t seed,
                            const std::map<std::string, SparseUpdate>& language_matrices = {});
/// SFT inception on an existing base (the one the language matrices were trained from).
DeployedModel inception_sft(Model base, TaskKind task, const LanguageData& data, const SftConfig& cfg,
                            std::map<std::string, SparseUpdate> language_matrices, std::uint64_t seed);

DeployedModel continuation_fft(DeployedModel deployed, const ContinuationPlan& plan, const TrainConfig& cfg,
                               std::uint64_t seed);
DeployedModel continuation_sft(DeployedModel deployed, const ContinuationPlan& plan, const SftConfig& cfg,
                               std::uint64_t seed);
/// Adapter of the plan language and the head at adapter_lr; base and layer
/// norms at adapter_lr / factor.
DeployedModel continuation_laft(DeployedModel deployed, const ContinuationPlan& plan, const TrainConfig& cfg,
                                double adapter_lr, const FactorSource& factor, std::uint64_t seed);

/// Dispatches on deployed.kind. LAFT-URIEL needs `distances`.
DeployedModel run_continuation(DeployedModel deployed, const ContinuationPlan& plan, const StrategyConfig& cfg,
                               const DistanceMatrix* distances, std::uint64_t seed);

/// Adds the language matrix of `language` to `store` (stale bases allowed with a one-time warning).
AppliedUpdate apply_language_matrix(const DeployedModel& deployed, const std::string& language,
                                    NamedParamStore& store);

/// Task score of `language` on its test examples through the deployed
/// model's inference path for that language.
double evaluate_language(const DeployedModel& deployed, const std::string& language,
                         const std::vector<Example>& examples);
PerfRecord evaluate(const DeployedModel& deployed, const LanguageData& test);

}  // namespace cml
