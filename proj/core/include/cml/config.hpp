// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cml/model.hpp"
#include "cml/strategies.hpp"
#include "cml/synth.hpp"

namespace cml {

enum class TrajectoryOrder { H2L, L2H, Explicit };

std::string to_string(TrajectoryOrder order);
TrajectoryOrder parse_trajectory_order(const std::string& text);

/// Everything one experiment needs. Vocabulary, tag and class counts of
/// `model` are filled in from the generated language set.
struct ExperimentConfig {
  LanguageSetConfig languages;
  TaskKind task = TaskKind::TokenTag;
  std::size_t min_len = 6;
  std::size_t max_len = 12;
  std::size_t test_examples = 200;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t stages = 2;  ///< shard 0 is the inception shard
  ModelConfig model;
  std::vector<StrategyKind> strategies{StrategyKind::FFT, StrategyKind::LAFTUriel};
  StrategyConfig strategy;
  TrajectoryOrder order = TrajectoryOrder::H2L;
  std::vector<std::string> explicit_order;
  std::filesystem::path out = "runs/default";

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Flat `key = value` text, `#` comments. Unknown keys are errors.
/// Keys are listed in docs/config.md.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical text form: every key, fixed order, round-trip exact.
std::string experiment_config_to_text(const ExperimentConfig& cfg);
/// FNV-1a of the canonical text.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// Accepts `1,2,3`.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace cml
