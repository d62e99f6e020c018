// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <filesystem>
#include <string>

#include "cml/config.hpp"
#include "cml/model.hpp"
#include "cml/random.hpp"

namespace cml::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(CML_FIXTURE_DIR) / name; }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cml_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

/// Small model used across tests.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ffn = 12;
  c.vocab_size = 11;
  c.max_seq_len = 8;
  c.n_tags = 4;
  c.n_classes = 3;
  c.adapter_bottleneck = 3;
  return c;
}

/// Dyadic value k / 64 with |k| <= 64, exactly representable and closed under small sums.
inline double dyadic(Rng& rng) { return (static_cast<double>(rng.below(129)) - 64.0) / 64.0; }

/// Three languages, one seed, a few seconds end to end.
inline ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.languages.n_families = 1;
  c.languages.langs_per_family = 3;
  c.languages.n_concepts = 10;
  c.languages.n_concept_classes = 2;
  c.languages.max_examples = 24;
  c.languages.seed = 5;
  c.min_len = 3;
  c.max_len = 6;
  c.test_examples = 8;
  c.seeds = {1};
  c.model = tiny_config();
  c.strategy.inception.epochs = 2;
  c.strategy.inception.batch_size = 8;
  c.strategy.inception.optim = OptimConfig::uniform(5e-3);
  c.strategy.continuation = c.strategy.inception;
  c.strategy.laft.adapter_lr = 5e-3;
  c.strategy.laft.adapter_epochs = 1;
  c.strategy.laft.language_epochs = 1;
  return c;
}

}  // namespace cml::test
