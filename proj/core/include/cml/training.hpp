// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cml/model.hpp"
#include "cml/optim.hpp"
#include "cml/synth.hpp"

namespace cml {

/// Examples grouped by language.
using LanguageData = std::map<std::string, std::vector<Example>>;

HeadKind head_for(TaskKind task);
Batch make_batch(const std::vector<const Example*>& examples);

/// Mean cross-entropy of the task head on a batch.
Var task_loss(Tape& tape, const Model& model, TaskKind task, const std::vector<const Example*>& examples,
              const std::optional<std::string>& adapter = std::nullopt);

/// Replaces each token by the mask token with probability `rate` (at least one
/// per batch) and scores the masked-token head on the replaced positions.
Var masked_token_loss(Tape& tape, const Model& model, const std::vector<const Example*>& examples, double rate,
                      Rng& rng);

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  OptimConfig optim = OptimConfig::uniform(1e-3);

  void validate() const;
};

enum class Objective { Task, MaskedToken };

/// Per-run knobs of the generic loop. Hooks run around every batch with the
/// batch language; `adapter` selects the active adapter per language.
struct TrainHooks {
  std::function<std::optional<std::string>(const std::string&)> adapter;
  std::function<void(const std::string&)> before_batch;
  std::function<void(const std::string&)> after_batch;
};

struct TrainStats {
  std::size_t steps = 0;
  double last_epoch_loss = 0.0;
};

/// Epoch loop over multi-source monolingual batches. Masked coordinates and
/// frozen groups are never written. Deterministic for a given seed.
TrainStats train(Model& model, const LanguageData& data, TaskKind task, Objective objective,
                 const TrainConfig& cfg, std::uint64_t seed, const MaskSet& masks = {},
                 const std::set<ParamGroup>& frozen = {}, const TrainHooks& hooks = {}, double mask_rate = 0.15);

/// Token-level macro-F1 over tag values seen in gold or predictions (TokenTag),
/// accuracy (SentenceClass). Both in percent.
double macro_f1(const std::vector<int>& gold, const std::vector<int>& predicted);
double accuracy(const std::vector<int>& gold, const std::vector<int>& predicted);

/// Argmax predictions flattened in batch order.
std::vector<int> predict(const Model& model, TaskKind task, const std::vector<Example>& examples,
                         const std::optional<std::string>& adapter = std::nullopt, std::size_t batch_size = 64);
double score(const Model& model, TaskKind task, const std::vector<Example>& examples,
             const std::optional<std::string>& adapter = std::nullopt);

/// Mean masked-token loss with a fixed seed, for comparing stores.
double masked_token_eval(const Model& model, const std::vector<Example>& examples, double rate, std::uint64_t seed);

}  // namespace cml
