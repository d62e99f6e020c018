// SPDX-License-Identifier: Apache-2.0
#include "cml/training.hpp"

#include <algorithm>
#include <set>

#include "cml/errors.hpp"

namespace cml {

HeadKind head_for(TaskKind task) { return task == TaskKind::TokenTag ? HeadKind::TokenTag : HeadKind::SentenceClass; }

Batch make_batch(const std::vector<const Example*>& examples) {
  std::vector<std::vector<int>> seqs;
  seqs.reserve(examples.size());
  for (const auto* ex : examples) seqs.push_back(ex->tokens);
  return Batch::from_sequences(seqs);
}

namespace {

std::vector<int> flat_targets(TaskKind task, const std::vector<const Example*>& examples) {
  std::vector<int> t;
  for (const auto* ex : examples) {
    if (task == TaskKind::TokenTag && ex->labels.size() != ex->tokens.size()) {
      throw InputError("token-tag example needs one label per token");
    }
    if (task == TaskKind::SentenceClass && ex->labels.size() != 1) {
      throw InputError("sentence-class example needs exactly one label");
    }
    t.insert(t.end(), ex->labels.begin(), ex->labels.end());
  }
  return t;
}

}  // namespace

Var task_loss(Tape& tape, const Model& model, TaskKind task, const std::vector<const Example*>& examples,
              const std::optional<std::string>& adapter) {
  const Batch batch = make_batch(examples);
  return ops::cross_entropy(model.forward(tape, head_for(task), batch, adapter), flat_targets(task, examples));
}

Var masked_token_loss(Tape& tape, const Model& model, const std::vector<const Example*>& examples, double rate,
                      Rng& rng) {
  Batch batch = make_batch(examples);
  std::vector<int> targets(batch.tokens.size(), -1);
  bool any = false;
  for (std::size_t i = 0; i < batch.tokens.size(); ++i) {
    if (rng.bernoulli(rate)) {
      targets[i] = batch.tokens[i];
      batch.tokens[i] = kMaskToken;
      any = true;
    }
  }
  if (!any && !batch.tokens.empty()) {
    const std::size_t i = rng.below(batch.tokens.size());
    targets[i] = batch.tokens[i];
    batch.tokens[i] = kMaskToken;
  }
  return ops::cross_entropy(model.forward(tape, HeadKind::MaskedToken, batch), targets);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  optim.validate();
}

TrainStats train(Model& model, const LanguageData& data, TaskKind task, Objective objective, const TrainConfig& cfg,
                 std::uint64_t seed, const MaskSet& masks, const std::set<ParamGroup>& frozen,
                 const TrainHooks& hooks, double mask_rate) {
  cfg.validate();
  if (data.empty()) throw InputError("no training data");
  Rng rng(seed);
  Optimizer opt(cfg.optim);
  TrainStats stats;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::map<std::string, std::vector<const Example*>> pools;
    for (const auto& [lang, exs] : data) {
      auto& p = pools[lang];
      for (const auto& ex : exs) p.push_back(&ex);
    }
    MultiSourceSampler sampler(std::move(pools), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    while (auto batch = sampler.next(cfg.batch_size, rng)) {
      const std::string& lang = batch->language;
      if (hooks.before_batch) hooks.before_batch(lang);
      std::optional<std::string> adapter = hooks.adapter ? hooks.adapter(lang) : std::nullopt;
      Tape tape;
      Var loss = objective == Objective::Task ? task_loss(tape, model, task, batch->examples, adapter)
                                              : masked_token_loss(tape, model, batch->examples, mask_rate, rng);
      GradMap grads = backward_pass(loss);
      opt.step(model.params(), grads, masks, frozen);
      if (hooks.after_batch) hooks.after_batch(lang);
      loss_sum += loss.value().item();
      ++batches;
      ++stats.steps;
    }
    stats.last_epoch_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  }
  return stats;
}

double macro_f1(const std::vector<int>& gold, const std::vector<int>& predicted) {
  if (gold.size() != predicted.size()) throw ContractViolation("prediction count mismatch");
  if (gold.empty()) throw InputError("empty evaluation set");
  std::set<int> labels(gold.begin(), gold.end());
  labels.insert(predicted.begin(), predicted.end());
  double total = 0.0;
  for (int l : labels) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i] == l, p = predicted[i] == l;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    total += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return 100.0 * total / static_cast<double>(labels.size());
}

double accuracy(const std::vector<int>& gold, const std::vector<int>& predicted) {
  if (gold.size() != predicted.size()) throw ContractViolation("prediction count mismatch");
  if (gold.empty()) throw InputError("empty evaluation set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += gold[i] == predicted[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(gold.size());
}

std::vector<int> predict(const Model& model, TaskKind task, const std::vector<Example>& examples,
                         const std::optional<std::string>& adapter, std::size_t batch_size) {
  std::vector<int> out;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    std::vector<const Example*> chunk;
    for (std::size_t i = start; i < std::min(examples.size(), start + batch_size); ++i) chunk.push_back(&examples[i]);
    const Tensor logits = model.logits(head_for(task), make_batch(chunk), adapter);
    const std::size_t c = logits.cols();
    const auto v = logits.values();
    for (std::size_t r = 0; r * c < v.size(); ++r) {
      const auto row = v.begin() + static_cast<std::ptrdiff_t>(r * c);
      out.push_back(static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row));
    }
  }
  return out;
}

double score(const Model& model, TaskKind task, const std::vector<Example>& examples,
             const std::optional<std::string>& adapter) {
  std::vector<int> gold;
  for (const auto& ex : examples) gold.insert(gold.end(), ex.labels.begin(), ex.labels.end());
  const auto pred = predict(model, task, examples, adapter);
  return task == TaskKind::TokenTag ? macro_f1(gold, pred) : accuracy(gold, pred);
}

double masked_token_eval(const Model& model, const std::vector<Example>& examples, double rate, std::uint64_t seed) {
  if (examples.empty()) throw InputError("empty evaluation set");
  Rng rng(seed);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t start = 0; start < examples.size(); start += 64) {
    std::vector<const Example*> chunk;
    for (std::size_t i = start; i < std::min(examples.size(), start + 64); ++i) chunk.push_back(&examples[i]);
    Tape tape;
    total += masked_token_loss(tape, model, chunk, rate, rng).value().item();
    ++n;
  }
  return total / static_cast<double>(n);
}

}  // namespace cml
