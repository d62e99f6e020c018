// SPDX-License-Identifier: Apache-2.0
#include "cml/strategies.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "cml/errors.hpp"
#include "cml/log.hpp"

namespace cml {

namespace {

enum SeedStream : std::uint64_t {
  kInit = 1,
  kInception,
  kAdapterInit,
  kSharedAdapter,
  kLanguageAdapter,
  kPilot,
  kSparse,
  kLanguageMatrix,
  kContinuation,
};

const std::string kSharedAdapterId = "shared";

void check_coverage(const LanguageData& data, const std::vector<std::string>& languages) {
  for (const auto& l : languages) {
    auto it = data.find(l);
    if (it == data.end() || it->second.empty()) throw CoverageError("no data for language '" + l + "'");
  }
}

std::vector<std::string> languages_of(const LanguageData& data) {
  std::vector<std::string> out;
  for (const auto& [l, exs] : data) {
    if (exs.empty()) throw CoverageError("no data for language '" + l + "'");
    for (const auto& ex : exs) {
      if (ex.language != l) throw ContractViolation("example of '" + ex.language + "' filed under '" + l + "'");
    }
    out.push_back(l);
  }
  if (out.empty()) throw CoverageError("inception data is empty");
  return out;
}

LanguageData single_language(const ContinuationPlan& plan) {
  if (plan.examples.empty()) throw InputError("continuation stage has no data");
  for (const auto& ex : plan.examples) {
    if (ex.language != plan.language) {
      throw ContractViolation("continuation data for '" + plan.language + "' contains language '" + ex.language + "'");
    }
  }
  return {{plan.language, plan.examples}};
}

TrainConfig train_config(const SftConfig& cfg, std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = cfg.batch_size;
  t.optim = cfg.optim;
  return t;
}

/// Per-batch application of each batch language's matrix.
struct MatrixHooks {
  const DeployedModel* deployed;
  NamedParamStore* store;
  std::optional<AppliedUpdate> applied;

  TrainHooks hooks() {
    TrainHooks h;
    h.before_batch = [this](const std::string& lang) { applied = apply_language_matrix(*deployed, lang, *store); };
    h.after_batch = [this](const std::string&) {
      revert_sparse_update(*store, *applied);
      applied.reset();
    };
    return h;
  }
};

void restore(NamedParamStore& store, const Snapshot& snap) { snap.restore(store); }

}  // namespace

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::FFT: return "fft";
    case StrategyKind::SFT: return "sft";
    case StrategyKind::LAFT: return "laft";
    case StrategyKind::LAFTUriel: return "laft-uriel";
  }
  return "?";
}

StrategyKind parse_strategy(const std::string& text) {
  if (text == "fft") return StrategyKind::FFT;
  if (text == "sft") return StrategyKind::SFT;
  if (text == "laft") return StrategyKind::LAFT;
  if (text == "laft-uriel") return StrategyKind::LAFTUriel;
  throw ConfigError("unknown strategy '" + text + "' (expected fft, sft, laft or laft-uriel)");
}

void SftConfig::validate() const {
  if (!(rho > 0.0 && rho <= 1.0) || !(continuation_rho > 0.0 && continuation_rho <= 1.0)) {
    throw ConfigError("sparse trainable fraction must lie in (0, 1]");
  }
  if (ft_epochs < 1 || st_epochs < 1) throw ConfigError("sparse finetuning epochs must be >= 1");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask rate must lie in (0, 1)");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  optim.validate();
}

void LaftConfig::validate() const {
  if (!(adapter_lr > 0.0) || !std::isfinite(adapter_lr)) throw ConfigError("adapter lr must be positive");
  if (!(fixed_factor >= 1.0)) throw ConfigError("division factor must be >= 1");
}

void DeployedModel::validate() const {
  for (const auto& l : languages) {
    if ((kind == StrategyKind::LAFT || kind == StrategyKind::LAFTUriel) && !model.has_adapter(l)) {
      throw DependencyError("deployed adapter model lacks the adapter of '" + l + "'");
    }
    if (kind == StrategyKind::SFT && !language_matrices.contains(l)) {
      throw DependencyError("deployed sparse model lacks the language matrix of '" + l + "'");
    }
  }
}

double resolve_factor(const FactorSource& source, const std::string& language) {
  if (const auto* f = std::get_if<FixedFactor>(&source)) {
    if (!(f->factor >= 1.0)) throw ConfigError("division factor must be >= 1");
    return f->factor;
  }
  const auto& u = std::get<UrielFactor>(source);
  if (!u.distances.contains(language)) throw CoverageError("distance matrix lacks language '" + language + "'");
  return division_factor(avg_distance_to_rest(language, u.distances), u.fn);
}

std::set<std::pair<std::string, std::size_t>> top_k_changed(const NamedParamStore& store, const Snapshot& snap,
                                                            const GroupFilter& filter, std::size_t k) {
  struct Cand {
    double mag;
    const std::string* name;
    std::size_t index;
  };
  std::vector<Cand> cands;
  const auto delta = param_delta(store, snap, filter);
  for (const auto& [name, d] : delta) {
    const auto v = d.data();
    for (std::size_t i = 0; i < v.size(); ++i) cands.push_back({std::abs(v[i]), &name, i});
  }
  k = std::min(k, cands.size());
  auto better = [](const Cand& a, const Cand& b) {
    if (a.mag != b.mag) return a.mag > b.mag;
    if (*a.name != *b.name) return *a.name < *b.name;
    return a.index < b.index;
  };
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(), better);
  std::set<std::pair<std::string, std::size_t>> out;
  for (std::size_t i = 0; i < k; ++i) out.emplace(*cands[i].name, cands[i].index);
  return out;
}

std::size_t sparsity_budget(double rho, std::size_t count) {
  const auto k = static_cast<std::size_t>(std::floor(rho * static_cast<double>(count)));
  if (k < 1) throw ConfigError("sparsity budget rounds to zero coordinates");
  return k;
}

std::map<std::string, SparseUpdate> pretrain_language_matrices(const Model& base, const LanguageData& corpora,
                                                               const SftConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto enc = filters::encoder();
  const std::size_t k = sparsity_budget(cfg.rho, base.params().parameter_count(enc));
  std::map<std::string, SparseUpdate> out;
  std::uint64_t lang_index = 0;
  for (const auto& lang : languages_of(corpora)) {
    const std::uint64_t s = derive_seed(derive_seed(seed, kLanguageMatrix), lang_index++);
    Model m = base;
    const LanguageData one{{lang, corpora.at(lang)}};
    const Snapshot start = snapshot_params(m.params());
    train(m, one, TaskKind::TokenTag, Objective::MaskedToken, train_config(cfg, cfg.ft_epochs), derive_seed(s, kPilot),
          {}, {}, {}, cfg.mask_rate);
    const auto keep = top_k_changed(m.params(), start, enc, k);
    restore(m.params(), start);
    const MaskSet masks = apply_trainability_mask(m.params(), keep, enc);
    train(m, one, TaskKind::TokenTag, Objective::MaskedToken, train_config(cfg, cfg.st_epochs),
          derive_seed(s, kSparse), masks, {ParamGroup::head()}, {}, cfg.mask_rate);
    out.emplace(lang, SparseUpdate::from_difference(m.params(), start, UpdateScope::EncoderOnly));
  }
  return out;
}

AppliedUpdate apply_language_matrix(const DeployedModel& deployed, const std::string& language,
                                    NamedParamStore& store) {
  auto it = deployed.language_matrices.find(language);
  if (it == deployed.language_matrices.end()) {
    throw DependencyError("no language matrix for '" + language + "'");
  }
  if (it->second.base_fingerprint() != scope_fingerprint(store, it->second.scope())) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      log_warn("applying language matrices to a base that changed since they were trained");
    }
  }
  return apply_sparse_update(store, it->second, StalePolicy::Force);
}

DeployedModel inception_sft(Model base, TaskKind task, const LanguageData& data, const SftConfig& cfg,
                            std::map<std::string, SparseUpdate> language_matrices, std::uint64_t seed) {
  cfg.validate();
  DeployedModel d{std::move(base), StrategyKind::SFT, task, languages_of(data), std::move(language_matrices), {}, 0};
  if (d.language_matrices.empty()) throw DependencyError("sparse finetuning needs language matrices");
  d.validate();
  const auto enc = filters::encoder();
  const std::size_t k = sparsity_budget(cfg.rho, d.model.params().parameter_count(enc));
  const Snapshot start = snapshot_params(d.model.params());
  MatrixHooks mh{&d, &d.model.params(), std::nullopt};
  train(d.model, data, task, Objective::Task, train_config(cfg, cfg.ft_epochs), derive_seed(seed, kPilot), {}, {},
        mh.hooks());
  const auto keep = top_k_changed(d.model.params(), start, enc, k);
  restore(d.model.params(), start);
  const MaskSet masks = apply_trainability_mask(d.model.params(), keep, enc);
  train(d.model, data, task, Objective::Task, train_config(cfg, cfg.st_epochs), derive_seed(seed, kSparse), masks, {},
        mh.hooks());
  d.task_updates.push_back(SparseUpdate::from_difference(d.model.params(), start, UpdateScope::Full));
  return d;
}

namespace {

DeployedModel inception_fft(const ModelConfig& model_cfg, TaskKind task, const LanguageData& data,
                            const TrainConfig& cfg, std::uint64_t seed) {
  DeployedModel d{Model::build(model_cfg, derive_seed(seed, kInit)), StrategyKind::FFT, task, languages_of(data), {}, {},
                  0};
  train(d.model, data, task, Objective::Task, cfg, derive_seed(seed, kInception));
  return d;
}

DeployedModel inception_laft(const ModelConfig& model_cfg, TaskKind task, const LanguageData& data,
                             const StrategyConfig& cfg, StrategyKind kind, std::uint64_t seed) {
  cfg.laft.validate();
  DeployedModel d = inception_fft(model_cfg, task, data, cfg.inception, seed);
  d.kind = kind;
  insert_adapters(d.model, {kSharedAdapterId}, derive_seed(seed, kAdapterInit));

  TrainConfig shared = cfg.inception;
  shared.epochs = cfg.laft.adapter_epochs;
  shared.optim = configure_groups(cfg.inception.optim, cfg.laft.adapter_lr, 1.0);
  shared.optim.lr[GroupKind::Head] = cfg.laft.adapter_lr;
  TrainHooks hooks;
  hooks.adapter = [](const std::string&) { return std::optional<std::string>(kSharedAdapterId); };
  train(d.model, data, task, Objective::Task, shared, derive_seed(seed, kSharedAdapter), {},
        {ParamGroup::base(), ParamGroup::layer_norm()}, hooks);

  clone_adapters(d.model, kSharedAdapterId, d.languages);
  remove_adapters(d.model, kSharedAdapterId);

  TrainConfig per_lang = shared;
  per_lang.epochs = cfg.laft.language_epochs;
  std::uint64_t i = 0;
  for (const auto& lang : d.languages) {
    TrainHooks h;
    h.adapter = [lang](const std::string&) { return std::optional<std::string>(lang); };
    train(d.model, {{lang, data.at(lang)}}, task, Objective::Task, per_lang,
          derive_seed(derive_seed(seed, kLanguageAdapter), i++), {},
          {ParamGroup::base(), ParamGroup::layer_norm(), ParamGroup::head()}, h);
  }
  d.validate();
  return d;
}

}  // namespace

DeployedModel run_inception(StrategyKind kind, const ModelConfig& model_cfg, TaskKind task, const LanguageData& data,
                            const StrategyConfig& cfg, std::uint64_t seed,
                            const std::map<std::string, SparseUpdate>& language_matrices) {
  switch (kind) {
    case StrategyKind::FFT: return inception_fft(model_cfg, task, data, cfg.inception, seed);
    case StrategyKind::LAFT:
    case StrategyKind::LAFTUriel: return inception_laft(model_cfg, task, data, cfg, kind, seed);
    case StrategyKind::SFT: {
      if (language_matrices.empty()) throw DependencyError("sparse finetuning needs language matrices");
      check_coverage(data, languages_of(data));
      return inception_sft(Model::build(model_cfg, derive_seed(seed, kInit)), task, data, cfg.sft, language_matrices,
                           seed);
    }
  }
  throw ContractViolation("unknown strategy");
}

DeployedModel continuation_fft(DeployedModel deployed, const ContinuationPlan& plan, const TrainConfig& cfg,
                               std::uint64_t seed) {
  const LanguageData data = single_language(plan);
  train(deployed.model, data, deployed.task, Objective::Task, cfg, derive_seed(seed, kContinuation));
  ++deployed.stage;
  return deployed;
}

DeployedModel continuation_sft(DeployedModel deployed, const ContinuationPlan& plan, const SftConfig& cfg,
                               std::uint64_t seed) {
  cfg.validate();
  const LanguageData data = single_language(plan);
  if (!deployed.language_matrices.contains(plan.language)) {
    throw DependencyError("no language matrix for '" + plan.language + "'");
  }
  auto& store = deployed.model.params();
  const GroupFilter scope = filters::kinds({GroupKind::Base, GroupKind::Head});
  const std::size_t k = sparsity_budget(cfg.continuation_rho, store.parameter_count(scope));
  std::set<ParamGroup> frozen;
  if (cfg.freeze_layer_norm) frozen.insert(ParamGroup::layer_norm());

  const Snapshot before = snapshot_params(store);
  const AppliedUpdate applied = apply_language_matrix(deployed, plan.language, store);
  const Snapshot start = snapshot_params(store);
  train(deployed.model, data, deployed.task, Objective::Task, train_config(cfg, cfg.ft_epochs),
        derive_seed(seed, kPilot), {}, frozen);
  const auto keep = top_k_changed(store, start, scope, k);
  restore(store, start);
  const MaskSet masks = apply_trainability_mask(store, keep, scope);
  train(deployed.model, data, deployed.task, Objective::Task, train_config(cfg, cfg.st_epochs),
        derive_seed(seed, kSparse), masks, frozen);
  revert_sparse_update(store, applied);
  deployed.task_updates.push_back(SparseUpdate::from_difference(store, before, UpdateScope::Full));
  ++deployed.stage;
  return deployed;
}

DeployedModel continuation_laft(DeployedModel deployed, const ContinuationPlan& plan, const TrainConfig& cfg,
                                double adapter_lr, const FactorSource& factor, std::uint64_t seed) {
  const LanguageData data = single_language(plan);
  if (!deployed.model.has_adapter(plan.language)) {
    throw MissingAdapter("no adapter stack for language '" + plan.language + "'");
  }
  const double f = resolve_factor(factor, plan.language);
  TrainConfig c = cfg;
  c.optim = configure_groups(cfg.optim, adapter_lr, f);
  c.optim.lr[GroupKind::Head] = adapter_lr;
  TrainHooks hooks;
  hooks.adapter = [lang = plan.language](const std::string&) { return std::optional<std::string>(lang); };
  train(deployed.model, data, deployed.task, Objective::Task, c, derive_seed(seed, kContinuation), {}, {}, hooks);
  ++deployed.stage;
  return deployed;
}

DeployedModel run_continuation(DeployedModel deployed, const ContinuationPlan& plan, const StrategyConfig& cfg,
                               const DistanceMatrix* distances, std::uint64_t seed) {
  switch (deployed.kind) {
    case StrategyKind::FFT: return continuation_fft(std::move(deployed), plan, cfg.continuation, seed);
    case StrategyKind::SFT: return continuation_sft(std::move(deployed), plan, cfg.sft, seed);
    case StrategyKind::LAFT:
      return continuation_laft(std::move(deployed), plan, cfg.continuation, cfg.laft.adapter_lr,
                               FixedFactor{cfg.laft.fixed_factor}, seed);
    case StrategyKind::LAFTUriel:
      if (distances == nullptr) throw DependencyError("LAFT-URIEL continuation needs a distance matrix");
      return continuation_laft(std::move(deployed), plan, cfg.continuation, cfg.laft.adapter_lr,
                               UrielFactor{*distances, cfg.laft.factor_fn}, seed);
  }
  throw ContractViolation("unknown strategy");
}

double evaluate_language(const DeployedModel& deployed, const std::string& language,
                         const std::vector<Example>& examples) {
  switch (deployed.kind) {
    case StrategyKind::FFT: return score(deployed.model, deployed.task, examples);
    case StrategyKind::LAFT:
    case StrategyKind::LAFTUriel: return score(deployed.model, deployed.task, examples, language);
    case StrategyKind::SFT: {
      Model m = deployed.model;
      apply_language_matrix(deployed, language, m.params());
      return score(m, deployed.task, examples);
    }
  }
  throw ContractViolation("unknown strategy");
}

PerfRecord evaluate(const DeployedModel& deployed, const LanguageData& test) {
  PerfRecord rec;
  for (const auto& [lang, exs] : test) rec[lang] = evaluate_language(deployed, lang, exs);
  return rec;
}

}  // namespace cml
