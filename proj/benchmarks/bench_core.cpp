// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "cml/metrics.hpp"
#include "cml/model.hpp"
#include "cml/sparse_update.hpp"
#include "cml/synth.hpp"
#include "cml/training.hpp"

namespace {

using namespace cml;

struct Setup {
  LanguageSet set;
  std::vector<Example> examples;
  ModelConfig cfg;
};

const Setup& setup() {
  static const Setup s = [] {
    Setup out;
    out.set = generate_language_set(LanguageSetConfig{});
    CorpusSpec spec;
    spec.n_examples = 64;
    out.examples = generate_corpus(out.set.profiles[0], spec, 1).examples;
    out.cfg.n_layers = 2;
    out.cfg.d_model = 48;
    out.cfg.d_ffn = 96;
    out.cfg.max_seq_len = 16;
    out.cfg.vocab_size = out.set.vocab_size;
    out.cfg.n_tags = tag_count(out.set.n_concept_classes);
    out.cfg.n_classes = out.set.n_concept_classes;
    return out;
  }();
  return s;
}

std::vector<const Example*> batch_of(std::size_t n) {
  std::vector<const Example*> b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(&setup().examples[i]);
  return b;
}

void BM_Forward(benchmark::State& state) {
  const Model m = build_model(setup().cfg, 1);
  const Batch b = make_batch(batch_of(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(m.logits(HeadKind::TokenTag, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16);

void BM_ForwardBackward(benchmark::State& state) {
  const Model m = build_model(setup().cfg, 1);
  const auto batch = batch_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(backward_pass(task_loss(tape, m, TaskKind::TokenTag, batch)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(16);

void BM_TrainEpoch(benchmark::State& state) {
  const LanguageData data{{setup().set.profiles[0].id, setup().examples}};
  TrainConfig tc;
  tc.epochs = 1;
  for (auto _ : state) {
    Model m = build_model(setup().cfg, 1);
    train(m, data, TaskKind::TokenTag, Objective::Task, tc, 1);
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_SparseApplyRevert(benchmark::State& state) {
  Model m = build_model(setup().cfg, 1);
  std::vector<SparseEntry> es;
  const auto& tok = m.params().value("embed.tok");
  for (std::size_t i = 0; i < tok.numel(); i += 7) es.push_back({"embed.tok", i, 1e-3});
  const SparseUpdate u(fingerprint(m.params()), UpdateScope::Full, es);
  for (auto _ : state) {
    auto applied = apply_sparse_update(m.params(), u, StalePolicy::Force);
    revert_sparse_update(m.params(), applied);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(es.size()));
}
BENCHMARK(BM_SparseApplyRevert);

void BM_RowMetrics(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> row(6);
  for (auto& x : row) x = rng.uniform(-3, 3);
  for (auto _ : state) benchmark::DoNotOptimize(row_metrics(row));
}
BENCHMARK(BM_RowMetrics);

}  // namespace

BENCHMARK_MAIN();
