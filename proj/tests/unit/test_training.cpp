// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "cml/errors.hpp"
#include "cml/training.hpp"
#include "test_util.hpp"

using namespace cml;

namespace {

struct Fixture {
  LanguageSet set;
  LanguageData data;
  ModelConfig cfg;
};

Fixture fixture(TaskKind task) {
  LanguageSetConfig lc;
  lc.n_families = 1;
  lc.langs_per_family = 2;
  lc.n_concepts = 8;
  lc.n_concept_classes = 2;
  lc.seed = 3;
  Fixture f;
  f.set = generate_language_set(lc);
  for (const auto& p : f.set.profiles) {
    CorpusSpec spec;
    spec.task = task;
    spec.n_examples = 24;
    spec.min_len = 3;
    spec.max_len = 6;
    spec.n_concept_classes = 2;
    f.data[p.id] = generate_corpus(p, spec, 5).examples;
  }
  f.cfg = test::tiny_config();
  f.cfg.vocab_size = f.set.vocab_size;
  f.cfg.n_tags = tag_count(2);
  f.cfg.n_classes = 2;
  return f;
}

double oracle_macro_f1(const std::vector<int>& gold, const std::vector<int>& pred) {
  std::set<int> labels(gold.begin(), gold.end());
  labels.insert(pred.begin(), pred.end());
  double total = 0;
  for (int l : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (pred[i] == l && gold[i] == l) tp += 1;
      if (pred[i] == l && gold[i] != l) fp += 1;
      if (pred[i] != l && gold[i] == l) fn += 1;
    }
    total += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return 100.0 * total / static_cast<double>(labels.size());
}

}  // namespace

TEST_CASE("macro F1 and accuracy") {
  CHECK(macro_f1({0, 1, 2}, {0, 1, 2}) == 100.0);
  CHECK(macro_f1({0, 0, 1, 1}, {0, 1, 1, 1}) == doctest::Approx(100.0 * (2.0 / 3 + 0.8) / 2));
  CHECK(accuracy({1, 2, 3, 4}, {1, 2, 0, 4}) == 75.0);
  CHECK_THROWS_AS(macro_f1({0, 1}, {0}), ContractViolation);
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<int> g(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = static_cast<int>(rng.below(5));
      p[i] = rng.bernoulli(0.6) ? g[i] : static_cast<int>(rng.below(5));
    }
    CHECK(macro_f1(g, p) == doctest::Approx(oracle_macro_f1(g, p)).epsilon(1e-12));
  }
}

TEST_CASE("batches pack sequences in order") {
  const auto f = fixture(TaskKind::TokenTag);
  const auto& xs = f.data.begin()->second;
  const auto b = make_batch({&xs[0], &xs[1]});
  CHECK(b.size() == 2);
  CHECK(b.length(0) == xs[0].tokens.size());
  CHECK(std::vector<int>(b.tokens.begin(), b.tokens.begin() + static_cast<long>(xs[0].tokens.size())) == xs[0].tokens);
  CHECK(head_for(TaskKind::SentenceClass) == HeadKind::SentenceClass);
}

TEST_CASE("training lowers the task loss and is deterministic") {
  for (const auto task : {TaskKind::TokenTag, TaskKind::SentenceClass}) {
    const auto f = fixture(task);
    Model m = build_model(f.cfg, 1);
    std::vector<const Example*> all;
    for (const auto& [l, xs] : f.data) {
      for (const auto& x : xs) all.push_back(&x);
    }
    auto loss_of = [&](const Model& model) {
      Tape tape;
      return task_loss(tape, model, task, all).value()[0];
    };
    const double before = loss_of(m);
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 8;
    tc.optim = OptimConfig::uniform(1e-2);
    Model m2 = m;
    const auto stats = train(m, f.data, task, Objective::Task, tc, 9);
    train(m2, f.data, task, Objective::Task, tc, 9);
    CHECK(stats.steps == 15 * 6);
    CHECK(loss_of(m) < 0.8 * before);
    CHECK(m.params().same_contents(m2.params()));
    const auto sc = score(m, task, f.data.begin()->second);
    CHECK(sc > 0.0);
    CHECK(sc <= 100.0);
  }
}

TEST_CASE("frozen groups and masks are never written") {
  const auto f = fixture(TaskKind::TokenTag);
  Model m = build_model(f.cfg, 2);
  const Snapshot before(m.params());
  MaskSet masks;
  masks["embed.tok"] = std::vector<std::uint8_t>(m.params().value("embed.tok").numel(), 0);
  masks["embed.tok"][5] = 1;
  TrainConfig tc;
  tc.epochs = 1;
  train(m, f.data, TaskKind::TokenTag, Objective::Task, tc, 1, masks, {ParamGroup::layer_norm()});
  CHECK(fingerprint(m.params(), filters::kinds({GroupKind::LayerNorm})) ==
        before.fingerprint(filters::kinds({GroupKind::LayerNorm})));
  const auto& tok = m.params().value("embed.tok");
  const auto& tok0 = before.entries().at("embed.tok").value;
  for (std::size_t i = 0; i < tok.numel(); ++i) {
    if (i != 5) CHECK(test::same_bits(tok[i], tok0[i]));
  }
  CHECK(fingerprint(m.params(), filters::kinds({GroupKind::Head})) != before.fingerprint(filters::kinds({GroupKind::Head})));
}

TEST_CASE("masked-token objective") {
  const auto f = fixture(TaskKind::TokenTag);
  Model m = build_model(f.cfg, 4);
  const auto& xs = f.data.begin()->second;
  const double e0 = masked_token_eval(m, xs, 0.15, 3);
  CHECK(masked_token_eval(m, xs, 0.15, 3) == e0);
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 8;
  tc.optim = OptimConfig::uniform(1e-2);
  train(m, f.data, TaskKind::TokenTag, Objective::MaskedToken, tc, 2);
  CHECK(masked_token_eval(m, xs, 0.15, 3) < e0);
}

TEST_CASE("train validates its configuration") {
  const auto f = fixture(TaskKind::TokenTag);
  Model m = build_model(f.cfg, 4);
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(train(m, f.data, TaskKind::TokenTag, Objective::Task, tc, 1), ConfigError);
}
