// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cml/errors.hpp"
#include "cml/synth.hpp"
#include "test_util.hpp"

using namespace cml;

namespace {

LanguageSetConfig small_set(std::uint64_t seed) {
  LanguageSetConfig c;
  c.seed = seed;
  return c;
}

bool same_transform(const LanguageProfile& a, const LanguageProfile& b) {
  return a.reverse == b.reverse && a.adjacent_swap == b.adjacent_swap && a.rotate == b.rotate;
}

}  // namespace

TEST_CASE("language sets are deterministic and well formed") {
  const auto a = generate_language_set(small_set(4));
  const auto b = generate_language_set(small_set(4));
  REQUIRE(a.profiles.size() == 6);
  CHECK(a.language_ids() == std::vector<std::string>{"a0", "a1", "a2", "b0", "b1", "b2"});
  for (std::size_t i = 0; i < a.profiles.size(); ++i) {
    const auto& p = a.profiles[i];
    CHECK(p.syntax == b.profiles[i].syntax);
    CHECK(p.surface_map == b.profiles[i].surface_map);
    CHECK(p.syntax.size() == 16);
    CHECK(p.reverse == (p.syntax[kReverseBit] == 1.0));
    CHECK(p.adjacent_swap == (p.syntax[kSwapBit] == 1.0));
    CHECK(p.rotate == (p.syntax[kRotateBit] == 1.0));
    REQUIRE(p.surface_map.size() == a.n_concepts);
    const std::set<int> image(p.surface_map.begin(), p.surface_map.end());
    CHECK(image.size() == a.n_concepts);
    CHECK_FALSE(image.count(kMaskToken));
    CHECK(*image.rbegin() < static_cast<int>(a.vocab_size));
    for (std::size_t len = 1; len <= 12; ++len) {
      auto order = p.word_order(len);
      std::sort(order.begin(), order.end());
      for (std::size_t k = 0; k < len; ++k) CHECK(order[k] == k);
    }
  }
  CHECK(a.profiles[0].resource_count == 400);
  CHECK(a.profiles[1].resource_count == 300);
  CHECK(a.profiles[3].resource_count == 100);
  CHECK(a.profiles[4].resource_count == 400);
}

TEST_CASE("zero intra-family flip probability gives identical members") {
  auto cfg = small_set(9);
  cfg.p_in = 0.0;
  const auto set = generate_language_set(cfg);
  CHECK(set.distances.at("a0", "a1") == 0.0);
  CHECK(set.distances.at("b1", "b2") == 0.0);
  cfg.n_features = 0;
  CHECK_THROWS_AS(generate_language_set(cfg), ConfigError);
  cfg = small_set(1);
  cfg.p_out = 0.6;
  CHECK_THROWS_AS(generate_language_set(cfg), ConfigError);
}

TEST_CASE("families are closer inside than across") {
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0, shared_more = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto set = generate_language_set(small_set(1000 + seed));
    std::size_t s_in = 0, c_in = 0, s_out = 0, c_out = 0;
    for (std::size_t i = 0; i < set.profiles.size(); ++i) {
      for (std::size_t j = i + 1; j < set.profiles.size(); ++j) {
        const auto& p = set.profiles[i];
        const auto& q = set.profiles[j];
        const double d = cosine_distance(p.syntax, q.syntax);
        CHECK(set.distances.at(i, j) == d);
        if (p.family == q.family) {
          intra += d;
          ++n_intra;
          s_in += same_transform(p, q);
          ++c_in;
        } else {
          inter += d;
          ++n_inter;
          s_out += same_transform(p, q);
          ++c_out;
        }
      }
    }
    if (static_cast<double>(s_in) / c_in > static_cast<double>(s_out) / c_out) ++shared_more;
  }
  CHECK(intra / n_intra < inter / n_inter);
  CHECK(shared_more >= 80);
}

TEST_CASE("identity language realizes concepts unchanged") {
  LanguageProfile p;
  p.id = "id";
  for (int c = 0; c < 10; ++c) p.surface_map.push_back(c);
  const std::vector<int> concepts{3, 1, 4, 1, 5, 9, 2, 6};
  const auto ex = realize(p, concepts, TaskKind::TokenTag, 4);
  CHECK(ex.tokens == concepts);
  CHECK(ex.labels == concept_tags(concepts, 4));
  CHECK(recover_concepts(p, ex.tokens) == concepts);
  CHECK_THROWS_AS(recover_concepts(p, {42}), InputError);
}

TEST_CASE("concept-level rules") {
  CHECK(concept_tags({0, 4, 1, 2, 6, 6}, 4) == std::vector<int>{0, 4, 1, 2, 6, 6});
  CHECK(concept_tags({5}, 4) == std::vector<int>{1});
  CHECK(concept_sentence_class({0, 1, 5, 2}, 4) == 1);
  CHECK(concept_sentence_class({0, 1, 2, 3}, 4) == 0);
  CHECK(concept_sentence_class({3, 7, 2, 6}, 4) == 2);
}

TEST_CASE("surface differs but labels agree across languages") {
  const auto set = generate_language_set(small_set(5));
  const std::vector<int> concepts{0, 4, 8, 1, 13, 2, 3, 7};
  const auto& p = set.profiles[0];
  const auto& q = set.profiles[3];
  auto a = realize(p, concepts, TaskKind::TokenTag, set.n_concept_classes);
  auto b = realize(q, concepts, TaskKind::TokenTag, set.n_concept_classes);
  CHECK(a.tokens != b.tokens);
  std::sort(a.labels.begin(), a.labels.end());
  std::sort(b.labels.begin(), b.labels.end());
  CHECK(a.labels == b.labels);
}

TEST_CASE("generated labels match the concept oracle") {
  const auto set = generate_language_set(small_set(6));
  for (const auto task : {TaskKind::TokenTag, TaskKind::SentenceClass}) {
    for (const auto& p : set.profiles) {
      CorpusSpec spec;
      spec.task = task;
      spec.n_examples = 200;
      spec.n_concept_classes = set.n_concept_classes;
      const auto corpus = generate_corpus(p, spec, 17);
      REQUIRE(corpus.examples.size() == 200);
      std::size_t bad = 0;
      for (const auto& ex : corpus.examples) {
        CHECK(ex.language == p.id);
        CHECK(ex.tokens.size() >= spec.min_len);
        CHECK(ex.tokens.size() <= spec.max_len);
        const auto concepts = recover_concepts(p, ex.tokens);
        std::vector<int> expect{concept_sentence_class(concepts, spec.n_concept_classes)};
        if (task == TaskKind::TokenTag) {
          const auto tags = concept_tags(concepts, spec.n_concept_classes);
          const auto order = p.word_order(concepts.size());
          expect.clear();
          for (std::size_t i = 0; i < order.size(); ++i) expect.push_back(tags[order[i]]);
        }
        bad += expect != ex.labels;
      }
      CHECK(bad == 0);
      CHECK(generate_corpus(p, spec, 17).examples == corpus.examples);
      CHECK(generate_corpus(p, spec, 18).examples != corpus.examples);
    }
  }
}

TEST_CASE("stage partitions") {
  const auto one = partition_stages(37, 1, 3);
  REQUIRE(one.shards.size() == 1);
  CHECK(one.shards[0].size() == 37);
  const auto two = partition_stages(100, 2, 3);
  CHECK(two.shards[0].size() == 50);
  CHECK(two.shards[1].size() == 50);
  std::set<std::size_t> all(two.shards[0].begin(), two.shards[0].end());
  all.insert(two.shards[1].begin(), two.shards[1].end());
  CHECK(all.size() == 100);
  const auto three = partition_stages(10, 3, 3);
  for (const auto& s : three.shards) CHECK(s.size() >= 3);
  std::set<std::vector<std::size_t>> seen;
  for (std::uint64_t seed = 0; seed < 10; ++seed) seen.insert(partition_stages(100, 2, seed).shards[0]);
  CHECK(seen.size() == 10);
  CHECK_THROWS_AS(partition_stages(3, 4, 0), InputError);
  CHECK_THROWS_AS(partition_stages(3, 0, 0), InputError);
}

TEST_CASE("multi-source sampler draws languages uniformly") {
  std::vector<Example> store(3);
  std::map<std::string, std::vector<const Example*>> pools;
  const std::vector<std::string> langs{"x", "y", "z"};
  for (std::size_t i = 0; i < 3; ++i) {
    store[i].language = langs[i];
    pools[langs[i]] = std::vector<const Example*>(40000, &store[i]);
  }
  Rng rng(12);
  MultiSourceSampler sampler(pools, rng);
  std::map<std::string, double> counts;
  const double n = 30000;
  for (int i = 0; i < 30000; ++i) {
    const auto b = sample_multisource_batch(sampler, 1, rng);
    for (const auto* e : b.examples) CHECK(e->language == b.language);
    counts[b.language] += 1;
  }
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (const auto& l : langs) CHECK(std::abs(counts[l] - n / 3) <= 3 * sigma);
}

TEST_CASE("sampler exhausts every pool exactly once per epoch") {
  std::vector<Example> xs(7), ys(2);
  for (auto& e : xs) e.language = "x";
  for (auto& e : ys) e.language = "y";
  std::map<std::string, std::vector<const Example*>> pools;
  for (auto& e : xs) pools["x"].push_back(&e);
  for (auto& e : ys) pools["y"].push_back(&e);
  Rng rng(1);
  MultiSourceSampler sampler(pools, rng);
  std::size_t seen = 0;
  while (auto b = sampler.next(3, rng)) {
    for (const auto* e : b->examples) CHECK(e->language == b->language);
    seen += b->examples.size();
  }
  CHECK(seen == 9);
  CHECK_THROWS_AS(sample_multisource_batch(sampler, 3, rng), InputError);

  std::map<std::string, std::vector<const Example*>> single{{"x", pools["x"]}};
  MultiSourceSampler only(single, rng);
  while (auto b = only.next(2, rng)) CHECK(b->language == "x");
}

TEST_CASE("corpus text round trip") {
  const auto set = generate_language_set(small_set(2));
  CorpusSpec spec;
  spec.n_examples = 20;
  const auto corpus = generate_corpus(set.profiles[2], spec, 1);
  CHECK(corpus_from_text(corpus_to_text(corpus.examples)) == corpus.examples);
  const auto dir = test::temp_dir("synth");
  save_corpus(dir / "c.tsv", corpus.examples);
  CHECK(load_corpus(dir / "c.tsv") == corpus.examples);
  CHECK_THROWS(corpus_from_text("x\t1 2\n"));
}
