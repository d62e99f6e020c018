// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cml/random.hpp"
#include "cml/uriel.hpp"

namespace cml {

enum class TaskKind { TokenTag, SentenceClass };

std::string to_string(TaskKind task);
TaskKind parse_task_kind(const std::string& text);

/// Syntactic bits that drive the word-order transforms, applied in this order.
inline constexpr std::size_t kReverseBit = 0;
inline constexpr std::size_t kSwapBit = 1;
inline constexpr std::size_t kRotateBit = 2;
inline constexpr std::size_t kOrderBits = 3;
/// Surface id reserved for masked-token training.
inline constexpr int kMaskToken = 0;

struct LanguageSetConfig {
  std::size_t n_families = 2;
  std::size_t langs_per_family = 3;
  double p_in = 0.05;   ///< member flip probability from its family prototype
  double p_out = 0.35;  ///< family-prototype flip probability from the shared root
  std::size_t n_features = 16;
  std::size_t n_concepts = 40;
  std::size_t n_concept_classes = 4;
  /// Every 1/overlap-th concept is an anchor with a shared surface form.
  double overlap_fraction = 0.2;
  std::vector<double> resource_ratios{1.0, 0.75, 0.5, 0.25};
  std::size_t max_examples = 400;
  std::uint64_t seed = 0;

  void validate() const;
};

/// A synthetic language: concept -> surface token bijection onto its image,
/// plus a deterministic word-order transform keyed to syntactic bits.
struct LanguageProfile {
  std::string id;
  std::size_t family = 0;
  std::vector<double> syntax;
  std::vector<int> surface_map;
  bool reverse = false;
  bool adjacent_swap = false;
  bool rotate = false;
  std::size_t resource_count = 0;

  /// surface position i carries concept position order[i].
  std::vector<std::size_t> word_order(std::size_t length) const;
  SyntacticVector syntactic_vector() const { return {id, syntax}; }
};

struct LanguageSet {
  std::vector<LanguageProfile> profiles;
  DistanceMatrix distances;
  std::size_t vocab_size = 0;
  std::size_t n_concepts = 0;
  std::size_t n_concept_classes = 0;

  const LanguageProfile& profile(const std::string& id) const;
  std::vector<std::string> language_ids() const;
};

/// Root vector ~ Bernoulli(0.5); family prototypes flip root bits with p_out;
/// members flip prototype bits with p_in. An all-zero vector gets one bit set.
/// Vocabulary: id 0 is the mask token, then two shared variants per anchor
/// concept (chosen by one syntactic bit), then one block per language.
LanguageSet generate_language_set(const LanguageSetConfig& cfg);

struct Example {
  std::string language;
  std::vector<int> tokens;
  /// One tag per token for TokenTag; a single class id for SentenceClass.
  std::vector<int> labels;
  friend bool operator==(const Example&, const Example&) = default;
};

struct Corpus {
  std::string language;
  TaskKind task = TaskKind::TokenTag;
  std::vector<Example> examples;
};

struct CorpusSpec {
  TaskKind task = TaskKind::TokenTag;
  std::size_t n_examples = 100;
  std::size_t min_len = 6;
  std::size_t max_len = 12;
  std::size_t n_concept_classes = 4;
};

/// Concept class of a concept id.
inline int concept_class(int concept_id, std::size_t n_classes) { return concept_id % static_cast<int>(n_classes); }
/// Number of tag values for `n_classes` concept classes.
inline std::size_t tag_count(std::size_t n_classes) { return 2 * n_classes; }

/// Concept-level tag rule. A token opens a span (tag = class) at position 0
/// or when its left neighbour has a different class; otherwise it continues
/// the span (tag = class + n_classes).
std::vector<int> concept_tags(const std::vector<int>& concepts, std::size_t n_classes);
/// Majority concept class, ties to the smallest class id.
int concept_sentence_class(const std::vector<int>& concepts, std::size_t n_classes);

/// Draws concept sequences in class runs of length 1-3, labels them with the
/// concept-level rule, then applies surface map and word order to tokens and tags.
Corpus generate_corpus(const LanguageProfile& profile, const CorpusSpec& spec, std::uint64_t seed);
/// Surface realization of one concept sequence (tokens and per-token tags).
Example realize(const LanguageProfile& profile, const std::vector<int>& concepts, TaskKind task,
                std::size_t n_classes);
/// Inverts word order and surface map. Throws InputError for foreign tokens.
std::vector<int> recover_concepts(const LanguageProfile& profile, const std::vector<int>& tokens);

/// Disjoint shards of example indices, sizes equal within one.
struct StagePartition {
  std::vector<std::vector<std::size_t>> shards;
};

/// Seeded shuffle then equal split. Throws InputError when stages == 0 or stages > corpus size.
StagePartition partition_stages(std::size_t corpus_size, std::size_t stages, std::uint64_t seed);

struct TaggedBatch {
  std::string language;
  std::vector<const Example*> examples;
};

/// Multi-source batching: each draw picks a language uniformly among those
/// not yet exhausted and returns a monolingual batch from it.
class MultiSourceSampler {
 public:
  /// Example lists are shuffled with `rng` at construction.
  MultiSourceSampler(std::map<std::string, std::vector<const Example*>> pools, Rng& rng);

  /// Next batch; nullopt once every language is exhausted (end of epoch).
  std::optional<TaggedBatch> next(std::size_t batch_size, Rng& rng);

 private:
  struct Pool {
    std::string language;
    std::vector<const Example*> items;
    std::size_t pos = 0;
  };
  std::vector<Pool> pools_;
};

TaggedBatch sample_multisource_batch(MultiSourceSampler& sampler, std::size_t batch_size, Rng& rng);

/// One record per line: `lang<TAB>tokens (space separated)<TAB>labels (space separated)`.
std::string corpus_to_text(const std::vector<Example>& examples);
std::vector<Example> corpus_from_text(const std::string& text);
void save_corpus(const std::filesystem::path& path, const std::vector<Example>& examples);
std::vector<Example> load_corpus(const std::filesystem::path& path);

}  // namespace cml
