// SPDX-License-Identifier: Apache-2.0
#include "cml/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cml/errors.hpp"
#include "cml/serialize.hpp"

namespace cml {

std::string to_string(TaskKind task) { return task == TaskKind::TokenTag ? "token_tag" : "sentence_class"; }

TaskKind parse_task_kind(const std::string& text) {
  if (text == "token_tag") return TaskKind::TokenTag;
  if (text == "sentence_class") return TaskKind::SentenceClass;
  throw ConfigError("unknown task kind '" + text + "'");
}

void LanguageSetConfig::validate() const {
  if (n_families == 0 || langs_per_family == 0) throw ConfigError("language set needs >= 1 family and member");
  if (n_features == 0) throw ConfigError("syntactic feature dimension must be >= 1");
  if (!(p_in >= 0.0 && p_in <= 0.5) || !(p_out >= 0.0 && p_out <= 0.5)) {
    throw ConfigError("flip probabilities must lie in [0, 0.5]");
  }
  if (n_concept_classes == 0 || n_concepts < n_concept_classes) {
    throw ConfigError("need at least one concept per concept class");
  }
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) throw ConfigError("overlap fraction must be in [0, 1)");
  if (resource_ratios.empty()) throw ConfigError("resource ratios must not be empty");
  for (double r : resource_ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("resource ratios must lie in (0, 1]");
  }
  if (max_examples == 0) throw ConfigError("max_examples must be >= 1");
}

std::vector<std::size_t> LanguageProfile::word_order(std::size_t length) const {
  std::vector<std::size_t> order(length);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (reverse) std::reverse(order.begin(), order.end());
  if (adjacent_swap) {
    for (std::size_t i = 0; i + 1 < length; i += 2) std::swap(order[i], order[i + 1]);
  }
  if (rotate && length > 1) std::rotate(order.begin(), order.begin() + 1, order.end());
  return order;
}

const LanguageProfile& LanguageSet::profile(const std::string& id) const {
  for (const auto& p : profiles) {
    if (p.id == id) return p;
  }
  throw InputError("unknown language '" + id + "'");
}

std::vector<std::string> LanguageSet::language_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : profiles) ids.push_back(p.id);
  return ids;
}

namespace {

std::vector<double> flip_bits(const std::vector<double>& v, double p, Rng& rng) {
  std::vector<double> out = v;
  for (double& x : out) {
    if (rng.bernoulli(p)) x = 1.0 - x;
  }
  return out;
}

bool is_anchor(int concept_id, std::size_t stride) { return stride > 0 && concept_id % static_cast<int>(stride) == 0; }

std::size_t anchor_stride(double overlap) {
  return overlap <= 0.0 ? 0 : static_cast<std::size_t>(std::llround(1.0 / overlap));
}

}  // namespace

LanguageSet generate_language_set(const LanguageSetConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t dim = cfg.n_features;
  std::vector<double> root(dim);
  for (double& x : root) x = rng.bernoulli(0.5) ? 1.0 : 0.0;

  const std::size_t stride = anchor_stride(cfg.overlap_fraction);
  std::vector<int> anchors, regular;
  for (int c = 0; c < static_cast<int>(cfg.n_concepts); ++c) (is_anchor(c, stride) ? anchors : regular).push_back(c);
  const std::size_t n_langs = cfg.n_families * cfg.langs_per_family;
  const std::size_t block_base = 1 + 2 * anchors.size();

  LanguageSet set;
  set.n_concepts = cfg.n_concepts;
  set.n_concept_classes = cfg.n_concept_classes;
  set.vocab_size = block_base + n_langs * regular.size();

  std::size_t lang_index = 0;
  for (std::size_t f = 0; f < cfg.n_families; ++f) {
    const std::vector<double> proto = flip_bits(root, cfg.p_out, rng);
    for (std::size_t m = 0; m < cfg.langs_per_family; ++m, ++lang_index) {
      LanguageProfile p;
      p.id = std::string(1, static_cast<char>('a' + f % 26)) + std::to_string(m);
      if (f >= 26) p.id = "f" + std::to_string(f) + "m" + std::to_string(m);
      p.family = f;
      p.syntax = flip_bits(proto, cfg.p_in, rng);
      if (std::all_of(p.syntax.begin(), p.syntax.end(), [](double x) { return x == 0.0; })) {
        p.syntax[rng.below(dim)] = 1.0;
      }
      auto bit = [&](std::size_t i) { return i < dim && p.syntax[i] != 0.0; };
      p.reverse = bit(kReverseBit);
      p.adjacent_swap = bit(kSwapBit);
      p.rotate = bit(kRotateBit);

      std::vector<int> perm(regular.size());
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      p.surface_map.assign(cfg.n_concepts, -1);
      for (std::size_t k = 0; k < anchors.size(); ++k) {
        const std::size_t key_bit = dim > kOrderBits ? kOrderBits + k % (dim - kOrderBits) : k % dim;
        p.surface_map[anchors[k]] = static_cast<int>(1 + 2 * k + (bit(key_bit) ? 1 : 0));
      }
      const std::size_t block = block_base + lang_index * regular.size();
      for (std::size_t j = 0; j < regular.size(); ++j) {
        p.surface_map[regular[j]] = static_cast<int>(block + static_cast<std::size_t>(perm[j]));
      }
      const double ratio = cfg.resource_ratios[lang_index % cfg.resource_ratios.size()];
      p.resource_count = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(cfg.max_examples))));
      set.profiles.push_back(std::move(p));
    }
  }
  std::vector<SyntacticVector> vecs;
  for (const auto& p : set.profiles) vecs.push_back(p.syntactic_vector());
  set.distances = build_distance_matrix(vecs);
  return set;
}

std::vector<int> concept_tags(const std::vector<int>& concepts, std::size_t n_classes) {
  std::vector<int> tags(concepts.size());
  const int k = static_cast<int>(n_classes);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const int cls = concept_class(concepts[i], n_classes);
    const bool continues = i > 0 && concept_class(concepts[i - 1], n_classes) == cls;
    tags[i] = continues ? cls + k : cls;
  }
  return tags;
}

int concept_sentence_class(const std::vector<int>& concepts, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int c : concepts) ++counts[static_cast<std::size_t>(concept_class(c, n_classes))];
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

Example realize(const LanguageProfile& profile, const std::vector<int>& concepts, TaskKind task, std::size_t n_classes) {
  Example ex;
  ex.language = profile.id;
  const auto order = profile.word_order(concepts.size());
  const auto tags = concept_tags(concepts, n_classes);
  ex.tokens.resize(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const int c = concepts[order[i]];
    if (c < 0 || static_cast<std::size_t>(c) >= profile.surface_map.size()) {
      throw InputError("concept id " + std::to_string(c) + " outside concept space");
    }
    ex.tokens[i] = profile.surface_map[static_cast<std::size_t>(c)];
  }
  if (task == TaskKind::TokenTag) {
    ex.labels.resize(concepts.size());
    for (std::size_t i = 0; i < concepts.size(); ++i) ex.labels[i] = tags[order[i]];
  } else {
    ex.labels = {concept_sentence_class(concepts, n_classes)};
  }
  return ex;
}

std::vector<int> recover_concepts(const LanguageProfile& profile, const std::vector<int>& tokens) {
  std::map<int, int> inverse;
  for (std::size_t c = 0; c < profile.surface_map.size(); ++c) inverse[profile.surface_map[c]] = static_cast<int>(c);
  const auto order = profile.word_order(tokens.size());
  std::vector<int> concepts(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = inverse.find(tokens[i]);
    if (it == inverse.end()) throw InputError("token " + std::to_string(tokens[i]) + " not in language " + profile.id);
    concepts[order[i]] = it->second;
  }
  return concepts;
}

Corpus generate_corpus(const LanguageProfile& profile, const CorpusSpec& spec, std::uint64_t seed) {
  if (spec.n_examples == 0) throw InputError("corpus needs at least one example");
  if (spec.min_len == 0 || spec.max_len < spec.min_len) throw InputError("invalid sequence length range");
  const std::size_t n_concepts = profile.surface_map.size();
  const std::size_t k = spec.n_concept_classes;
  if (k == 0 || n_concepts < k) throw InputError("concept space smaller than class count");
  Rng rng(seed);
  Corpus corpus{profile.id, spec.task, {}};
  corpus.examples.reserve(spec.n_examples);
  for (std::size_t n = 0; n < spec.n_examples; ++n) {
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    std::vector<int> concepts;
    while (concepts.size() < len) {
      const std::size_t cls = rng.below(k);
      const std::size_t run = 1 + rng.below(3);
      const std::size_t per_class = (n_concepts - cls + k - 1) / k;
      for (std::size_t r = 0; r < run && concepts.size() < len; ++r) {
        concepts.push_back(static_cast<int>(cls + k * rng.below(per_class)));
      }
    }
    corpus.examples.push_back(realize(profile, concepts, spec.task, k));
  }
  return corpus;
}

StagePartition partition_stages(std::size_t corpus_size, std::size_t stages, std::uint64_t seed) {
  if (stages == 0) throw InputError("need at least one stage");
  if (stages > corpus_size) {
    throw InputError("cannot split " + std::to_string(corpus_size) + " examples into " + std::to_string(stages) +
                     " stages");
  }
  std::vector<std::size_t> idx(corpus_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  StagePartition part;
  const std::size_t base = corpus_size / stages;
  const std::size_t extra = corpus_size % stages;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < stages; ++s) {
    const std::size_t n = base + (s < extra ? 1 : 0);
    part.shards.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                             idx.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
  }
  return part;
}

MultiSourceSampler::MultiSourceSampler(std::map<std::string, std::vector<const Example*>> pools, Rng& rng) {
  for (auto& [lang, items] : pools) {
    rng.shuffle(items);
    pools_.push_back({lang, std::move(items), 0});
  }
}

std::optional<TaggedBatch> MultiSourceSampler::next(std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw InputError("batch size must be >= 1");
  std::vector<Pool*> live;
  for (auto& p : pools_) {
    if (p.pos < p.items.size()) live.push_back(&p);
  }
  if (live.empty()) return std::nullopt;
  Pool& pool = *live[rng.below(live.size())];
  TaggedBatch batch{pool.language, {}};
  const std::size_t end = std::min(pool.items.size(), pool.pos + batch_size);
  batch.examples.assign(pool.items.begin() + static_cast<std::ptrdiff_t>(pool.pos),
                        pool.items.begin() + static_cast<std::ptrdiff_t>(end));
  pool.pos = end;
  return batch;
}

TaggedBatch sample_multisource_batch(MultiSourceSampler& sampler, std::size_t batch_size, Rng& rng) {
  auto b = sampler.next(batch_size, rng);
  if (!b) throw InputError("end of epoch: every language is exhausted");
  return std::move(*b);
}

std::string corpus_to_text(const std::vector<Example>& examples) {
  std::ostringstream os;
  for (const auto& ex : examples) {
    os << ex.language << "\t";
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) os << (i ? " " : "") << ex.tokens[i];
    os << "\t";
    for (std::size_t i = 0; i < ex.labels.size(); ++i) os << (i ? " " : "") << ex.labels[i];
    os << "\n";
  }
  return os.str();
}

std::vector<Example> corpus_from_text(const std::string& text) {
  std::vector<Example> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto ints = [&](const std::string& s) {
    std::vector<int> v;
    std::istringstream ss(s);
    int x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) throw InputError("bad integer list on corpus line " + std::to_string(lineno));
    return v;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw InputError("corpus line " + std::to_string(lineno) + " needs three fields");
    Example ex;
    ex.language = line.substr(0, t1);
    ex.tokens = ints(line.substr(t1 + 1, t2 - t1 - 1));
    ex.labels = ints(line.substr(t2 + 1));
    out.push_back(std::move(ex));
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Example>& examples) {
  write_file_atomic(path, corpus_to_text(examples));
}

std::vector<Example> load_corpus(const std::filesystem::path& path) { return corpus_from_text(read_file(path)); }

}  // namespace cml
