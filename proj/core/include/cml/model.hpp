// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cml/autograd.hpp"
#include "cml/param_store.hpp"

namespace cml {

enum class Activation { Gelu };

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_ffn = 128;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 32;
  std::size_t n_tags = 0;
  std::size_t n_classes = 0;
  std::size_t adapter_bottleneck = 16;
  Activation activation = Activation::Gelu;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class HeadKind { TokenTag, SentenceClass, MaskedToken };

/// Packed batch of variable-length token sequences.
struct Batch {
  std::vector<int> tokens;
  Segments offsets{0};

  static Batch from_sequences(const std::vector<std::vector<int>>& seqs);
  std::size_t size() const noexcept { return offsets.size() - 1; }
  std::size_t length(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  /// Common length when every sequence has the same length.
  std::optional<std::size_t> uniform_length() const;
};

/// Language id -> parameter names of that language's adapter stack.
using AdapterSet = std::map<std::string, std::vector<std::string>>;

/// Post-LN transformer encoder with learned absolute positions, optional
/// per-language bottleneck adapters after the attention and feed-forward
/// sublayers, and three task heads.
///
/// Parameter names:
///   embed.tok, embed.pos                                   base
///   layer<i>.attn.{wq,bq,wk,bk,wv,bv,wo,bo}                base
///   layer<i>.ffn.{w1,b1,w2,b2}                             base
///   layer<i>.ln{1,2}.{gain,bias}                           layernorm
///   head.{tag,cls,mlm}.{w,b}                               head
///   adapter.<lang>.layer<i>.{attn,ffn}.{down,up}.{w,b}     adapter:<lang>
class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, NamedParamStore params);

  /// Deterministic initialization: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// embeddings ~ U(-sqrt(3/d), sqrt(3/d)), biases 0, layer-norm gains 1.
  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  NamedParamStore& params() noexcept { return params_; }
  const NamedParamStore& params() const noexcept { return params_; }

  /// Records the forward pass on `tape`. Output shapes: TokenTag [B, L, n_tags]
  /// and MaskedToken [B, L, vocab] for uniform-length batches (packed [T, C]
  /// otherwise); SentenceClass [B, n_classes].
  Var forward(Tape& tape, HeadKind head, const Batch& batch,
              const std::optional<std::string>& active_adapter = std::nullopt) const;
  /// Encoder output only, [T, d_model].
  Var encode(Tape& tape, const Batch& batch, const std::optional<std::string>& active_adapter = std::nullopt) const;
  /// Forward pass evaluated on a throwaway tape.
  Tensor logits(HeadKind head, const Batch& batch,
                const std::optional<std::string>& active_adapter = std::nullopt) const;

  bool has_adapter(const std::string& language) const;
  std::vector<std::string> adapter_languages() const;

 private:
  Var adapter_block(Tape& tape, Var x, const std::string& prefix) const;

  ModelConfig cfg_;
  NamedParamStore params_;
};

inline Model build_model(const ModelConfig& cfg, std::uint64_t seed) { return Model::build(cfg, seed); }

/// Closed-form census, excluding adapters:
///   V*d + Lmax*d
///   + n_layers * (4*(d*d + d) + (d*f + f) + (f*d + d) + 4*d)
///   + (d*n_tags + n_tags) + (d*n_classes + n_classes) + (d*V + V)
std::size_t base_parameter_count(const ModelConfig& cfg);
/// Per language: 2 * n_layers * (2*d*b + b + d).
std::size_t adapter_parameter_count(const ModelConfig& cfg);

/// Adds one adapter stack per language: up-projections zero, down-projections
/// U(-1/sqrt(d), 1/sqrt(d)). Throws InputError on empty, duplicate, or
/// already-present languages.
AdapterSet insert_adapters(Model& model, const std::vector<std::string>& languages, std::uint64_t seed);
/// Deep-copies the adapter stack of `source` once per target language.
AdapterSet clone_adapters(Model& model, const std::string& source, const std::vector<std::string>& languages);
void remove_adapters(Model& model, const std::string& language);

/// Checkpoint: text config header terminated by a "---" line, then the
/// parameter-store stream. Adapters can also be written per language.
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);
void save_adapter(const std::filesystem::path& path, const Model& model, const std::string& language);
/// Loads (or replaces) one adapter stack; the file must hold exactly one language.
std::string load_adapter(const std::filesystem::path& path, Model& model);

std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

}  // namespace cml
