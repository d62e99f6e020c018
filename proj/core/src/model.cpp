// SPDX-License-Identifier: Apache-2.0
#include "cml/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cml/errors.hpp"
#include "cml/random.hpp"
#include "cml/serialize.hpp"

namespace cml {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid model config: " + what); };
  if (n_layers == 0) fail("n_layers must be >= 1");
  if (d_model == 0) fail("d_model must be >= 1");
  if (n_heads == 0) fail("n_heads must be >= 1");
  if (d_model % n_heads != 0) {
    fail("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  }
  if (d_ffn == 0) fail("d_ffn must be >= 1");
  if (vocab_size == 0) fail("vocab_size must be >= 1");
  if (max_seq_len == 0) fail("max_seq_len must be >= 1");
  if (n_tags == 0) fail("n_tags must be >= 1");
  if (n_classes == 0) fail("n_classes must be >= 1");
  if (adapter_bottleneck < 1 || adapter_bottleneck >= d_model) fail("adapter bottleneck must satisfy 1 <= b_dim < d_model");
}

Batch Batch::from_sequences(const std::vector<std::vector<int>>& seqs) {
  Batch b;
  for (const auto& s : seqs) {
    b.tokens.insert(b.tokens.end(), s.begin(), s.end());
    b.offsets.push_back(b.tokens.size());
  }
  return b;
}

std::optional<std::size_t> Batch::uniform_length() const {
  if (size() == 0) return std::nullopt;
  const std::size_t len = length(0);
  for (std::size_t i = 1; i < size(); ++i) {
    if (length(i) != len) return std::nullopt;
  }
  return len;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void add_linear(NamedParamStore& s, const std::string& w, const std::string& b, std::size_t in, std::size_t out,
                ParamGroup group, Rng& rng) {
  s.add(w, uniform_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng), group);
  s.add(b, Tensor({out}, 0.0), group);
}

std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i); }

std::string adapter_prefix(const std::string& lang, std::size_t layer, const char* site) {
  return "adapter." + lang + "." + layer_prefix(layer) + "." + site;
}

}  // namespace

Model::Model(ModelConfig cfg, NamedParamStore params) : cfg_(cfg), params_(std::move(params)) { cfg_.validate(); }

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  NamedParamStore s;
  const std::size_t d = cfg.d_model;
  const double emb = std::sqrt(3.0 / static_cast<double>(d));
  s.add("embed.tok", uniform_tensor({cfg.vocab_size, d}, emb, rng), ParamGroup::base());
  s.add("embed.pos", uniform_tensor({cfg.max_seq_len, d}, emb, rng), ParamGroup::base());
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    for (const char* m : {"q", "k", "v", "o"}) {
      add_linear(s, p + ".attn.w" + m, p + ".attn.b" + m, d, d, ParamGroup::base(), rng);
    }
    add_linear(s, p + ".ffn.w1", p + ".ffn.b1", d, cfg.d_ffn, ParamGroup::base(), rng);
    add_linear(s, p + ".ffn.w2", p + ".ffn.b2", cfg.d_ffn, d, ParamGroup::base(), rng);
    for (const char* ln : {"ln1", "ln2"}) {
      s.add(p + "." + ln + ".gain", Tensor({d}, 1.0), ParamGroup::layer_norm());
      s.add(p + "." + ln + ".bias", Tensor({d}, 0.0), ParamGroup::layer_norm());
    }
  }
  add_linear(s, "head.tag.w", "head.tag.b", d, cfg.n_tags, ParamGroup::head(), rng);
  add_linear(s, "head.cls.w", "head.cls.b", d, cfg.n_classes, ParamGroup::head(), rng);
  add_linear(s, "head.mlm.w", "head.mlm.b", d, cfg.vocab_size, ParamGroup::head(), rng);
  return Model(cfg, std::move(s));
}

Var Model::adapter_block(Tape& tape, Var x, const std::string& prefix) const {
  const auto& p = params_;
  Var h = ops::add(ops::matmul(x, tape.param(p, prefix + ".down.w")), tape.param(p, prefix + ".down.b"));
  h = ops::gelu(h);
  h = ops::add(ops::matmul(h, tape.param(p, prefix + ".up.w")), tape.param(p, prefix + ".up.b"));
  return ops::add(x, h);
}

Var Model::encode(Tape& tape, const Batch& batch, const std::optional<std::string>& active_adapter) const {
  if (batch.size() == 0) throw InputError("empty batch");
  if (active_adapter && !has_adapter(*active_adapter)) {
    throw MissingAdapter("no adapter stack for language '" + *active_adapter + "'");
  }
  std::vector<int> positions(batch.tokens.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t len = batch.length(b);
    if (len == 0) throw InputError("empty sequence in batch");
    if (len > cfg_.max_seq_len) {
      throw InputError("sequence length " + std::to_string(len) + " exceeds max_seq_len " +
                       std::to_string(cfg_.max_seq_len));
    }
    for (std::size_t i = 0; i < len; ++i) positions[batch.offsets[b] + i] = static_cast<int>(i);
  }
  for (int tok : batch.tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= cfg_.vocab_size) {
      throw InputError("token id " + std::to_string(tok) + " outside vocabulary of size " +
                       std::to_string(cfg_.vocab_size));
    }
  }
  const auto& p = params_;
  Var x = ops::add(ops::embedding(tape.param(p, "embed.tok"), batch.tokens),
                   ops::embedding(tape.param(p, "embed.pos"), positions));
  for (std::size_t i = 0; i < cfg_.n_layers; ++i) {
    const std::string lp = layer_prefix(i);
    auto linear = [&](Var in, const std::string& w, const std::string& b) {
      return ops::add(ops::matmul(in, tape.param(p, w)), tape.param(p, b));
    };
    Var q = linear(x, lp + ".attn.wq", lp + ".attn.bq");
    Var k = linear(x, lp + ".attn.wk", lp + ".attn.bk");
    Var v = linear(x, lp + ".attn.wv", lp + ".attn.bv");
    Var a = linear(ops::attention(q, k, v, batch.offsets, cfg_.n_heads), lp + ".attn.wo", lp + ".attn.bo");
    if (active_adapter) a = adapter_block(tape, a, adapter_prefix(*active_adapter, i, "attn"));
    x = ops::layer_norm(ops::add(x, a), tape.param(p, lp + ".ln1.gain"), tape.param(p, lp + ".ln1.bias"));

    Var f = ops::gelu(linear(x, lp + ".ffn.w1", lp + ".ffn.b1"));
    f = linear(f, lp + ".ffn.w2", lp + ".ffn.b2");
    if (active_adapter) f = adapter_block(tape, f, adapter_prefix(*active_adapter, i, "ffn"));
    x = ops::layer_norm(ops::add(x, f), tape.param(p, lp + ".ln2.gain"), tape.param(p, lp + ".ln2.bias"));
  }
  return x;
}

Var Model::forward(Tape& tape, HeadKind head, const Batch& batch,
                   const std::optional<std::string>& active_adapter) const {
  Var x = encode(tape, batch, active_adapter);
  const auto& p = params_;
  auto project = [&](Var in, const char* name) {
    const std::string h = std::string("head.") + name;
    return ops::add(ops::matmul(in, tape.param(p, h + ".w")), tape.param(p, h + ".b"));
  };
  auto unpack = [&](Var logits) {
    if (auto len = batch.uniform_length()) {
      return ops::reshape(logits, {batch.size(), *len, logits.value().cols()});
    }
    return logits;
  };
  switch (head) {
    case HeadKind::TokenTag: return unpack(project(x, "tag"));
    case HeadKind::MaskedToken: return unpack(project(x, "mlm"));
    case HeadKind::SentenceClass: return project(ops::segment_mean(x, batch.offsets), "cls");
  }
  throw ContractViolation("unknown head kind");
}

Tensor Model::logits(HeadKind head, const Batch& batch, const std::optional<std::string>& active_adapter) const {
  Tape tape;
  return forward(tape, head, batch, active_adapter).value();
}

bool Model::has_adapter(const std::string& language) const {
  return params_.contains(adapter_prefix(language, 0, "attn") + ".down.w");
}

std::vector<std::string> Model::adapter_languages() const {
  std::set<std::string> langs;
  for (const auto& [name, entry] : params_.entries()) {
    if (entry.group.kind == GroupKind::Adapter) langs.insert(entry.group.language);
  }
  return {langs.begin(), langs.end()};
}

std::size_t base_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ffn, V = c.vocab_size;
  const std::size_t per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
  return V * d + c.max_seq_len * d + c.n_layers * per_layer + (d * c.n_tags + c.n_tags) +
         (d * c.n_classes + c.n_classes) + (d * V + V);
}

std::size_t adapter_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, b = c.adapter_bottleneck;
  return 2 * c.n_layers * (2 * d * b + b + d);
}

namespace {

void check_new_languages(const Model& model, const std::vector<std::string>& languages) {
  if (languages.empty()) throw InputError("adapter language list is empty");
  std::set<std::string> seen;
  for (const auto& l : languages) {
    if (l.empty() || l.find_first_of(". \t\n") != std::string::npos) {
      throw InputError("invalid adapter language id '" + l + "'");
    }
    if (!seen.insert(l).second) throw InputError("duplicate adapter language '" + l + "'");
    if (model.has_adapter(l)) throw InputError("adapter for '" + l + "' already present");
  }
}

}  // namespace

AdapterSet insert_adapters(Model& model, const std::vector<std::string>& languages, std::uint64_t seed) {
  check_new_languages(model, languages);
  const auto& cfg = model.config();
  const std::size_t d = cfg.d_model, b = cfg.adapter_bottleneck;
  Rng rng(seed);
  AdapterSet out;
  for (const auto& lang : languages) {
    auto& names = out[lang];
    const ParamGroup g = ParamGroup::adapter(lang);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
      for (const char* site : {"attn", "ffn"}) {
        const std::string p = adapter_prefix(lang, i, site);
        model.params().add(p + ".down.w", uniform_tensor({d, b}, 1.0 / std::sqrt(static_cast<double>(d)), rng), g);
        model.params().add(p + ".down.b", Tensor({b}, 0.0), g);
        model.params().add(p + ".up.w", Tensor({b, d}, 0.0), g);
        model.params().add(p + ".up.b", Tensor({d}, 0.0), g);
        for (const char* n : {".down.w", ".down.b", ".up.w", ".up.b"}) names.push_back(p + n);
      }
    }
  }
  return out;
}

AdapterSet clone_adapters(Model& model, const std::string& source, const std::vector<std::string>& languages) {
  if (!model.has_adapter(source)) throw MissingAdapter("no adapter stack for language '" + source + "'");
  check_new_languages(model, languages);
  const std::string src_prefix = "adapter." + source + ".";
  std::vector<std::pair<std::string, Tensor>> src;
  for (const auto& [name, entry] : model.params().entries()) {
    if (name.rfind(src_prefix, 0) == 0) src.emplace_back(name.substr(src_prefix.size()), entry.value);
  }
  AdapterSet out;
  for (const auto& lang : languages) {
    auto& names = out[lang];
    for (const auto& [suffix, value] : src) {
      const std::string name = "adapter." + lang + "." + suffix;
      model.params().add(name, value, ParamGroup::adapter(lang));
      names.push_back(name);
    }
  }
  return out;
}

void remove_adapters(Model& model, const std::string& language) {
  if (!model.has_adapter(language)) throw MissingAdapter("no adapter stack for language '" + language + "'");
  for (const auto& name : model.params().names(filters::adapters_of(language))) model.params().remove(name);
}

std::string model_config_to_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "n_layers=" << c.n_layers << "\n"
     << "d_model=" << c.d_model << "\n"
     << "n_heads=" << c.n_heads << "\n"
     << "d_ffn=" << c.d_ffn << "\n"
     << "vocab_size=" << c.vocab_size << "\n"
     << "max_seq_len=" << c.max_seq_len << "\n"
     << "n_tags=" << c.n_tags << "\n"
     << "n_classes=" << c.n_classes << "\n"
     << "adapter_bottleneck=" << c.adapter_bottleneck << "\n"
     << "activation=gelu\n";
  return os.str();
}

ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed model config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "activation") {
      if (val != "gelu") throw ConfigError("unsupported activation '" + val + "'");
      continue;
    }
    std::size_t v = 0;
    try {
      v = std::stoul(val);
    } catch (const std::exception&) {
      throw ConfigError("bad value for model config key '" + key + "'");
    }
    if (key == "n_layers") c.n_layers = v;
    else if (key == "d_model") c.d_model = v;
    else if (key == "n_heads") c.n_heads = v;
    else if (key == "d_ffn") c.d_ffn = v;
    else if (key == "vocab_size") c.vocab_size = v;
    else if (key == "max_seq_len") c.max_seq_len = v;
    else if (key == "n_tags") c.n_tags = v;
    else if (key == "n_classes") c.n_classes = v;
    else if (key == "adapter_bottleneck") c.adapter_bottleneck = v;
    else throw ConfigError("unknown model config key '" + key + "'");
  }
  return c;
}

namespace {
constexpr const char* kModelMagic = "CMLMODEL1";
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ostringstream os(std::ios::binary);
  os << kModelMagic << "\n" << model_config_to_text(model.config()) << "---\n";
  write_params(os, model.params());
  write_file_atomic(path, os.str());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic) throw IoError("not a model checkpoint: " + path.string());
  std::string header;
  while (std::getline(in, line) && line != "---") header += line + "\n";
  if (line != "---") throw IoError("unterminated config header in " + path.string());
  ModelConfig cfg = model_config_from_text(header);
  return Model(cfg, read_params(in));
}

void save_adapter(const std::filesystem::path& path, const Model& model, const std::string& language) {
  if (!model.has_adapter(language)) throw MissingAdapter("no adapter stack for language '" + language + "'");
  save_params(path, model.params(), filters::adapters_of(language));
}

std::string load_adapter(const std::filesystem::path& path, Model& model) {
  NamedParamStore loaded = load_params(path);
  std::set<std::string> langs;
  for (const auto& [name, entry] : loaded.entries()) {
    if (entry.group.kind != GroupKind::Adapter) throw IoError("non-adapter parameter '" + name + "' in adapter file");
    langs.insert(entry.group.language);
  }
  if (langs.size() != 1) throw IoError("adapter file must hold exactly one language");
  const std::string lang = *langs.begin();
  if (model.has_adapter(lang)) remove_adapters(model, lang);
  for (const auto& [name, entry] : loaded.entries()) model.params().add(name, entry.value, entry.group);
  if (!model.has_adapter(lang)) throw IoError("adapter file for '" + lang + "' is incomplete");
  return lang;
}

}  // namespace cml
