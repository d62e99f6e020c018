// SPDX-License-Identifier: Apache-2.0
#include "cml/param_store.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

#include "cml/errors.hpp"

namespace cml {

bool ParamGroup::covers(const ParamGroup& other) const {
  if (kind != other.kind) return false;
  if (kind != GroupKind::Adapter) return true;
  return language.empty() || language == other.language;
}

std::string ParamGroup::to_string() const {
  switch (kind) {
    case GroupKind::Base: return "base";
    case GroupKind::Head: return "head";
    case GroupKind::LayerNorm: return "layernorm";
    case GroupKind::Adapter: return "adapter:" + language;
  }
  return "?";
}

ParamGroup ParamGroup::parse(const std::string& text) {
  if (text == "base") return base();
  if (text == "head") return head();
  if (text == "layernorm") return layer_norm();
  if (text.rfind("adapter:", 0) == 0) return adapter(text.substr(8));
  throw InputError("unknown parameter group tag '" + text + "'");
}

namespace filters {

GroupFilter all() {
  return [](const ParamGroup&) { return true; };
}

GroupFilter kinds(std::vector<GroupKind> ks) {
  return [ks = std::move(ks)](const ParamGroup& g) {
    for (GroupKind k : ks) {
      if (g.kind == k) return true;
    }
    return false;
  };
}

GroupFilter encoder() { return kinds({GroupKind::Base, GroupKind::LayerNorm}); }

GroupFilter adapters_of(std::string language) {
  return [lang = std::move(language)](const ParamGroup& g) {
    return g.kind == GroupKind::Adapter && g.language == lang;
  };
}

}  // namespace filters

void NamedParamStore::add(const std::string& name, Tensor value, ParamGroup group) {
  if (name.empty()) throw InputError("parameter name must not be empty");
  auto [it, inserted] = entries_.emplace(name, ParamEntry{std::move(value), std::move(group)});
  if (!inserted) throw InputError("duplicate parameter name '" + name + "'");
  ++version_;
}

void NamedParamStore::remove(const std::string& name) {
  if (entries_.erase(name) == 0) throw InputError("no parameter named '" + name + "'");
  ++version_;
}

const Tensor& NamedParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InputError("no parameter named '" + name + "'");
  return it->second.value;
}

const ParamGroup& NamedParamStore::group(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InputError("no parameter named '" + name + "'");
  return it->second.group;
}

Tensor& NamedParamStore::mutable_value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InputError("no parameter named '" + name + "'");
  ++version_;
  return it->second.value;
}

void NamedParamStore::set_value(const std::string& name, Tensor value) {
  Tensor& dst = mutable_value(name);
  if (dst.shape() != value.shape()) {
    throw ContractViolation("shape mismatch assigning '" + name + "': " + shape_to_string(dst.shape()) +
                            " vs " + shape_to_string(value.shape()));
  }
  dst = std::move(value);
}

std::vector<std::string> NamedParamStore::names(const GroupFilter& filter) const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) {
    if (filter(entry.group)) out.push_back(name);
  }
  return out;
}

std::size_t NamedParamStore::parameter_count(const GroupFilter& filter) const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) {
    if (filter(entry.group)) n += entry.value.numel();
  }
  return n;
}

bool NamedParamStore::same_contents(const NamedParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.group != b->second.group) return false;
    const Tensor& x = a->second.value;
    const Tensor& y = b->second.value;
    if (x.shape() != y.shape()) return false;
    if (std::memcmp(x.data().data(), y.data().data(), x.numel() * sizeof(double)) != 0) return false;
  }
  return true;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
};

std::uint64_t fingerprint_entries(const NamedParamStore::Entries& entries, const GroupFilter& filter) {
  Fnv1a f;
  for (const auto& [name, entry] : entries) {
    if (!filter(entry.group)) continue;
    f.str(name);
    f.str(entry.group.to_string());
    f.u64(entry.value.rank());
    for (std::size_t d : entry.value.shape()) f.u64(d);
    for (double v : entry.value.data()) f.u64(std::bit_cast<std::uint64_t>(v));
  }
  return f.h;
}

}  // namespace

std::uint64_t fingerprint(const NamedParamStore& store, const GroupFilter& filter) {
  return fingerprint_entries(store.entries(), filter);
}

std::uint64_t fnv1a(std::string_view bytes) {
  Fnv1a f;
  f.bytes(bytes.data(), bytes.size());
  return f.h;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

std::uint64_t parse_fingerprint_hex(const std::string& text) {
  if (text.size() != 16) throw InputError("fingerprint must be 16 hex digits, got '" + text + "'");
  std::uint64_t v = 0;
  for (char c : text) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw InputError("bad hex digit in fingerprint '" + text + "'");
  }
  return v;
}

Snapshot::Snapshot(const NamedParamStore& store)
    : entries_(std::make_shared<const NamedParamStore::Entries>(store.entries())),
      fingerprint_(fingerprint_entries(*entries_, filters::all())) {}

std::uint64_t Snapshot::fingerprint(const GroupFilter& filter) const {
  return fingerprint_entries(*entries_, filter);
}

void Snapshot::restore(NamedParamStore& store) const {
  store.entries_ = *entries_;
  ++store.version_;
}

std::map<std::string, Tensor> param_delta(const NamedParamStore& store, const Snapshot& snap,
                                          const GroupFilter& filter) {
  const auto& cur = store.entries();
  const auto& old = snap.entries();
  if (cur.size() != old.size()) throw IncompatibleSnapshot("snapshot has a different parameter set");
  std::map<std::string, Tensor> out;
  auto a = cur.begin();
  auto b = old.begin();
  for (; a != cur.end(); ++a, ++b) {
    if (a->first != b->first) {
      throw IncompatibleSnapshot("snapshot parameter '" + b->first + "' vs store '" + a->first + "'");
    }
    if (a->second.value.shape() != b->second.value.shape()) {
      throw IncompatibleSnapshot("shape mismatch for '" + a->first + "'");
    }
    if (!filter(a->second.group)) continue;
    Tensor d(a->second.value.shape());
    const auto x = a->second.value.data();
    const auto y = b->second.value.data();
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] = x[i] - y[i];
    out.emplace(a->first, std::move(d));
  }
  return out;
}

}  // namespace cml
