// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cml/tensor.hpp"

namespace cml {

enum class GroupKind : std::uint8_t { Base = 0, Adapter = 1, Head = 2, LayerNorm = 3 };

/// Group tag carried by every named parameter. `language` is only meaningful
/// for adapters; an adapter group with an empty language matches any adapter
/// when used in filters or frozen sets.
struct ParamGroup {
  GroupKind kind = GroupKind::Base;
  std::string language;

  static ParamGroup base() { return {GroupKind::Base, {}}; }
  static ParamGroup adapter(std::string lang) { return {GroupKind::Adapter, std::move(lang)}; }
  static ParamGroup any_adapter() { return {GroupKind::Adapter, {}}; }
  static ParamGroup head() { return {GroupKind::Head, {}}; }
  static ParamGroup layer_norm() { return {GroupKind::LayerNorm, {}}; }

  /// True when `other` falls under this group (wildcard-aware).
  bool covers(const ParamGroup& other) const;
  std::string to_string() const;
  static ParamGroup parse(const std::string& text);

  friend auto operator<=>(const ParamGroup&, const ParamGroup&) = default;
};

using GroupFilter = std::function<bool(const ParamGroup&)>;

namespace filters {
GroupFilter all();
GroupFilter kinds(std::vector<GroupKind> kinds);
/// Base and LayerNorm: everything that is neither a head nor an adapter.
GroupFilter encoder();
GroupFilter adapters_of(std::string language);
}  // namespace filters

struct ParamEntry {
  Tensor value;
  ParamGroup group;
  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

/// Name -> (tensor, group) map iterated in lexicographic name order. Every
/// mutating call bumps `version()`.
class NamedParamStore {
 public:
  using Entries = std::map<std::string, ParamEntry>;

  void add(const std::string& name, Tensor value, ParamGroup group);
  void remove(const std::string& name);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor& value(const std::string& name) const;
  const ParamGroup& group(const std::string& name) const;
  /// Mutable access; counts as a mutation.
  Tensor& mutable_value(const std::string& name);
  void set_value(const std::string& name, Tensor value);

  const Entries& entries() const noexcept { return entries_; }
  std::vector<std::string> names(const GroupFilter& filter = filters::all()) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count(const GroupFilter& filter = filters::all()) const;
  std::uint64_t version() const noexcept { return version_; }

  /// Content equality (names, groups, shapes, bit patterns); ignores version.
  bool same_contents(const NamedParamStore& other) const;

 private:
  friend class Snapshot;
  Entries entries_;
  std::uint64_t version_ = 0;
};

/// 64-bit FNV-1a over names, group tags, shapes and value bit patterns of the
/// entries accepted by `filter`.
std::uint64_t fingerprint(const NamedParamStore& store, const GroupFilter& filter = filters::all());
/// FNV-1a 64 of raw bytes.
std::uint64_t fnv1a(std::string_view bytes);
std::string fingerprint_hex(std::uint64_t fp);
std::uint64_t parse_fingerprint_hex(const std::string& text);

/// Immutable copy of a store; cheap to copy and safe to share across threads.
class Snapshot {
 public:
  explicit Snapshot(const NamedParamStore& store);

  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  /// Fingerprint restricted to the entries passing `filter`.
  std::uint64_t fingerprint(const GroupFilter& filter) const;
  const NamedParamStore::Entries& entries() const noexcept { return *entries_; }
  /// Overwrites `store` with the snapshot contents.
  void restore(NamedParamStore& store) const;

 private:
  std::shared_ptr<const NamedParamStore::Entries> entries_;
  std::uint64_t fingerprint_;
};

inline Snapshot snapshot_params(const NamedParamStore& store) { return Snapshot(store); }

/// current - snapshot for every name whose group passes `filter`.
std::map<std::string, Tensor> param_delta(const NamedParamStore& store, const Snapshot& snap,
                                          const GroupFilter& filter = filters::all());

}  // namespace cml
