// SPDX-License-Identifier: Apache-2.0
#include "cml/sparse_update.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include "cml/errors.hpp"
#include "cml/log.hpp"
#include "cml/serialize.hpp"

namespace cml {

std::string to_string(UpdateScope scope) { return scope == UpdateScope::EncoderOnly ? "encoder" : "full"; }

UpdateScope parse_update_scope(const std::string& text) {
  if (text == "encoder") return UpdateScope::EncoderOnly;
  if (text == "full") return UpdateScope::Full;
  throw InputError("unknown update scope '" + text + "'");
}

GroupFilter scope_filter(UpdateScope scope) {
  return scope == UpdateScope::EncoderOnly ? filters::encoder() : filters::kinds({GroupKind::Base, GroupKind::LayerNorm, GroupKind::Head});
}

std::uint64_t scope_fingerprint(const NamedParamStore& store, UpdateScope scope) {
  return fingerprint(store, scope_filter(scope));
}

namespace {

bool coord_less(const SparseEntry& a, const SparseEntry& b) {
  return a.name != b.name ? a.name < b.name : a.index < b.index;
}

}  // namespace

SparseUpdate::SparseUpdate(std::uint64_t base_fingerprint, UpdateScope scope, std::vector<SparseEntry> entries)
    : base_fingerprint_(base_fingerprint), scope_(scope) {
  std::erase_if(entries, [](const SparseEntry& e) { return e.delta == 0.0; });
  std::sort(entries.begin(), entries.end(), coord_less);
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].name == entries[i - 1].name && entries[i].index == entries[i - 1].index) {
      throw InputError("duplicate sparse-update coordinate " + entries[i].name + "[" +
                       std::to_string(entries[i].index) + "]");
    }
  }
  for (const auto& e : entries) {
    if (!std::isfinite(e.delta)) throw NumericFault("non-finite delta at " + e.name);
  }
  entries_ = std::move(entries);
}

SparseUpdate SparseUpdate::from_difference(const NamedParamStore& store, const Snapshot& base, UpdateScope scope) {
  std::vector<SparseEntry> entries;
  const auto filter = scope_filter(scope);
  for (const auto& [name, delta] : param_delta(store, base, filter)) {
    for (std::size_t i = 0; i < delta.numel(); ++i) {
      if (delta[i] != 0.0) entries.push_back({name, i, delta[i]});
    }
  }
  return SparseUpdate(base.fingerprint(filter), scope, std::move(entries));
}

SparseUpdate SparseUpdate::negated() const {
  std::vector<SparseEntry> e = entries_;
  for (auto& x : e) x.delta = -x.delta;
  return SparseUpdate(base_fingerprint_, scope_, std::move(e));
}

SparseUpdate compose_sparse_updates(const std::vector<SparseUpdate>& updates) {
  if (updates.empty()) return SparseUpdate{};
  const std::uint64_t fp = updates.front().base_fingerprint();
  UpdateScope scope = updates.front().scope();
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> parts;
  for (const auto& u : updates) {
    if (u.base_fingerprint() != fp) {
      throw IncompatibleSnapshot("cannot compose updates with base fingerprints " + fingerprint_hex(fp) + " and " +
                                 fingerprint_hex(u.base_fingerprint()));
    }
    if (u.scope() == UpdateScope::Full) scope = UpdateScope::Full;
    for (const auto& e : u.entries()) parts[{e.name, e.index}].push_back(e.delta);
  }
  std::vector<SparseEntry> out;
  for (auto& [coord, deltas] : parts) {
    std::sort(deltas.begin(), deltas.end(), [](double a, double b) {
      return std::bit_cast<std::uint64_t>(a) < std::bit_cast<std::uint64_t>(b);
    });
    double s = 0.0;
    for (double d : deltas) s += d;
    if (s != 0.0) out.push_back({coord.first, coord.second, s});
  }
  return SparseUpdate(fp, scope, std::move(out));
}

AppliedUpdate apply_sparse_update(NamedParamStore& store, const SparseUpdate& update, StalePolicy policy) {
  if (policy != StalePolicy::Force) {
    const std::uint64_t fp = scope_fingerprint(store, update.scope());
    if (fp != update.base_fingerprint()) {
      const std::string msg = "sparse update base " + fingerprint_hex(update.base_fingerprint()) +
                              " does not match store " + fingerprint_hex(fp);
      if (policy == StalePolicy::Strict) throw StaleBase(msg);
      log_warn(msg + "; applying anyway");
    }
  }
  for (const auto& e : update.entries()) {
    if (!store.contains(e.name)) throw IncompatibleSnapshot("sparse update names unknown parameter '" + e.name + "'");
    if (e.index >= store.value(e.name).numel()) {
      throw IncompatibleSnapshot("sparse update coordinate " + e.name + "[" + std::to_string(e.index) + "] out of range");
    }
  }
  AppliedUpdate rec{update, {}, {}};
  rec.before.reserve(update.size());
  rec.after.reserve(update.size());
  const std::string* cur_name = nullptr;
  Tensor* cur = nullptr;
  for (const auto& e : update.entries()) {
    if (cur_name == nullptr || *cur_name != e.name) {
      cur = &store.mutable_value(e.name);
      cur_name = &e.name;
    }
    rec.before.push_back((*cur)[e.index]);
    (*cur)[e.index] += e.delta;
    rec.after.push_back((*cur)[e.index]);
  }
  return rec;
}

void revert_sparse_update(NamedParamStore& store, const AppliedUpdate& applied) {
  const auto& entries = applied.update.entries();
  const std::string* cur_name = nullptr;
  Tensor* cur = nullptr;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (cur_name == nullptr || *cur_name != e.name) {
      cur = &store.mutable_value(e.name);
      cur_name = &e.name;
    }
    double& v = (*cur)[e.index];
    if (std::bit_cast<std::uint64_t>(v) == std::bit_cast<std::uint64_t>(applied.after[i])) {
      v = applied.before[i];
    } else {
      v -= e.delta;
    }
  }
}

void subtract_sparse_update(NamedParamStore& store, const SparseUpdate& update) {
  for (const auto& e : update.entries()) store.mutable_value(e.name)[e.index] -= e.delta;
}

std::size_t changed_coordinates(const NamedParamStore& store, const Snapshot& snap, const GroupFilter& filter) {
  std::size_t n = 0;
  for (const auto& [name, entry] : store.entries()) {
    if (!filter(entry.group)) continue;
    auto it = snap.entries().find(name);
    if (it == snap.entries().end() || it->second.value.shape() != entry.value.shape()) {
      throw IncompatibleSnapshot("snapshot lacks parameter '" + name + "'");
    }
    const auto a = entry.value.data();
    const auto b = it->second.value.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) ++n;
    }
  }
  return n;
}

std::string sparse_update_to_text(const SparseUpdate& u) {
  std::ostringstream os;
  os << "CMLSPARSE1\n"
     << "fingerprint " << fingerprint_hex(u.base_fingerprint()) << "\n"
     << "scope " << to_string(u.scope()) << "\n"
     << "count " << u.size() << "\n";
  char buf[40];
  for (const auto& e : u.entries()) {
    std::snprintf(buf, sizeof buf, "%.17g", e.delta);
    os << e.name << " " << e.index << " " << buf << "\n";
  }
  return os.str();
}

SparseUpdate sparse_update_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string magic, key, fp_hex, scope_text;
  std::size_t count = 0;
  if (!(is >> magic) || magic != "CMLSPARSE1") throw IoError("not a sparse update file (bad magic)");
  if (!(is >> key >> fp_hex) || key != "fingerprint") throw IoError("sparse update: missing fingerprint");
  if (!(is >> key >> scope_text) || key != "scope") throw IoError("sparse update: missing scope");
  if (!(is >> key >> count) || key != "count") throw IoError("sparse update: missing count");
  std::vector<SparseEntry> entries;
  entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SparseEntry e;
    std::string delta;
    if (!(is >> e.name >> e.index >> delta)) throw IoError("sparse update: truncated at record " + std::to_string(i));
    e.delta = std::stod(delta);
    entries.push_back(std::move(e));
  }
  return SparseUpdate(parse_fingerprint_hex(fp_hex), parse_update_scope(scope_text), std::move(entries));
}

void save_sparse_update(const std::filesystem::path& path, const SparseUpdate& update) {
  write_file_atomic(path, sparse_update_to_text(update));
}

SparseUpdate load_sparse_update(const std::filesystem::path& path) { return sparse_update_from_text(read_file(path)); }

}  // namespace cml
