// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cml/param_store.hpp"

namespace cml {

enum class UpdateScope { EncoderOnly, Full };

std::string to_string(UpdateScope scope);
UpdateScope parse_update_scope(const std::string& text);
/// Group filter matching the parameters an update of this scope may touch.
GroupFilter scope_filter(UpdateScope scope);
/// Fingerprint of the store restricted to the scope's parameters.
std::uint64_t scope_fingerprint(const NamedParamStore& store, UpdateScope scope);

struct SparseEntry {
  std::string name;
  std::size_t index = 0;
  double delta = 0.0;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Sparse vector of parameter differences relative to a base fingerprint.
/// Entries are sorted by (name, index), unique per coordinate and non-zero.
class SparseUpdate {
 public:
  SparseUpdate() = default;
  /// Sorts, drops zero deltas, rejects duplicate coordinates.
  SparseUpdate(std::uint64_t base_fingerprint, UpdateScope scope, std::vector<SparseEntry> entries);

  /// Non-zero entries of (store - snapshot) at `coords` (all scope coordinates when empty).
  static SparseUpdate from_difference(const NamedParamStore& store, const Snapshot& base, UpdateScope scope);

  std::uint64_t base_fingerprint() const noexcept { return base_fingerprint_; }
  UpdateScope scope() const noexcept { return scope_; }
  const std::vector<SparseEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  SparseUpdate negated() const;

  friend bool operator==(const SparseUpdate&, const SparseUpdate&) = default;

 private:
  std::uint64_t base_fingerprint_ = 0;
  UpdateScope scope_ = UpdateScope::Full;
  std::vector<SparseEntry> entries_;
};

/// Coordinate-wise sum. Contributions to a coordinate are added in sorted
/// order, so the result does not depend on the order of `updates`. Zero sums
/// are dropped. All inputs must share one base fingerprint.
SparseUpdate compose_sparse_updates(const std::vector<SparseUpdate>& updates);

enum class StalePolicy {
  Strict,  ///< mismatching base fingerprint -> StaleBase
  Warn,    ///< apply anyway, log a warning
  Force,   ///< apply anyway, silently
};

/// Record of an application: lets revert restore the exact pre-apply values
/// for coordinates nobody touched in between.
struct AppliedUpdate {
  SparseUpdate update;
  std::vector<double> before;
  std::vector<double> after;
};

/// theta[c] += delta for every entry.
AppliedUpdate apply_sparse_update(NamedParamStore& store, const SparseUpdate& update,
                                  StalePolicy policy = StalePolicy::Strict);
/// Subtracts the deltas again. A coordinate still holding its post-apply value
/// is restored bit-exactly to its pre-apply value.
void revert_sparse_update(NamedParamStore& store, const AppliedUpdate& applied);
/// theta[c] -= delta for every entry (no bookkeeping).
void subtract_sparse_update(NamedParamStore& store, const SparseUpdate& update);

/// Number of coordinates whose bit pattern differs between store and snapshot.
std::size_t changed_coordinates(const NamedParamStore& store, const Snapshot& snap,
                                const GroupFilter& filter = filters::all());

/// Text format:
///   CMLSPARSE1
///   fingerprint <16 hex digits>
///   scope <encoder|full>
///   count <N>
///   <name> <index> <delta as %.17g>     (N lines, sorted)
std::string sparse_update_to_text(const SparseUpdate& update);
SparseUpdate sparse_update_from_text(const std::string& text);
void save_sparse_update(const std::filesystem::path& path, const SparseUpdate& update);
SparseUpdate load_sparse_update(const std::filesystem::path& path);

}  // namespace cml
