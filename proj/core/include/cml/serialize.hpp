// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "cml/param_store.hpp"

namespace cml {

/// Binary parameter-store format, little-endian:
///
///   magic   "CMLPARM1"                      8 bytes
///   count   u64                             number of records
///   record  u32 name_len, name bytes
///           u32 group_len, group tag bytes  ("base", "head", "layernorm", "adapter:<lang>")
///           u32 rank, rank x u64 dims
///           numel x f64 values (IEEE-754 bit patterns)
///
/// Records appear in lexicographic name order. See docs/formats.md.
inline constexpr char kParamMagic[9] = "CMLPARM1";

void write_params(std::ostream& out, const NamedParamStore& store, const GroupFilter& filter = filters::all());
NamedParamStore read_params(std::istream& in);

void save_params(const std::filesystem::path& path, const NamedParamStore& store,
                 const GroupFilter& filter = filters::all());
NamedParamStore load_params(const std::filesystem::path& path);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace cml
