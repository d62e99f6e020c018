// SPDX-License-Identifier: Apache-2.0
#include "cml/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cml/errors.hpp"

namespace cml {

namespace {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError("truncated parameter stream");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw IoError("implausible string length in parameter stream");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("truncated parameter stream");
  return s;
}

}  // namespace

void write_params(std::ostream& out, const NamedParamStore& store, const GroupFilter& filter) {
  out.write(kParamMagic, 8);
  put<std::uint64_t>(out, store.names(filter).size());
  for (const auto& [name, entry] : store.entries()) {
    if (!filter(entry.group)) continue;
    put_string(out, name);
    put_string(out, entry.group.to_string());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entry.value.rank()));
    for (std::size_t d : entry.value.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(entry.value.data().data()),
              static_cast<std::streamsize>(entry.value.numel() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing parameter stream");
}

NamedParamStore read_params(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kParamMagic, 8) != 0) throw IoError("not a parameter file (bad magic)");
  const auto count = get<std::uint64_t>(in);
  NamedParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(in);
    ParamGroup group = ParamGroup::parse(get_string(in));
    const auto rank = get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw IoError("truncated values for '" + name + "'");
    store.add(name, std::move(t), std::move(group));
  }
  return store;
}

void save_params(const std::filesystem::path& path, const NamedParamStore& store, const GroupFilter& filter) {
  std::ostringstream buf(std::ios::binary);
  write_params(buf, store, filter);
  write_file_atomic(path, buf.str());
}

NamedParamStore load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_params(in);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace cml
