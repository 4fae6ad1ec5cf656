#include "corrtrack/params.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace corrtrack {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace {
constexpr std::uint64_t kMagic = 0x314d5250'4b525443ULL;  // "CTRKPRM1"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("parameter file truncated");
  return v;
}
}  // namespace

void ParamRegistry::add(const std::string& name, const Tensor& t) {
  if (!t.defined())
    throw std::invalid_argument("registry: undefined tensor for " + name);
  for (const auto& [n, _] : entries_)
    if (n == name)
      throw std::invalid_argument("registry: duplicate name " + name);
  entries_.emplace_back(name, t);
}

void ParamRegistry::add_all(const std::string& prefix,
                            const ParamRegistry& sub) {
  for (const auto& [n, t] : sub.entries_) add(prefix + "." + n, t);
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

Tensor ParamRegistry::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  return Tensor();
}

void ParamRegistry::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_pod(os, kMagic);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape())
      write_pod(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

void ParamRegistry::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  if (read_pod<std::uint64_t>(is) != kMagic)
    throw std::runtime_error(path + ": not a parameter file (bad magic)");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported version " +
                             std::to_string(version));
  const auto count = read_pod<std::uint32_t>(is);
  if (count != entries_.size())
    throw std::runtime_error(path + ": holds " + std::to_string(count) +
                             " tensors, registry has " +
                             std::to_string(entries_.size()));
  for (auto& [name, t] : entries_) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string fname(name_len, '\0');
    is.read(fname.data(), name_len);
    if (fname != name)
      throw std::runtime_error(path + ": expected tensor '" + name +
                               "', found '" + fname + "'");
    const auto rank = read_pod<std::uint32_t>(is);
    if (rank != t.rank())
      throw std::runtime_error(path + ": rank mismatch for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = read_pod<std::uint64_t>(is);
    if (shape != t.shape())
      throw std::runtime_error(path + ": shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw std::runtime_error(path + ": truncated payload");
  }
}

}  // namespace corrtrack
