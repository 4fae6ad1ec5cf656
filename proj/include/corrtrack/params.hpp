#pragma once

#include <string>
#include <utility>
#include <vector>

#include "corrtrack/tensor.hpp"

namespace corrtrack {

/// Ordered name -> tensor registry. The order is the serialization order;
/// names are dotted paths ("encoder.0.self.wq"). Registered tensors are
/// shared handles: loading writes into the live parameter storage.
class ParamRegistry {
 public:
  void add(const std::string& name, const Tensor& t);
  /// Registers every tensor of a sub-registry under `prefix.`.
  void add_all(const std::string& prefix, const ParamRegistry& sub);

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  Tensor find(const std::string& name) const;  // undefined Tensor if absent

  /// Flat self-describing binary container: header (magic, version, count),
  /// then per tensor: name, rank, extents, little-endian float64 payload.
  /// Round-trips bit-exactly.
  void save(const std::string& path) const;
  /// Loads into the registered storage. Names, order, and shapes must match
  /// the registry exactly.
  void load(const std::string& path);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace corrtrack
