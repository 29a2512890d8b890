#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ft/net.hpp"
#include "ft/tensor.hpp"

namespace ft {

// Immutable snapshot of a trained network: architecture id, named
// single-precision parameter tensors and training metadata.
struct Checkpoint {
  std::string arch_id;
  bool tie_streams = true;
  std::uint64_t iterations = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Tensor>> params;

  static Checkpoint from_network(const NetworkGraph& net,
                                 std::uint64_t iterations, std::uint64_t seed,
                                 std::uint64_t config_hash);
  NetworkGraph to_network() const;

  bool operator==(const Checkpoint& o) const = default;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ft
