#pragma once

#include <string>
#include <vector>

#include "ft/tensor.hpp"

namespace ft {

struct EdgeConfig {
  std::string method = "gradient";
  // Saturation constant of e = m / (m + k); larger k mutes weak edges.
  float k = 0.5f;
};

// Edge-strength image derived from a normalized depth crop. Output values
// lie in [0,1] and are zero on background pixels (depth == +1).
Tensor extract_edges(const Tensor& depth, const EdgeConfig& config = {});

std::vector<std::string> registered_edge_methods();

}  // namespace ft
