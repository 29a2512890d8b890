#include "ft/edges.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

namespace ft {

namespace {

// Sobel gradient magnitude with replicate-edge padding, squashed to [0,1]
// by m / (m + k).
Tensor gradient_edges(const Tensor& depth, float k) {
  const int h = depth.dim(2), w = depth.dim(3);
  Tensor out(depth.shape());
  auto px = [&](int y, int x) {
    y = std::max(0, std::min(h - 1, y));
    x = std::max(0, std::min(w - 1, x));
    return depth.at(0, 0, y, x);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (px(y, x) >= 1.0f) continue;  // background stays zero
      float gx = (px(y - 1, x + 1) + 2.0f * px(y, x + 1) + px(y + 1, x + 1)) -
                 (px(y - 1, x - 1) + 2.0f * px(y, x - 1) + px(y + 1, x - 1));
      float gy = (px(y + 1, x - 1) + 2.0f * px(y + 1, x) + px(y + 1, x + 1)) -
                 (px(y - 1, x - 1) + 2.0f * px(y - 1, x) + px(y - 1, x + 1));
      float m = std::sqrt(gx * gx + gy * gy);
      out.at(0, 0, y, x) = m / (m + k);
    }
  }
  return out;
}

using EdgeFn = std::function<Tensor(const Tensor&, float)>;

const std::map<std::string, EdgeFn>& registry() {
  static const std::map<std::string, EdgeFn> r = {
      {"gradient", gradient_edges},
  };
  return r;
}

}  // namespace

Tensor extract_edges(const Tensor& depth, const EdgeConfig& config) {
  if (depth.rank() != 4 || depth.dim(0) != 1 || depth.dim(1) != 1)
    throw std::invalid_argument("extract_edges: expected a [1,1,H,W] depth crop, got " +
                                Tensor::shape_str(depth.shape()));
  auto it = registry().find(config.method);
  if (it == registry().end()) {
    std::string known;
    for (const auto& [name, fn] : registry())
      known += (known.empty() ? "" : ", ") + name;
    throw std::invalid_argument("extract_edges: unknown method '" + config.method +
                                "' (registered: " + known + ")");
  }
  return it->second(depth, config.k);
}

std::vector<std::string> registered_edge_methods() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

}  // namespace ft
