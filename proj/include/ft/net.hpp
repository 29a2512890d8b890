#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ft/ops.hpp"
#include "ft/optimizer.hpp"
#include "ft/rng.hpp"

namespace ft {

enum class Arch {
  SingleShallow,
  SingleMedian,
  SingleDeep,
  SingleDeepFingerOnly,
  FusionEnhance,
  FusionEarly,
  FusionLate,
  FusionSlow,
  FusionResult,
};

inline const std::vector<std::pair<Arch, std::string>>& arch_names() {
  static const std::vector<std::pair<Arch, std::string>> names = {
      {Arch::SingleShallow, "single-shallow"},
      {Arch::SingleMedian, "single-median"},
      {Arch::SingleDeep, "single-deep"},
      {Arch::SingleDeepFingerOnly, "single-deep-fingeronly"},
      {Arch::FusionEnhance, "fusion-enhance"},
      {Arch::FusionEarly, "fusion-early"},
      {Arch::FusionLate, "fusion-late"},
      {Arch::FusionSlow, "fusion-slow"},
      {Arch::FusionResult, "fusion-result"},
  };
  return names;
}

inline std::string arch_to_string(Arch a) {
  for (const auto& [k, v] : arch_names())
    if (k == a) return v;
  throw std::invalid_argument("unknown arch id");
}

inline Arch arch_from_string(const std::string& s) {
  for (const auto& [k, v] : arch_names())
    if (v == s) return k;
  std::string known;
  for (const auto& [k, v] : arch_names()) known += (known.empty() ? "" : ", ") + v;
  throw std::invalid_argument("unknown arch id '" + s + "' (known: " + known + ")");
}

enum class LayerKind { Input, Conv, MaxPool, Relu, Fc, Flatten, Concat, Blend };

struct BuildOptions {
  std::uint64_t seed = 0;
  bool tie_streams = true;  // slow/late fusion share trunk weights
};

// Ordered layer graph over the tensor-core primitives. Nodes are appended in
// topological order; forward/backward walk the list. Tied weights are one
// ParamTensor referenced from several nodes, so their gradient is the sum
// over uses and tied values can never diverge.
template <typename T>
class NetworkGraphT {
 public:
  struct Node {
    LayerKind kind;
    std::string name;
    int in0 = -1, in1 = -1;
    int param_w = -1, param_b = -1;  // indices into params_
    int stride = 1, pad = 0;
    T alpha = T(0), beta = T(0);
    std::vector<int> static_shape;  // per-item output shape (no batch dim)
    // forward caches
    TensorT<T> out;
    MaxPoolResult<T> pool_cache;
  };

  struct TraceEntry {
    std::string name;
    std::vector<int> shape;  // per-item: {C,H,W} or {K}
  };

  explicit NetworkGraphT(std::uint64_t seed = 0) : rng_(seed) {}

  static NetworkGraphT build(Arch arch, const BuildOptions& opt = {});

  // --- graph assembly ----------------------------------------------------

  int add_input(const std::string& slot, int channels, int h, int w) {
    Node nd;
    nd.kind = LayerKind::Input;
    nd.name = slot;
    nd.static_shape = {channels, h, w};
    if (slot == "edge") edge_input_ = static_cast<int>(nodes_.size());
    else if (slot == "depth") depth_input_ = static_cast<int>(nodes_.size());
    else throw std::invalid_argument("input slot must be 'depth' or 'edge'");
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // tie_with: node id of a previous conv whose parameters are reused.
  int add_conv(const std::string& name, int in, int out_ch, int k, int stride,
               int tie_with = -1, const std::string& tie_group = "") {
    const auto& s = shape_of(in);
    if (s.size() != 3) throw std::invalid_argument(name + ": conv input must be spatial");
    int pad = k / 2;  // same padding
    Node nd;
    nd.kind = LayerKind::Conv;
    nd.name = name;
    nd.in0 = in;
    nd.stride = stride;
    nd.pad = pad;
    nd.static_shape = {out_ch, conv_out_extent(s[1], k, stride, pad),
                       conv_out_extent(s[2], k, stride, pad)};
    if (tie_with >= 0) {
      nd.param_w = nodes_[tie_with].param_w;
      nd.param_b = nodes_[tie_with].param_b;
    } else {
      nd.param_w = new_param(name + ".w", {out_ch, s[0], k, k},
                             std::sqrt(2.0 / (s[0] * k * k)), tie_group);
      nd.param_b = new_param(name + ".b", {out_ch}, 0.0, tie_group);
    }
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_pool(int in) {
    const auto& s = shape_of(in);
    Node nd;
    nd.kind = LayerKind::MaxPool;
    nd.name = "pool";
    nd.in0 = in;
    nd.static_shape = {s[0], s[1] / 2, s[2] / 2};
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_relu(int in) {
    Node nd;
    nd.kind = LayerKind::Relu;
    nd.name = "relu";
    nd.in0 = in;
    nd.static_shape = shape_of(in);
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_flatten(int in) {
    const auto& s = shape_of(in);
    Node nd;
    nd.kind = LayerKind::Flatten;
    nd.name = "flatten";
    nd.in0 = in;
    nd.static_shape = {s[0] * s[1] * s[2]};
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_fc(const std::string& name, int in, int units, int tie_with = -1,
             const std::string& tie_group = "", double init_scale = 1.0) {
    const auto& s = shape_of(in);
    if (s.size() != 1) throw std::invalid_argument(name + ": fc input must be flat");
    Node nd;
    nd.kind = LayerKind::Fc;
    nd.name = name;
    nd.in0 = in;
    nd.static_shape = {units};
    if (tie_with >= 0) {
      nd.param_w = nodes_[tie_with].param_w;
      nd.param_b = nodes_[tie_with].param_b;
    } else {
      nd.param_w = new_param(name + ".w", {units, s[0]},
                             init_scale * std::sqrt(2.0 / s[0]), tie_group);
      nd.param_b = new_param(name + ".b", {units}, 0.0, tie_group);
    }
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_concat(int a, int b) {
    const auto& sa = shape_of(a);
    const auto& sb = shape_of(b);
    Node nd;
    nd.kind = LayerKind::Concat;
    nd.name = "concat";
    nd.in0 = a;
    nd.in1 = b;
    if (sa.size() == 3)
      nd.static_shape = {sa[0] + sb[0], sa[1], sa[2]};
    else
      nd.static_shape = {sa[0] + sb[0]};
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_blend(int a, int b, T alpha, T beta) {
    Node nd;
    nd.kind = LayerKind::Blend;
    nd.name = "blend";
    nd.in0 = a;
    nd.in1 = b;
    nd.alpha = alpha;
    nd.beta = beta;
    nd.static_shape = shape_of(a);
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // --- execution ----------------------------------------------------------

  TensorT<T> forward(const TensorT<T>& depth, const TensorT<T>* edge = nullptr) {
    if (edge_input_ >= 0 && edge == nullptr)
      throw std::invalid_argument("forward: architecture '" + arch_id_ +
                                  "' requires an edge stream");
    for (auto& nd : nodes_) {
      switch (nd.kind) {
        case LayerKind::Input: {
          const TensorT<T>& src =
              (static_cast<int>(&nd - nodes_.data()) == edge_input_) ? *edge : depth;
          check_input_shape(nd, src);
          nd.out = src;
          break;
        }
        case LayerKind::Conv:
          nd.out = conv2d_forward(act(nd.in0), params_[nd.param_w]->value,
                                  params_[nd.param_b]->value, nd.stride, nd.pad);
          break;
        case LayerKind::MaxPool:
          nd.pool_cache = maxpool_forward(act(nd.in0));
          nd.out = nd.pool_cache.out;
          break;
        case LayerKind::Relu:
          nd.out = relu_forward(act(nd.in0));
          break;
        case LayerKind::Flatten:
          nd.out = flatten(act(nd.in0));
          break;
        case LayerKind::Fc:
          nd.out = fc_forward(act(nd.in0), params_[nd.param_w]->value,
                              params_[nd.param_b]->value);
          break;
        case LayerKind::Concat:
          nd.out = concat_channels(act(nd.in0), act(nd.in1));
          break;
        case LayerKind::Blend:
          nd.out = blend(act(nd.in0), act(nd.in1), nd.alpha, nd.beta);
          break;
      }
    }
    forward_done_ = true;
    return nodes_.back().out;
  }

  // Accumulates parameter gradients; activations from the last forward are
  // required.
  void backward(const TensorT<T>& grad_output) {
    if (!forward_done_)
      throw std::logic_error("backward called before forward");
    if (!grad_output.same_shape(nodes_.back().out))
      throw std::invalid_argument("backward: grad_output shape mismatch");
    std::vector<TensorT<T>> grads(nodes_.size());
    grads.back() = grad_output;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& nd = nodes_[i];
      if (grads[i].empty()) continue;  // unreached branch
      const TensorT<T>& g = grads[i];
      switch (nd.kind) {
        case LayerKind::Input:
          break;
        case LayerKind::Conv: {
          auto cg = conv2d_backward(g, act(nd.in0), params_[nd.param_w]->value,
                                    nd.stride, nd.pad);
          accumulate(grads[nd.in0], std::move(cg.input));
          accumulate_param(nd.param_w, cg.weights);
          accumulate_param(nd.param_b, cg.bias);
          break;
        }
        case LayerKind::MaxPool:
          accumulate(grads[nd.in0], maxpool_backward(g, nd.pool_cache));
          break;
        case LayerKind::Relu:
          accumulate(grads[nd.in0], relu_backward(g, act(nd.in0)));
          break;
        case LayerKind::Flatten:
          accumulate(grads[nd.in0], g.reshaped(act(nd.in0).shape()));
          break;
        case LayerKind::Fc: {
          auto fg = fc_backward(g, act(nd.in0), params_[nd.param_w]->value);
          accumulate(grads[nd.in0], std::move(fg.input));
          accumulate_param(nd.param_w, fg.weights);
          accumulate_param(nd.param_b, fg.bias);
          break;
        }
        case LayerKind::Concat: {
          int a_features = shape_of(nd.in0)[0];
          auto [ga, gb] = concat_backward(g, a_features);
          accumulate(grads[nd.in0], std::move(ga));
          accumulate(grads[nd.in1], std::move(gb));
          break;
        }
        case LayerKind::Blend: {
          TensorT<T> ga(g.shape()), gb(g.shape());
          for (std::size_t q = 0; q < g.size(); ++q) {
            ga[q] = nd.alpha * g[q];
            gb[q] = nd.beta * g[q];
          }
          accumulate(grads[nd.in0], std::move(ga));
          accumulate(grads[nd.in1], std::move(gb));
          break;
        }
      }
    }
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  // --- introspection -------------------------------------------------------

  const std::string& arch_id() const { return arch_id_; }
  void set_arch_id(std::string id) { arch_id_ = std::move(id); }
  bool tie_streams() const { return tie_streams_; }
  bool uses_edge() const { return edge_input_ >= 0; }
  int output_dim() const { return nodes_.back().static_shape.back(); }

  const std::vector<std::shared_ptr<ParamTensorT<T>>>& parameters() const {
    return params_;
  }
  std::vector<std::shared_ptr<ParamTensorT<T>>>& parameters() { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  std::vector<TraceEntry> layer_trace() const {
    std::vector<TraceEntry> t;
    for (const auto& nd : nodes_) t.push_back({nd.name, nd.static_shape});
    return t;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  Rng& rng() { return rng_; }

  template <typename U>
  NetworkGraphT<U> cast() const;

 private:
  template <typename U>
  friend class NetworkGraphT;

  const std::vector<int>& shape_of(int node) const {
    return nodes_.at(static_cast<std::size_t>(node)).static_shape;
  }

  const TensorT<T>& act(int node) const { return nodes_[node].out; }

  void check_input_shape(const Node& nd, const TensorT<T>& src) const {
    if (src.rank() != 4 || src.dim(1) != nd.static_shape[0] ||
        src.dim(2) != nd.static_shape[1] || src.dim(3) != nd.static_shape[2])
      throw std::invalid_argument(
          "forward: " + nd.name + " input must be [N," +
          std::to_string(nd.static_shape[0]) + "," +
          std::to_string(nd.static_shape[1]) + "," +
          std::to_string(nd.static_shape[2]) + "], got " +
          TensorT<T>::shape_str(src.shape()));
  }

  int new_param(const std::string& name, std::vector<int> shape, double stddev,
                const std::string& tie_group) {
    TensorT<T> v(shape);
    if (stddev > 0.0)
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<T>(stddev * rng_.normal());
    params_.push_back(
        std::make_shared<ParamTensorT<T>>(name, std::move(v), tie_group));
    return static_cast<int>(params_.size()) - 1;
  }

  static void accumulate(TensorT<T>& dst, TensorT<T>&& g) {
    if (dst.empty()) {
      dst = std::move(g);
      return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  void accumulate_param(int idx, const TensorT<T>& g) {
    auto& grad = params_[idx]->grad;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
  }

  // Appends the single-stream conv stack (depth variant) to the graph and
  // returns the last node. `tie_with` holds the conv node ids of a previous
  // stream when weights are shared.
  struct TrunkDef;
  int add_trunk(int input, const std::string& prefix, Arch depth_variant,
                bool full, const std::vector<int>* tie_with,
                std::vector<int>* conv_nodes_out, const std::string& tie_group);
  int add_head(int flat, const std::string& prefix, int out_dim);

  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<ParamTensorT<T>>> params_;
  std::string arch_id_ = "custom";
  bool tie_streams_ = true;
  int depth_input_ = -1;
  int edge_input_ = -1;
  bool forward_done_ = false;
  Rng rng_{0};
};

using NetworkGraph = NetworkGraphT<float>;

template <typename T>
template <typename U>
NetworkGraphT<U> NetworkGraphT<T>::cast() const {
  NetworkGraphT<U> out;
  out.arch_id_ = arch_id_;
  out.tie_streams_ = tie_streams_;
  out.depth_input_ = depth_input_;
  out.edge_input_ = edge_input_;
  for (const auto& nd : nodes_) {
    typename NetworkGraphT<U>::Node n2;
    n2.kind = nd.kind;
    n2.name = nd.name;
    n2.in0 = nd.in0;
    n2.in1 = nd.in1;
    n2.param_w = nd.param_w;
    n2.param_b = nd.param_b;
    n2.stride = nd.stride;
    n2.pad = nd.pad;
    n2.alpha = static_cast<U>(nd.alpha);
    n2.beta = static_cast<U>(nd.beta);
    n2.static_shape = nd.static_shape;
    out.nodes_.push_back(std::move(n2));
  }
  for (const auto& p : params_)
    out.params_.push_back(std::make_shared<ParamTensorT<U>>(
        p->name, p->value.template cast<U>(), p->tie_group));
  return out;
}

namespace detail {

struct ConvStage {
  const char* name;
  int out_ch;
  int kernel;
  int stride;
  bool pool_after;
};

// Conv stacks per depth variant; pool flags mark P1..P4. The median stack
// drops C5, C10 and C12; the shallow stack further drops C11/P4 and runs C8
// at stride 2.
inline std::vector<ConvStage> conv_stack(Arch a) {
  switch (a) {
    case Arch::SingleShallow:
      return {{"c1", 24, 5, 1, true},  {"c2", 24, 3, 1, false},
              {"c3", 24, 3, 1, false}, {"c4", 24, 3, 1, true},
              {"c6", 32, 3, 1, false}, {"c7", 32, 3, 1, false},
              {"c8", 48, 3, 2, false}, {"c9", 48, 3, 1, true}};
    case Arch::SingleMedian:
      return {{"c1", 24, 5, 1, true},  {"c2", 24, 3, 1, false},
              {"c3", 24, 3, 1, false}, {"c4", 24, 3, 1, true},
              {"c6", 32, 3, 1, false}, {"c7", 32, 3, 1, false},
              {"c8", 48, 3, 1, false}, {"c9", 48, 3, 1, true},
              {"c11", 96, 3, 1, true}};
    default:
      return {{"c1", 24, 5, 1, true},   {"c2", 24, 3, 1, false},
              {"c3", 24, 3, 1, false},  {"c4", 24, 3, 1, false},
              {"c5", 24, 3, 1, true},   {"c6", 32, 3, 1, false},
              {"c7", 32, 3, 1, false},  {"c8", 48, 3, 1, false},
              {"c9", 48, 3, 1, false},  {"c10", 48, 3, 1, true},
              {"c11", 96, 3, 1, false}, {"c12", 128, 3, 1, true}};
  }
}

}  // namespace detail

template <typename T>
int NetworkGraphT<T>::add_trunk(int input, const std::string& prefix,
                                Arch depth_variant, bool full,
                                const std::vector<int>* tie_with,
                                std::vector<int>* conv_nodes_out,
                                const std::string& tie_group) {
  auto stack = detail::conv_stack(depth_variant);
  if (!full) stack.resize(5);  // C1..C5 + P1/P2 (slow-fusion trunk)
  int cur = input;
  std::size_t k = 0;
  for (const auto& st : stack) {
    int tie = tie_with ? (*tie_with)[k] : -1;
    int conv = add_conv(prefix + st.name, cur, st.out_ch, st.kernel, st.stride,
                        tie, tie_group);
    if (conv_nodes_out) conv_nodes_out->push_back(conv);
    cur = add_relu(conv);
    if (st.pool_after) cur = add_pool(cur);
    ++k;
  }
  return cur;
}

template <typename T>
int NetworkGraphT<T>::add_head(int flat, const std::string& prefix, int out_dim) {
  int fc1 = add_fc(prefix + "fc1", flat, 1024);
  int r1 = add_relu(fc1);
  int fc2 = add_fc(prefix + "fc2", r1, 1024);
  int r2 = add_relu(fc2);
  // Regression head starts near zero so early steps are not dominated by
  // the random head output.
  return add_fc(prefix + "fc3", r2, out_dim, -1, "", 0.1);
}

template <typename T>
NetworkGraphT<T> NetworkGraphT<T>::build(Arch arch, const BuildOptions& opt) {
  NetworkGraphT net(opt.seed);
  net.arch_id_ = arch_to_string(arch);
  net.tie_streams_ = opt.tie_streams;
  switch (arch) {
    case Arch::SingleShallow:
    case Arch::SingleMedian:
    case Arch::SingleDeep:
    case Arch::SingleDeepFingerOnly: {
      int in = net.add_input("depth", 1, 96, 96);
      int trunk = net.add_trunk(in, "", arch, true, nullptr, nullptr, "");
      int flat = net.add_flatten(trunk);
      net.add_head(flat, "", arch == Arch::SingleDeepFingerOnly ? 15 : 18);
      break;
    }
    case Arch::FusionEnhance: {
      int d = net.add_input("depth", 1, 96, 96);
      int e = net.add_input("edge", 1, 96, 96);
      int x = net.add_blend(d, e, T(0.8), T(0.2));
      int trunk = net.add_trunk(x, "", Arch::SingleDeep, true, nullptr, nullptr, "");
      net.add_head(net.add_flatten(trunk), "", 18);
      break;
    }
    case Arch::FusionEarly: {
      int d = net.add_input("depth", 1, 96, 96);
      int e = net.add_input("edge", 1, 96, 96);
      int x = net.add_concat(d, e);
      int trunk = net.add_trunk(x, "", Arch::SingleDeep, true, nullptr, nullptr, "");
      net.add_head(net.add_flatten(trunk), "", 18);
      break;
    }
    case Arch::FusionSlow: {
      int d = net.add_input("depth", 1, 96, 96);
      int e = net.add_input("edge", 1, 96, 96);
      std::vector<int> convs;
      std::string group = opt.tie_streams ? "trunk" : "";
      std::string pfx2 = opt.tie_streams ? "" : "edge.";
      int td = net.add_trunk(d, "", Arch::SingleDeep, false, nullptr, &convs, group);
      int te = net.add_trunk(e, pfx2, Arch::SingleDeep, false,
                             opt.tie_streams ? &convs : nullptr, nullptr, group);
      int merged = net.add_concat(td, te);  // 48ch 24x24 into C6
      auto tail = detail::conv_stack(Arch::SingleDeep);
      int cur = merged;
      for (std::size_t i = 5; i < tail.size(); ++i) {
        int conv = net.add_conv(tail[i].name, cur, tail[i].out_ch,
                                tail[i].kernel, tail[i].stride);
        cur = net.add_relu(conv);
        if (tail[i].pool_after) cur = net.add_pool(cur);
      }
      net.add_head(net.add_flatten(cur), "", 18);
      break;
    }
    case Arch::FusionLate: {
      int d = net.add_input("depth", 1, 96, 96);
      int e = net.add_input("edge", 1, 96, 96);
      std::vector<int> convs;
      std::string group = opt.tie_streams ? "trunk" : "";
      std::string pfx2 = opt.tie_streams ? "" : "edge.";
      int td = net.add_trunk(d, "", Arch::SingleDeep, true, nullptr, &convs, group);
      int te = net.add_trunk(e, pfx2, Arch::SingleDeep, true,
                             opt.tie_streams ? &convs : nullptr, nullptr, group);
      int merged = net.add_concat(net.add_flatten(td), net.add_flatten(te));
      net.add_head(merged, "", 18);
      break;
    }
    case Arch::FusionResult: {
      int d = net.add_input("depth", 1, 96, 96);
      int e = net.add_input("edge", 1, 96, 96);
      int td = net.add_trunk(d, "depth.", Arch::SingleDeep, true, nullptr,
                             nullptr, "");
      int hd = net.add_head(net.add_flatten(td), "depth.", 18);
      int te = net.add_trunk(e, "edge.", Arch::SingleDeep, true, nullptr,
                             nullptr, "");
      int he = net.add_head(net.add_flatten(te), "edge.", 18);
      net.add_blend(hd, he, T(0.5), T(0.5));
      break;
    }
  }
  return net;
}

}  // namespace ft
