#include "ft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "ft/ops.hpp"
#include "ft/rng.hpp"

namespace ft {

namespace {

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

TensorD random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  TensorD t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void check_finite(const TensorD& t, const std::string& layer) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i]))
      throw std::runtime_error("grad_check: non-finite value in " + layer +
                               " at index " + std::to_string(i));
}

// phi(tensors) = sum(forward(tensors) * probe); analytic gradients come from
// the backward pass with the probe as upstream gradient.
struct Probe {
  std::function<TensorD(const std::vector<TensorD>&)> forward;
  std::function<std::vector<TensorD>(const std::vector<TensorD>&,
                                     const TensorD&)>
      backward;  // returns per-tensor gradients
};

double run_probe(const Probe& p, std::vector<TensorD> tensors, Rng& rng,
                 double eps, const std::string& layer) {
  TensorD y = p.forward(tensors);
  check_finite(y, layer);
  TensorD probe = random_tensor(y.shape(), rng);
  std::vector<TensorD> analytic = p.backward(tensors, probe);

  auto phi = [&](const std::vector<TensorD>& ts) {
    TensorD out = p.forward(ts);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
    return s;
  };

  double worst = 0;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    check_finite(analytic[t], layer);
    for (std::size_t i = 0; i < tensors[t].size(); ++i) {
      double keep = tensors[t][i];
      tensors[t][i] = keep + eps;
      double hi = phi(tensors);
      tensors[t][i] = keep - eps;
      double lo = phi(tensors);
      tensors[t][i] = keep;
      worst = std::max(worst, rel_err(analytic[t][i], (hi - lo) / (2 * eps)));
    }
  }
  return worst;
}

double check_conv(int f, int stride, Rng& rng, double eps,
                  const std::string& name) {
  const int n = 2, c = 2, h = 7, w = 7, d = 3;
  const int pad = f / 2;
  Probe p;
  p.forward = [=](const std::vector<TensorD>& ts) {
    return conv2d_forward(ts[0], ts[1], ts[2], stride, pad);
  };
  p.backward = [=](const std::vector<TensorD>& ts, const TensorD& g) {
    auto gr = conv2d_backward(g, ts[0], ts[1], stride, pad);
    return std::vector<TensorD>{gr.input, gr.weights, gr.bias};
  };
  return run_probe(p,
                   {random_tensor({n, c, h, w}, rng),
                    random_tensor({d, c, f, f}, rng), random_tensor({d}, rng)},
                   rng, eps, name);
}

double check_maxpool(Rng& rng, double eps) {
  // Values are a scaled permutation, so every 2x2 window has margins far
  // larger than the probe step and argmax routing is stable under +-eps.
  const int n = 1, c = 2, h = 6, w = 6;
  TensorD in({n, c, h, w});
  auto perm = rng.permutation(in.size());
  for (std::size_t i = 0; i < in.size(); ++i)
    in[i] = static_cast<double>(perm[i]) * 0.05;
  Probe p;
  p.forward = [](const std::vector<TensorD>& ts) {
    return maxpool_forward(ts[0]).out;
  };
  p.backward = [](const std::vector<TensorD>& ts, const TensorD& g) {
    auto fwd = maxpool_forward(ts[0]);
    return std::vector<TensorD>{maxpool_backward(g, fwd)};
  };
  return run_probe(p, {std::move(in)}, rng, eps, "maxpool");
}

double check_relu(Rng& rng, double eps) {
  TensorD in({2, 1, 4, 4});
  for (std::size_t i = 0; i < in.size(); ++i) {
    double v = rng.uniform(-1.0, 1.0);
    double margin = 10 * eps;
    in[i] = v >= 0 ? v + margin : v - margin;  // keep probes off the kink
  }
  Probe p;
  p.forward = [](const std::vector<TensorD>& ts) { return relu_forward(ts[0]); };
  p.backward = [](const std::vector<TensorD>& ts, const TensorD& g) {
    return std::vector<TensorD>{relu_backward(g, ts[0])};
  };
  return run_probe(p, {std::move(in)}, rng, eps, "relu");
}

double check_fc(Rng& rng, double eps) {
  const int n = 3, k = 6, m = 4;
  Probe p;
  p.forward = [](const std::vector<TensorD>& ts) {
    return fc_forward(ts[0], ts[1], ts[2]);
  };
  p.backward = [](const std::vector<TensorD>& ts, const TensorD& g) {
    auto gr = fc_backward(g, ts[0], ts[1]);
    return std::vector<TensorD>{gr.input, gr.weights, gr.bias};
  };
  return run_probe(p,
                   {random_tensor({n, k}, rng), random_tensor({m, k}, rng),
                    random_tensor({m}, rng)},
                   rng, eps, "fc");
}

double check_concat(Rng& rng, double eps) {
  Probe p;
  p.forward = [](const std::vector<TensorD>& ts) {
    return concat_channels(ts[0], ts[1]);
  };
  p.backward = [](const std::vector<TensorD>& ts, const TensorD& g) {
    auto [ga, gb] = concat_backward(g, ts[0].dim(1));
    return std::vector<TensorD>{ga, gb};
  };
  return run_probe(p,
                   {random_tensor({2, 2, 3, 3}, rng),
                    random_tensor({2, 3, 3, 3}, rng)},
                   rng, eps, "concat");
}

double check_blend(Rng& rng, double eps) {
  Probe p;
  p.forward = [](const std::vector<TensorD>& ts) {
    return blend(ts[0], ts[1], 0.8, 0.2);
  };
  p.backward = [](const std::vector<TensorD>&, const TensorD& g) {
    TensorD ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = 0.8 * g[i];
      gb[i] = 0.2 * g[i];
    }
    return std::vector<TensorD>{ga, gb};
  };
  return run_probe(p,
                   {random_tensor({1, 1, 4, 4}, rng),
                    random_tensor({1, 1, 4, 4}, rng)},
                   rng, eps, "blend");
}

double check_loss(Rng& rng, double eps) {
  TensorD pred = random_tensor({3, 6}, rng);
  TensorD target = random_tensor({3, 6}, rng);
  auto analytic = euclidean_loss(pred, target).grad;
  check_finite(analytic, "euclidean-loss");
  double worst = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double keep = pred[i];
    pred[i] = keep + eps;
    double hi = euclidean_loss(pred, target).loss;
    pred[i] = keep - eps;
    double lo = euclidean_loss(pred, target).loss;
    pred[i] = keep;
    worst = std::max(worst, rel_err(analytic[i], (hi - lo) / (2 * eps)));
  }
  return worst;
}

}  // namespace

const std::vector<std::string>& grad_check_layer_names() {
  static const std::vector<std::string> names = {
      "conv5x5-s1", "conv5x5-s2", "conv3x3-s1", "conv3x3-s2", "maxpool",
      "relu",       "fc",         "concat",     "blend",      "euclidean-loss"};
  return names;
}

double grad_check_layer(const std::string& layer, std::uint64_t seed,
                        double eps) {
  Rng rng(seed);
  if (layer == "conv5x5-s1") return check_conv(5, 1, rng, eps, layer);
  if (layer == "conv5x5-s2") return check_conv(5, 2, rng, eps, layer);
  if (layer == "conv3x3-s1") return check_conv(3, 1, rng, eps, layer);
  if (layer == "conv3x3-s2") return check_conv(3, 2, rng, eps, layer);
  if (layer == "maxpool") return check_maxpool(rng, eps);
  if (layer == "relu") return check_relu(rng, eps);
  if (layer == "fc") return check_fc(rng, eps);
  if (layer == "concat") return check_concat(rng, eps);
  if (layer == "blend") return check_blend(rng, eps);
  if (layer == "euclidean-loss") return check_loss(rng, eps);
  std::string known;
  for (const auto& n : grad_check_layer_names())
    known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument("grad_check: unknown layer '" + layer +
                              "' (known: " + known + ")");
}

std::vector<GradCheckResult> grad_check_all(std::uint64_t seed, double eps) {
  std::vector<GradCheckResult> out;
  for (const auto& name : grad_check_layer_names())
    out.push_back({name, grad_check_layer(name, seed, eps)});
  return out;
}

NetworkGraphT<double> build_reduced_single_stream(std::uint64_t seed) {
  NetworkGraphT<double> net(seed);
  net.set_arch_id("reduced-single-stream");
  int in = net.add_input("depth", 1, 24, 24);
  int c1 = net.add_conv("c1", in, 4, 5, 1);
  int p1 = net.add_pool(net.add_relu(c1));
  int c2 = net.add_conv("c2", p1, 6, 3, 1);
  int p2 = net.add_pool(net.add_relu(c2));
  int flat = net.add_flatten(p2);
  int fc1 = net.add_fc("fc1", flat, 32);
  net.add_fc("fc2", net.add_relu(fc1), 18);
  return net;
}

double grad_check_network(std::uint64_t seed, int n_probes, double eps) {
  Rng rng(seed);
  auto net = build_reduced_single_stream(seed + 1);
  TensorD input = random_tensor({2, 1, 24, 24}, rng);
  TensorD target = random_tensor({2, 18}, rng);

  auto loss_of = [&]() {
    return euclidean_loss(net.forward(input), target).loss;
  };

  // Analytic gradients for all parameters in one pass.
  net.zero_grads();
  auto y = net.forward(input);
  net.backward(euclidean_loss(y, target).grad);

  auto& params = net.parameters();
  double worst = 0;
  for (int k = 0; k < n_probes; ++k) {
    auto& p = *params[static_cast<std::size_t>(rng.uniform_int(
        static_cast<int>(params.size())))];
    std::size_t i = static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(p.value.size())));
    double analytic = p.grad[i];
    double keep = p.value[i];
    p.value[i] = keep + eps;
    double hi = loss_of();
    p.value[i] = keep - eps;
    double lo = loss_of();
    p.value[i] = keep;
    worst = std::max(worst, rel_err(analytic, (hi - lo) / (2 * eps)));
  }
  return worst;
}

}  // namespace ft
