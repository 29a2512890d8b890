#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ft/gemm.hpp"
#include "ft/tensor.hpp"

namespace ft {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Scratch buffers for the im2col matrices; every element is overwritten
// before use, so stale contents are harmless.
template <typename T>
std::vector<T>& workspace(int which, std::size_t n) {
  static thread_local std::vector<T> ws[2];
  if (ws[which].size() < n) ws[which].resize(n);
  return ws[which];
}

// Unpacks [N,C,H,W] patches into a [C*f*f, Ho*Wo] column matrix (one batch
// item) for the GEMM-based convolution.
template <typename T>
void im2col(const T* img, int channels, int height, int width, int f,
            int stride, int pad, int out_h, int out_w, T* col) {
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < f; ++kh) {
      for (int kw = 0; kw < f; ++kw) {
        T* row = col + (static_cast<std::size_t>(c) * f * f + kh * f + kw) *
                           (static_cast<std::size_t>(out_h) * out_w);
        for (int oh = 0; oh < out_h; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= height) {
            for (int ow = 0; ow < out_w; ++ow) row[oh * out_w + ow] = T(0);
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(c) * height + ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            int iw = ow * stride - pad + kw;
            row[oh * out_w + ow] = (iw >= 0 && iw < width) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int height, int width, int f,
            int stride, int pad, int out_h, int out_w, T* img) {
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < f; ++kh) {
      for (int kw = 0; kw < f; ++kw) {
        const T* row = col + (static_cast<std::size_t>(c) * f * f + kh * f + kw) *
                                 (static_cast<std::size_t>(out_h) * out_w);
        for (int oh = 0; oh < out_h; ++oh) {
          int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= height) continue;
          T* dst = img + (static_cast<std::size_t>(c) * height + ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < width) dst[iw] += row[oh * out_w + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline int conv_out_extent(int in, int f, int stride, int pad) {
  return (in + 2 * pad - f) / stride + 1;
}

// Cross-correlation (no kernel flip), zero padding.
// input [N,C,H,W], weights [D,C,f,f], bias [D] -> [N,D,H',W'].
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& bias, int stride, int pad) {
  using detail::require;
  require(input.rank() == 4, "conv2d: input rank must be 4, got rank " +
                                 std::to_string(input.rank()));
  require(weights.rank() == 4, "conv2d: weights rank must be 4");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: pad must be >= 0");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int d = weights.dim(0), f = weights.dim(2);
  require(weights.dim(2) == weights.dim(3), "conv2d: kernel must be square");
  require(f % 2 == 1, "conv2d: kernel size must be odd, got " + std::to_string(f));
  require(weights.dim(1) == c,
          "conv2d: weights channel dim " + std::to_string(weights.dim(1)) +
              " does not match input channels " + std::to_string(c));
  require(bias.rank() == 1 && bias.dim(0) == d,
          "conv2d: bias length must equal filter count " + std::to_string(d));
  require(h + 2 * pad >= f && w + 2 * pad >= f,
          "conv2d: padded input " + std::to_string(h + 2 * pad) +
              " smaller than kernel " + std::to_string(f));

  const int oh = conv_out_extent(h, f, stride, pad);
  const int ow = conv_out_extent(w, f, stride, pad);
  const int k = c * f * f;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;

  TensorT<T> out({n, d, oh, ow});
  std::vector<T>& col = detail::workspace<T>(0, static_cast<std::size_t>(k) * plane);
  for (int i = 0; i < n; ++i) {
    detail::im2col(input.data() + static_cast<std::size_t>(i) * c * h * w, c, h,
                   w, f, stride, pad, oh, ow, col.data());
    T* dst = out.data() + static_cast<std::size_t>(i) * d * plane;
    for (int j = 0; j < d; ++j)
      std::fill(dst + j * plane, dst + (j + 1) * plane, bias[j]);
    gemm(false, false, d, static_cast<int>(plane), k, T(1), weights.data(), k,
         col.data(), static_cast<int>(plane), T(1), dst, static_cast<int>(plane));
  }
  return out;
}

template <typename T>
struct Conv2dGrads {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& grad_out,
                               const TensorT<T>& input,
                               const TensorT<T>& weights, int stride, int pad) {
  using detail::require;
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int d = weights.dim(0), f = weights.dim(2);
  const int oh = conv_out_extent(h, f, stride, pad);
  const int ow = conv_out_extent(w, f, stride, pad);
  require(grad_out.rank() == 4 && grad_out.dim(0) == n && grad_out.dim(1) == d &&
              grad_out.dim(2) == oh && grad_out.dim(3) == ow,
          "conv2d_backward: grad_out shape " +
              TensorT<T>::shape_str(grad_out.shape()) +
              " inconsistent with forward output " +
              TensorT<T>::shape_str({n, d, oh, ow}));

  const int k = c * f * f;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;

  Conv2dGrads<T> g{TensorT<T>(input.shape()), TensorT<T>(weights.shape()),
                   TensorT<T>({d})};
  std::vector<T>& col = detail::workspace<T>(0, static_cast<std::size_t>(k) * plane);
  std::vector<T>& col_grad = detail::workspace<T>(1, static_cast<std::size_t>(k) * plane);
  for (int i = 0; i < n; ++i) {
    const T* go = grad_out.data() + static_cast<std::size_t>(i) * d * plane;
    detail::im2col(input.data() + static_cast<std::size_t>(i) * c * h * w, c, h,
                   w, f, stride, pad, oh, ow, col.data());
    // dW += dY * col^T
    gemm(false, true, d, k, static_cast<int>(plane), T(1), go,
         static_cast<int>(plane), col.data(), static_cast<int>(plane), T(1),
         g.weights.data(), k);
    // dcol = W^T * dY
    gemm(true, false, k, static_cast<int>(plane), d, T(1), weights.data(), k,
         go, static_cast<int>(plane), T(0), col_grad.data(),
         static_cast<int>(plane));
    detail::col2im(col_grad.data(), c, h, w, f, stride, pad, oh, ow,
                   g.input.data() + static_cast<std::size_t>(i) * c * h * w);
    for (int j = 0; j < d; ++j) {
      T s = T(0);
      const T* p = go + j * plane;
      for (std::size_t q = 0; q < plane; ++q) s += p[q];
      g.bias[static_cast<std::size_t>(j)] += s;
    }
  }
  return g;
}

// Non-overlapping 2x2 max-pooling; odd trailing row/column dropped.
// Ties break toward the lowest flat input index.
template <typename T>
struct MaxPoolResult {
  TensorT<T> out;
  std::vector<std::size_t> argmax;  // flat indices into the pooled input
  std::vector<int> in_shape;
};

template <typename T>
MaxPoolResult<T> maxpool_forward(const TensorT<T>& input) {
  using detail::require;
  require(input.rank() == 4, "maxpool: input rank must be 4");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  require(h >= 2 && w >= 2, "maxpool: spatial extent " + std::to_string(h) + "x" +
                                std::to_string(w) + " smaller than 2x2 window");
  const int oh = h / 2, ow = w / 2;
  MaxPoolResult<T> r{TensorT<T>({n, c, oh, ow}), {}, input.shape()};
  r.argmax.resize(r.out.size());
  std::size_t o = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const std::size_t base = (static_cast<std::size_t>(i) * c + j) *
                               static_cast<std::size_t>(h) * w;
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          std::size_t i00 = base + static_cast<std::size_t>(2 * y) * w + 2 * x;
          std::size_t best = i00;
          T bv = input[i00];
          const std::size_t cand[3] = {i00 + 1, i00 + w, i00 + w + 1};
          for (std::size_t q : cand)
            if (input[q] > bv) {
              bv = input[q];
              best = q;
            }
          r.out[o] = bv;
          r.argmax[o] = best;
          ++o;
        }
    }
  return r;
}

template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& grad_out,
                            const MaxPoolResult<T>& fwd) {
  using detail::require;
  require(grad_out.shape() == fwd.out.shape(),
          "maxpool_backward: grad_out shape " +
              TensorT<T>::shape_str(grad_out.shape()) +
              " does not match pooled output " +
              TensorT<T>::shape_str(fwd.out.shape()));
  require(grad_out.size() == fwd.argmax.size(),
          "maxpool_backward: stale argmax map");
  TensorT<T> grad_in(fwd.in_shape);
  for (std::size_t i = 0; i < fwd.argmax.size(); ++i) {
    require(fwd.argmax[i] < grad_in.size(),
            "maxpool_backward: argmax index out of range (stale map)");
    grad_in[fwd.argmax[i]] += grad_out[i];
  }
  return grad_in;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

// Subgradient at 0 is 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& input) {
  detail::require(grad_out.same_shape(input),
                  "relu_backward: grad/input shape mismatch");
  TensorT<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

// y = x * W^T + b.  input [N,K], weights [M,K], bias [M].
template <typename T>
TensorT<T> fc_forward(const TensorT<T>& input, const TensorT<T>& weights,
                      const TensorT<T>& bias) {
  using detail::require;
  require(input.rank() == 2, "fc: input rank must be 2 (flatten first)");
  require(weights.rank() == 2, "fc: weights rank must be 2");
  const int n = input.dim(0), k = input.dim(1), m = weights.dim(0);
  require(weights.dim(1) == k, "fc: weights inner dim " +
                                   std::to_string(weights.dim(1)) +
                                   " does not match input width " +
                                   std::to_string(k));
  require(bias.rank() == 1 && bias.dim(0) == m, "fc: bias length mismatch");
  TensorT<T> out({n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) = bias[static_cast<std::size_t>(j)];
  gemm(false, true, n, m, k, T(1), input.data(), k, weights.data(), k, T(1),
       out.data(), m);
  return out;
}

template <typename T>
struct FcGrads {
  TensorT<T> input;
  TensorT<T> weights;
  TensorT<T> bias;
};

template <typename T>
FcGrads<T> fc_backward(const TensorT<T>& grad_out, const TensorT<T>& input,
                       const TensorT<T>& weights) {
  using detail::require;
  const int n = input.dim(0), k = input.dim(1), m = weights.dim(0);
  require(grad_out.rank() == 2 && grad_out.dim(0) == n && grad_out.dim(1) == m,
          "fc_backward: grad_out shape mismatch");
  FcGrads<T> g{TensorT<T>(input.shape()), TensorT<T>(weights.shape()),
               TensorT<T>({m})};
  gemm(false, false, n, k, m, T(1), grad_out.data(), m, weights.data(), k, T(0),
       g.input.data(), k);
  gemm(true, false, m, k, n, T(1), grad_out.data(), m, input.data(), k, T(0),
       g.weights.data(), k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      g.bias[static_cast<std::size_t>(j)] += grad_out.at(i, j);
  return g;
}

// [N,C,H,W] -> [N, C*H*W] in channel-height-width order.
template <typename T>
TensorT<T> flatten(const TensorT<T>& x) {
  detail::require(x.rank() == 4, "flatten: input rank must be 4");
  return x.reshaped({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
}

// Concatenation along the feature axis: channels for rank-4 tensors,
// columns for rank-2 (flattened) tensors.
template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  using detail::require;
  if (b.empty()) return a;
  if (a.empty()) return b;
  require(a.rank() == b.rank() && (a.rank() == 4 || a.rank() == 2),
          "concat: inputs must both be rank 4 or rank 2");
  require(a.dim(0) == b.dim(0), "concat: batch dims differ: " +
                                    std::to_string(a.dim(0)) + " vs " +
                                    std::to_string(b.dim(0)));
  if (a.rank() == 4) {
    require(a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat: spatial dims differ: " + TensorT<T>::shape_str(a.shape()) +
                " vs " + TensorT<T>::shape_str(b.shape()));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
    TensorT<T> out({n, ca + cb, a.dim(2), a.dim(3)});
    for (int i = 0; i < n; ++i) {
      std::copy(a.data() + i * ca * plane, a.data() + (i + 1) * ca * plane,
                out.data() + static_cast<std::size_t>(i) * (ca + cb) * plane);
      std::copy(b.data() + i * cb * plane, b.data() + (i + 1) * cb * plane,
                out.data() + static_cast<std::size_t>(i) * (ca + cb) * plane +
                    ca * plane);
    }
    return out;
  }
  const int n = a.dim(0), ka = a.dim(1), kb = b.dim(1);
  TensorT<T> out({n, ka + kb});
  for (int i = 0; i < n; ++i) {
    std::copy(a.data() + static_cast<std::size_t>(i) * ka,
              a.data() + static_cast<std::size_t>(i + 1) * ka,
              out.data() + static_cast<std::size_t>(i) * (ka + kb));
    std::copy(b.data() + static_cast<std::size_t>(i) * kb,
              b.data() + static_cast<std::size_t>(i + 1) * kb,
              out.data() + static_cast<std::size_t>(i) * (ka + kb) + ka);
  }
  return out;
}

// Splits the concat gradient back at the channel (or column) boundary.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_backward(const TensorT<T>& grad_out,
                                                  int a_features) {
  using detail::require;
  require(grad_out.rank() == 4 || grad_out.rank() == 2,
          "concat_backward: rank must be 2 or 4");
  const int total = grad_out.dim(1);
  require(a_features > 0 && a_features < total,
          "concat_backward: split point out of range");
  const int n = grad_out.dim(0), cb = total - a_features;
  if (grad_out.rank() == 4) {
    const std::size_t plane =
        static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
    TensorT<T> ga({n, a_features, grad_out.dim(2), grad_out.dim(3)});
    TensorT<T> gb({n, cb, grad_out.dim(2), grad_out.dim(3)});
    for (int i = 0; i < n; ++i) {
      const T* src =
          grad_out.data() + static_cast<std::size_t>(i) * total * plane;
      std::copy(src, src + a_features * plane,
                ga.data() + static_cast<std::size_t>(i) * a_features * plane);
      std::copy(src + a_features * plane, src + total * plane,
                gb.data() + static_cast<std::size_t>(i) * cb * plane);
    }
    return {std::move(ga), std::move(gb)};
  }
  TensorT<T> ga({n, a_features});
  TensorT<T> gb({n, cb});
  for (int i = 0; i < n; ++i) {
    const T* src = grad_out.data() + static_cast<std::size_t>(i) * total;
    std::copy(src, src + a_features,
              ga.data() + static_cast<std::size_t>(i) * a_features);
    std::copy(src + a_features, src + total,
              gb.data() + static_cast<std::size_t>(i) * cb);
  }
  return {std::move(ga), std::move(gb)};
}

// Elementwise alpha*a + beta*b.
template <typename T>
TensorT<T> blend(const TensorT<T>& a, const TensorT<T>& b, T alpha, T beta) {
  detail::require(a.same_shape(b),
                  "blend: shape mismatch " + TensorT<T>::shape_str(a.shape()) +
                      " vs " + TensorT<T>::shape_str(b.shape()));
  TensorT<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + beta * b[i];
  return out;
}

template <typename T>
struct LossResult {
  T loss;
  TensorT<T> grad;
};

// loss = 1/(2N) * sum ||pred_i - target_i||^2 ; grad = (pred - target)/N.
template <typename T>
LossResult<T> euclidean_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  detail::require(pred.same_shape(target),
                  "euclidean_loss: shape mismatch " +
                      TensorT<T>::shape_str(pred.shape()) + " vs " +
                      TensorT<T>::shape_str(target.shape()));
  detail::require(pred.rank() == 2, "euclidean_loss: inputs must be [N,K]");
  const T n = static_cast<T>(pred.dim(0));
  LossResult<T> r{T(0), TensorT<T>(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    T d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = d / n;
  }
  r.loss /= T(2) * n;
  return r;
}

}  // namespace ft
