#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ft/tensor.hpp"

namespace ft {

// A trainable tensor with its gradient accumulator and momentum buffer.
// Weight tying is structural: every graph position of a tie group holds a
// shared_ptr to the same ParamTensor, so gradients from all uses accumulate
// into one buffer and tied values stay bitwise identical by construction.
template <typename T>
struct ParamTensorT {
  std::string name;
  std::string tie_group;  // empty when untied
  TensorT<T> value;
  TensorT<T> grad;
  TensorT<T> momentum_buf;

  explicit ParamTensorT(std::string n, TensorT<T> v, std::string group = "")
      : name(std::move(n)),
        tie_group(std::move(group)),
        value(std::move(v)),
        grad(value.shape()),
        momentum_buf(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

using ParamTensor = ParamTensorT<float>;

// v <- momentum*v + grad ; value <- value - lr*v ; grad <- 0.
template <typename T>
void sgd_step(const std::vector<std::shared_ptr<ParamTensorT<T>>>& params,
              T lr, T momentum) {
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->momentum_buf[i] = momentum * p->momentum_buf[i] + p->grad[i];
      p->value[i] -= lr * p->momentum_buf[i];
    }
    p->zero_grad();
  }
}

}  // namespace ft
