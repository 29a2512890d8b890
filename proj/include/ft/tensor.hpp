#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ft {

// Dense n-dimensional row-major tensor. Network code uses the float
// instantiation; gradient verification runs the same ops in double.
template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_volume(shape_), T(0));
  }

  TensorT(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_volume(shape_) != data_.size())
      throw std::invalid_argument("tensor: data length does not match shape volume");
  }

  static TensorT full(std::vector<int> shape, T v) {
    TensorT t(std::move(shape));
    t.fill(v);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW accessor.
  T& at(int n, int c, int h, int w) {
    return data_[flat(n, c, h, w)];
  }
  const T& at(int n, int c, int h, int w) const {
    return data_[flat(n, c, h, w)];
  }
  // Matrix accessor.
  T& at(int r, int c) { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }
  const T& at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * dim(1) + c];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Reinterprets the flat buffer under a new shape of equal volume.
  TensorT reshaped(std::vector<int> shape) const {
    if (checked_volume(shape) != data_.size())
      throw std::invalid_argument("reshape: volume mismatch");
    return TensorT(std::move(shape), data_);
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> d(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(d));
  }

  bool operator==(const TensorT& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }

 private:
  static std::size_t checked_volume(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
      n *= static_cast<std::size_t>(d);
    }
    return shape.empty() ? 0 : n;
  }

  std::size_t flat(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace ft
