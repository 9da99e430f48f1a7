#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ghostlayer/error.hpp"

namespace ghostlayer {

// Extents of a rank-4 tensor in (batch, channels, height, width) order.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t count() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t per_batch() const { return c * h * w; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
    return os.str();
  }
};

// Dense NCHW tensor, row-major with the batch index outermost. The library
// runs on float; double instantiations exist for gradient checking.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.count(), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count()) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) { return data_[index(n, c, y, x)]; }
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[index(n, c, y, x)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  BasicTensor& operator+=(const BasicTensor& other) {
    require_same_shape(other, "tensor +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  void require_same_shape(const BasicTensor& other, const char* what) const {
    if (other.shape_ != shape_) {
      throw ConfigError(std::string(what) + ": shape " + shape_.str() + " vs " + other.shape_.str());
    }
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  std::vector<To> data(t.data().begin(), t.data().end());
  return BasicTensor<To>(t.shape(), std::move(data));
}

// Frozen convolution parameters. Weights are laid out (out, in, kh, kw).
template <typename T>
struct BasicConvKernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  BasicConvKernel() = default;
  BasicConvKernel(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw)
      : out_channels(out), in_channels(in), kernel_h(kh), kernel_w(kw),
        weights(out * in * kh * kw, T(0)), bias(out, T(0)) {}

  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }

  T& weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return weights[((o * in_channels + i) * kernel_h + ky) * kernel_w + kx];
  }
  T weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return weights[((o * in_channels + i) * kernel_h + ky) * kernel_w + kx];
  }

  void validate() const {
    if (out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0) {
      throw ConfigError("convolution kernel extents must be positive");
    }
    if (weights.size() != out_channels * patch_size()) {
      throw ConfigError("convolution kernel has " + std::to_string(weights.size()) +
                        " weights, expected " + std::to_string(out_channels * patch_size()));
    }
    if (bias.size() != out_channels) {
      throw ConfigError("convolution kernel has " + std::to_string(bias.size()) +
                        " biases, expected " + std::to_string(out_channels));
    }
  }

  friend bool operator==(const BasicConvKernel&, const BasicConvKernel&) = default;
};

using ConvKernel = BasicConvKernel<float>;

template <typename To, typename From>
BasicConvKernel<To> kernel_cast(const BasicConvKernel<From>& k) {
  BasicConvKernel<To> out;
  out.out_channels = k.out_channels;
  out.in_channels = k.in_channels;
  out.kernel_h = k.kernel_h;
  out.kernel_w = k.kernel_w;
  out.weights.assign(k.weights.begin(), k.weights.end());
  out.bias.assign(k.bias.begin(), k.bias.end());
  return out;
}

}  // namespace ghostlayer
