#pragma once

// Forward and input-gradient kernels for the frozen feature extractor:
// 2-D convolution (im2col + GEMM), ReLU and 2x2 pooling. Weight gradients
// are intentionally absent; the network is never trained here.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ghostlayer/tensor.hpp"

namespace ghostlayer {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedRowMap = Eigen::Map<RowMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedRowMap = Eigen::Map<const RowMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Upper bound on the im2col scratch buffer, in elements.
inline constexpr std::size_t kColumnBudget = std::size_t{8} << 20;

struct ConvGeometry {
  std::size_t in_h, in_w, out_h, out_w, pad, stride;
};

template <typename T>
ConvGeometry conv_geometry(const Shape& in, const BasicConvKernel<T>& k, std::size_t pad,
                                  std::size_t stride) {
  if (stride == 0) throw ConfigError("convolution stride must be >= 1");
  if (in.c != k.in_channels) {
    throw ConfigError("conv2d: input shape " + in.str() + " has " + std::to_string(in.c) +
                      " channels but kernel shape (" + std::to_string(k.out_channels) + ", " +
                      std::to_string(k.in_channels) + ", " + std::to_string(k.kernel_h) + ", " +
                      std::to_string(k.kernel_w) + ") expects " + std::to_string(k.in_channels));
  }
  if (in.h + 2 * pad < k.kernel_h || in.w + 2 * pad < k.kernel_w) {
    throw ConfigError("conv2d: padded input " + in.str() + " (pad " + std::to_string(pad) +
                      ") is smaller than the " + std::to_string(k.kernel_h) + "x" +
                      std::to_string(k.kernel_w) + " kernel");
  }
  return {in.h,
          in.w,
          (in.h + 2 * pad - k.kernel_h) / stride + 1,
          (in.w + 2 * pad - k.kernel_w) / stride + 1,
          pad,
          stride};
}

inline std::size_t rows_per_tile(std::size_t patch, std::size_t out_w, std::size_t out_h) {
  const std::size_t per_row = std::max<std::size_t>(1, patch * out_w);
  return std::clamp<std::size_t>(kColumnBudget / per_row, 1, out_h);
}

// Valid output-column range [lo, hi) for kernel column kx, i.e. the columns
// whose sampled input column lies inside the unpadded image.
inline void valid_columns(const ConvGeometry& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  // ix = ox*stride + kx - pad must satisfy 0 <= ix < in_w.
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad);
  const auto w = static_cast<std::ptrdiff_t>(g.in_w);
  std::ptrdiff_t first = off >= 0 ? 0 : (-off + s - 1) / s;
  std::ptrdiff_t last = (w - 1 - off) < 0 ? -1 : (w - 1 - off) / s;  // inclusive
  first = std::min<std::ptrdiff_t>(first, static_cast<std::ptrdiff_t>(g.out_w));
  last = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(g.out_w) - 1);
  lo = static_cast<std::size_t>(first);
  hi = last < first ? lo : static_cast<std::size_t>(last + 1);
}

// Fills `cols` (patch x (rows*out_w), row-major) for output rows [y0, y0+rows).
template <typename T>
void im2col_tile(const T* image, std::size_t channels, std::size_t kh, std::size_t kw,
                        const ConvGeometry& g, std::size_t y0, std::size_t rows, T* cols) {
  const std::size_t width = rows * g.out_w;
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++k) {
        T* dst = cols + k * width;
        std::size_t lo, hi;
        valid_columns(g, kx, lo, hi);
        for (std::size_t r = 0; r < rows; ++r) {
          T* out = dst + r * g.out_w;
          const auto iy = static_cast<std::ptrdiff_t>((y0 + r) * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) || lo >= hi) {
            std::fill(out, out + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          std::fill(out, out + lo, T(0));
          if (g.stride == 1) {
            std::memcpy(out + lo, src + lo + kx - g.pad, (hi - lo) * sizeof(T));
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) out[ox] = src[ox * g.stride + kx - g.pad];
          }
          std::fill(out + hi, out + g.out_w, T(0));
        }
      }
    }
  }
}

// Scatter-adds a column tile back into an image-shaped gradient.
template <typename T>
void col2im_tile(const T* cols, std::size_t channels, std::size_t kh, std::size_t kw,
                        const ConvGeometry& g, std::size_t y0, std::size_t rows, T* image) {
  const std::size_t width = rows * g.out_w;
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx, ++k) {
        const T* src = cols + k * width;
        std::size_t lo, hi;
        valid_columns(g, kx, lo, hi);
        for (std::size_t r = 0; r < rows; ++r) {
          const auto iy = static_cast<std::ptrdiff_t>((y0 + r) * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* in = src + r * g.out_w;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride + kx - g.pad] += in[ox];
        }
      }
    }
  }
}

}  // namespace detail

// Zero-padded cross-correlation plus bias.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicConvKernel<T>& kernel,
                              std::size_t pad, std::size_t stride) {
  kernel.validate();
  const Shape& in = input.shape();
  const auto g = detail::conv_geometry(in, kernel, pad, stride);
  BasicTensor<T> out(Shape{in.n, kernel.out_channels, g.out_h, g.out_w});

  const std::size_t patch = kernel.patch_size();
  const std::size_t out_plane = g.out_h * g.out_w;
  const Eigen::Map<const detail::RowMatrix<T>> w(kernel.weights.data(),
                                              static_cast<Eigen::Index>(kernel.out_channels),
                                              static_cast<Eigen::Index>(patch));
  const std::size_t tile_rows = detail::rows_per_tile(patch, g.out_w, g.out_h);
  std::vector<T> cols(patch * tile_rows * g.out_w);

  for (std::size_t n = 0; n < in.n; ++n) {
    const T* image = input.raw() + n * in.per_batch();
    T* dst = out.raw() + n * kernel.out_channels * out_plane;
    for (std::size_t y0 = 0; y0 < g.out_h; y0 += tile_rows) {
      const std::size_t rows = std::min(tile_rows, g.out_h - y0);
      const std::size_t width = rows * g.out_w;
      detail::im2col_tile(image, in.c, kernel.kernel_h, kernel.kernel_w, g, y0, rows, cols.data());
      const Eigen::Map<const detail::RowMatrix<T>> col(cols.data(), static_cast<Eigen::Index>(patch),
                                                    static_cast<Eigen::Index>(width));
      detail::StridedRowMap<T> result(dst + y0 * g.out_w,
                                   static_cast<Eigen::Index>(kernel.out_channels),
                                   static_cast<Eigen::Index>(width),
                                   Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      result.noalias() = w * col;
      for (std::size_t o = 0; o < kernel.out_channels; ++o) {
        result.row(static_cast<Eigen::Index>(o)).array() += kernel.bias[o];
      }
    }
  }
  return out;
}

// Gradient of sum(grad_out * conv2d_forward(x)) with respect to x.
template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_out, const BasicConvKernel<T>& kernel,
                                     const Shape& input_shape, std::size_t pad, std::size_t stride) {
  kernel.validate();
  const auto g = detail::conv_geometry(input_shape, kernel, pad, stride);
  const Shape expected{input_shape.n, kernel.out_channels, g.out_h, g.out_w};
  if (grad_out.shape() != expected) {
    throw ConfigError("conv2d_backward_input: gradient shape " + grad_out.shape().str() +
                      " does not match forward output shape " + expected.str());
  }
  BasicTensor<T> grad_in(input_shape);

  const std::size_t patch = kernel.patch_size();
  const std::size_t out_plane = g.out_h * g.out_w;
  const Eigen::Map<const detail::RowMatrix<T>> w(kernel.weights.data(),
                                              static_cast<Eigen::Index>(kernel.out_channels),
                                              static_cast<Eigen::Index>(patch));
  const std::size_t tile_rows = detail::rows_per_tile(patch, g.out_w, g.out_h);
  std::vector<T> cols(patch * tile_rows * g.out_w);

  for (std::size_t n = 0; n < input_shape.n; ++n) {
    const T* upstream = grad_out.raw() + n * kernel.out_channels * out_plane;
    T* image = grad_in.raw() + n * input_shape.per_batch();
    for (std::size_t y0 = 0; y0 < g.out_h; y0 += tile_rows) {
      const std::size_t rows = std::min(tile_rows, g.out_h - y0);
      const std::size_t width = rows * g.out_w;
      const detail::ConstStridedRowMap<T> up(upstream + y0 * g.out_w,
                                          static_cast<Eigen::Index>(kernel.out_channels),
                                          static_cast<Eigen::Index>(width),
                                          Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      Eigen::Map<detail::RowMatrix<T>> col(cols.data(), static_cast<Eigen::Index>(patch),
                                        static_cast<Eigen::Index>(width));
      col.noalias() = w.transpose() * up;
      detail::col2im_tile(cols.data(), input_shape.c, kernel.kernel_h, kernel.kernel_w, g, y0, rows,
                          image);
    }
  }
  return grad_in;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (T& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

// `saved` may be either the ReLU input or its output: both are positive at
// exactly the same positions.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& saved) {
  grad_out.require_same_shape(saved, "relu_backward");
  BasicTensor<T> grad_in(grad_out.shape());
  const auto g = grad_out.data();
  const auto s = saved.data();
  auto d = grad_in.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = s[i] > T(0) ? g[i] : T(0);
  return grad_in;
}

enum class PoolMode { kMax, kAverage };

// What to do with an odd spatial extent: reject it, or drop the trailing
// row/column the way VALID pooling does.
enum class OddExtent { kReject, kFloor };

struct PoolContext {
  PoolMode mode = PoolMode::kAverage;
  Shape input_shape{};
  Shape output_shape{};
  std::vector<std::uint32_t> argmax;  // max mode: flat input index per output element
};

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  PoolContext context;
};

// 2x2 window, stride 2.
template <typename T>
PoolResult<T> pool2d_forward(const BasicTensor<T>& input, PoolMode mode,
                             OddExtent odd = OddExtent::kReject) {
  const Shape& in = input.shape();
  if (odd == OddExtent::kReject && (in.h % 2 != 0 || in.w % 2 != 0)) {
    throw ConfigError("pool2d: spatial extent " + std::to_string(in.h) + "x" +
                      std::to_string(in.w) + " of " + in.str() + " is not divisible by 2");
  }
  if (in.h < 2 || in.w < 2) {
    throw ConfigError("pool2d: input " + in.str() + " is smaller than the 2x2 window");
  }
  const Shape out_shape{in.n, in.c, in.h / 2, in.w / 2};
  PoolResult<T> r{BasicTensor<T>(out_shape), PoolContext{mode, in, out_shape, {}}};
  if (mode == PoolMode::kMax) r.context.argmax.resize(out_shape.count());

  std::size_t o = 0;
  for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
    const std::size_t base = nc * in.plane();
    for (std::size_t y = 0; y < out_shape.h; ++y) {
      for (std::size_t x = 0; x < out_shape.w; ++x, ++o) {
        const std::size_t i00 = base + (2 * y) * in.w + 2 * x;
        const std::size_t idx[4] = {i00, i00 + 1, i00 + in.w, i00 + in.w + 1};
        if (mode == PoolMode::kMax) {
          std::size_t best = idx[0];
          for (std::size_t k = 1; k < 4; ++k) {
            if (input[idx[k]] > input[best]) best = idx[k];
          }
          r.output[o] = input[best];
          r.context.argmax[o] = static_cast<std::uint32_t>(best);
        } else {
          r.output[o] = T(0.25) * ((input[idx[0]] + input[idx[1]]) + (input[idx[2]] + input[idx[3]]));
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> pool2d_backward(const BasicTensor<T>& grad_out, const PoolContext& ctx) {
  if (grad_out.shape() != ctx.output_shape) {
    throw ConfigError("pool2d_backward: gradient shape " + grad_out.shape().str() +
                      " does not match pooled shape " + ctx.output_shape.str());
  }
  const Shape& in = ctx.input_shape;
  BasicTensor<T> grad_in(in);
  if (ctx.mode == PoolMode::kMax) {
    for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[ctx.argmax[o]] += grad_out[o];
    return grad_in;
  }
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
    const std::size_t base = nc * in.plane();
    for (std::size_t y = 0; y < ctx.output_shape.h; ++y) {
      for (std::size_t x = 0; x < ctx.output_shape.w; ++x, ++o) {
        const T g = T(0.25) * grad_out[o];
        const std::size_t i00 = base + (2 * y) * in.w + 2 * x;
        grad_in[i00] = g;
        grad_in[i00 + 1] = g;
        grad_in[i00 + in.w] = g;
        grad_in[i00 + in.w + 1] = g;
      }
    }
  }
  return grad_in;
}

}  // namespace ghostlayer
