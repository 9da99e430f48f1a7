#pragma once

// Pixel-level preprocessing: file I/O, grayscale, negative, resize, the
// image <-> network tensor mapping, and pixelwise ensemble averaging.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ghostlayer/error.hpp"
#include "ghostlayer/png_codec.hpp"
#include "ghostlayer/tensor.hpp"
#include "ghostlayer/weights.hpp"

namespace ghostlayer {

inline ImageBuffer decode(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const FormatError& e) {
    if (dynamic_cast<const UnsupportedFormatError*>(&e)) {
      throw UnsupportedFormatError(path.string() + ": " + e.what());
    }
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void encode(const ImageBuffer& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_png(image));
}

// Rec. 601 luma, rounded half up, replicated into all three channels.
inline ImageBuffer to_grayscale(const ImageBuffer& image) {
  ImageBuffer out = image;
  for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
    const unsigned y = (299u * out.pixels[i] + 587u * out.pixels[i + 1] + 114u * out.pixels[i + 2] + 500u) / 1000u;
    out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = static_cast<std::uint8_t>(y);
  }
  return out;
}

inline ImageBuffer invert(const ImageBuffer& image) {
  ImageBuffer out = image;
  for (auto& v : out.pixels) v = static_cast<std::uint8_t>(255 - v);
  return out;
}

namespace detail {

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Half-pixel-centre sample positions, clamped to the source edge.
inline std::vector<Tap> bilinear_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    const std::size_t hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, s - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace detail

// Bilinear resampling with edge clamping. Same-size requests return the
// input unchanged.
inline ImageBuffer resize(const ImageBuffer& image, std::size_t target_w, std::size_t target_h) {
  if (target_w == 0 || target_h == 0) {
    throw ConfigError("resize: target size " + std::to_string(target_w) + "x" +
                      std::to_string(target_h) + " must be positive");
  }
  if (image.width == 0 || image.height == 0) throw ConfigError("resize: empty source image");
  if (target_w == image.width && target_h == image.height) return image;

  const auto xs = detail::bilinear_taps(image.width, target_w);
  const auto ys = detail::bilinear_taps(image.height, target_h);
  ImageBuffer out(target_w, target_h);
  for (std::size_t y = 0; y < target_h; ++y) {
    const auto& ty = ys[y];
    for (std::size_t x = 0; x < target_w; ++x) {
      const auto& tx = xs[x];
      const auto* p00 = image.px(tx.lo, ty.lo);
      const auto* p01 = image.px(tx.hi, ty.lo);
      const auto* p10 = image.px(tx.lo, ty.hi);
      const auto* p11 = image.px(tx.hi, ty.hi);
      auto* dst = out.px(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + tx.frac * (p01[c] - p00[c]);
        const double bottom = p10[c] + tx.frac * (p11[c] - p10[c]);
        dst[c] = detail::to_byte(top + ty.frac * (bottom - top));
      }
    }
  }
  return out;
}

// 1 x 3 x H x W floats with the per-channel mean removed.
inline Tensor to_tensor(const ImageBuffer& image, const std::array<float, 3>& mean) {
  Tensor t(Shape{1, 3, image.height, image.width});
  const std::size_t plane = image.width * image.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      t[c * plane + i] = static_cast<float>(image.pixels[3 * i + c]) - mean[c];
    }
  }
  return t;
}

// Adds the mean back, clamps to [0, 255] and rounds half away from zero.
inline ImageBuffer from_tensor(const Tensor& t, const std::array<float, 3>& mean) {
  const Shape& s = t.shape();
  if (s.n != 1 || s.c != 3) throw ConfigError("from_tensor: expected a 1x3xHxW tensor, got " + s.str());
  ImageBuffer out(s.w, s.h);
  const std::size_t plane = s.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = static_cast<double>(t[c * plane + i]) + static_cast<double>(mean[c]);
      out.pixels[3 * i + c] = detail::to_byte(v);
    }
  }
  return out;
}

// Pixelwise arithmetic mean of m equally sized images.
inline ImageBuffer ensemble_mean(std::span<const ImageBuffer> images) {
  if (images.empty()) throw UsageError("ensemble_mean: at least one image is required");
  const auto& first = images.front();
  for (const auto& img : images) {
    if (img.width != first.width || img.height != first.height) {
      throw ConfigError("ensemble_mean: image sizes differ (" + std::to_string(first.width) + "x" +
                        std::to_string(first.height) + " vs " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + ")");
    }
  }
  ImageBuffer out(first.width, first.height);
  const double m = static_cast<double>(images.size());
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    double sum = 0.0;
    for (const auto& img : images) sum += img.pixels[i];
    out.pixels[i] = detail::to_byte(sum / m);
  }
  return out;
}

}  // namespace ghostlayer
