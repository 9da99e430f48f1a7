#pragma once

// PNG decode/encode on top of libpng. Grayscale and palette images are
// promoted to 8-bit RGB and any alpha channel is dropped. 16-bit images are
// rejected rather than silently requantised.

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "ghostlayer/error.hpp"

namespace ghostlayer {

struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // RGB triples, row-major

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(3 * w * h, fill) {}

  std::uint8_t* px(std::size_t x, std::size_t y) { return pixels.data() + 3 * (y * width + x); }
  const std::uint8_t* px(std::size_t x, std::size_t y) const {
    return pixels.data() + 3 * (y * width + x);
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

namespace detail {

struct PngIo {
  std::span<const std::uint8_t> input;
  std::size_t pos = 0;
  std::vector<std::uint8_t> output;
  std::string error;
  bool unsupported = false;
  ImageBuffer image;
};

extern "C" inline void png_on_error(png_structp png, png_const_charp msg) {
  auto* io = static_cast<PngIo*>(png_get_error_ptr(png));
  if (io && io->error.empty()) io->error = msg ? msg : "libpng error";
  png_longjmp(png, 1);
}

extern "C" inline void png_on_warning(png_structp, png_const_charp) {}

extern "C" inline void png_read_bytes(png_structp png, png_bytep out, png_size_t n) {
  auto* io = static_cast<PngIo*>(png_get_io_ptr(png));
  if (io->input.size() - io->pos < n) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, io->input.data() + io->pos, n);
  io->pos += n;
}

extern "C" inline void png_write_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* io = static_cast<PngIo*>(png_get_io_ptr(png));
  io->output.insert(io->output.end(), data, data + n);
}

extern "C" inline void png_flush_noop(png_structp) {}

// Only trivially destructible locals live between setjmp and any longjmp;
// all results go through `io`.
inline bool decode_into(png_structp png, png_infop info, PngIo& io) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_read_fn(png, &io, png_read_bytes);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) {
    io.unsupported = true;
    io.error = "16-bit PNG images are not supported";
    return false;
  }
  if (depth < 8 && color == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) png_set_interlace_handling(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != std::size_t{3} * width) {
    io.error = "unexpected PNG row layout";
    return false;
  }
  io.image = ImageBuffer(width, height);
  // Row pointers are kept inside io so nothing here needs unwinding.
  io.output.resize(sizeof(png_bytep) * height);
  auto* rows = reinterpret_cast<png_bytep*>(io.output.data());
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = io.image.px(0, y);
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

inline bool encode_into(png_structp png, png_infop info, const ImageBuffer& image, PngIo& io) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(png, &io, png_write_bytes, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.px(0, y)));
  }
  png_write_end(png, nullptr);
  return true;
}

}  // namespace detail

inline ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("not a PNG file (bad signature)");
  }
  detail::PngIo io;
  io.input = bytes;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &io, detail::png_on_error,
                                           detail::png_on_warning);
  if (!png) throw IoError("libpng: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng: cannot allocate info struct");
  }
  const bool ok = detail::decode_into(png, info, io);
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) {
    if (io.unsupported) throw UnsupportedFormatError(io.error);
    throw FormatError("malformed PNG: " + io.error);
  }
  return std::move(io.image);
}

inline std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != 3 * image.width * image.height) {
    throw ConfigError("encode: image buffer is empty or inconsistent");
  }
  detail::PngIo io;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &io, detail::png_on_error,
                                            detail::png_on_warning);
  if (!png) throw IoError("libpng: cannot allocate write struct");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng: cannot allocate info struct");
  }
  const bool ok = detail::encode_into(png, info, image, io);
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IoError("PNG encoding failed: " + io.error);
  return std::move(io.output);
}

}  // namespace ghostlayer
