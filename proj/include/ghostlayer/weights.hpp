#pragma once

// Weight storage and the portable "GLW1" binary format.
//
// Layout (all integers and floats little-endian):
//
//   char[4]   magic "GLW1"
//   u32       format_version (= 1)
//   f32[3]    per-channel mean subtracted from input pixels (RGB order)
//   u32       layer_count
//   per layer:
//     u16     name length, followed by that many UTF-8 bytes
//     u32[4]  out_channels, in_channels, kernel_h, kernel_w
//     f32[]   out*in*kh*kw weights, out-major
//     f32[]   out biases
//
// Bytes after the last layer are a validation error.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ghostlayer/error.hpp"
#include "ghostlayer/network_spec.hpp"
#include "ghostlayer/random.hpp"
#include "ghostlayer/tensor.hpp"

namespace ghostlayer {

inline constexpr std::array<char, 4> kWeightMagic = {'G', 'L', 'W', '1'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

// ImageNet RGB means used by the published VGG checkpoints.
inline constexpr std::array<float, 3> kImageNetMean = {123.68f, 116.779f, 103.939f};

struct NamedKernel {
  std::string name;
  ConvKernel kernel;

  friend bool operator==(const NamedKernel&, const NamedKernel&) = default;
};

struct WeightSet {
  std::uint32_t format_version = kWeightFormatVersion;
  std::array<float, 3> preprocess_mean{};
  std::vector<NamedKernel> layers;  // file order

  const ConvKernel* find(const std::string& name) const {
    for (const auto& l : layers) {
      if (l.name == name) return &l.kernel;
    }
    return nullptr;
  }

  const ConvKernel& at(const std::string& name) const {
    if (const auto* k = find(name)) return *k;
    throw ValidationError("weight set has no kernel for layer '" + name + "'");
  }

  friend bool operator==(const WeightSet&, const WeightSet&) = default;
};

// Checks that every conv layer of `spec` has exactly one kernel whose shape
// chains with its neighbours, and that the file carries nothing else.
inline void validate_weights(const WeightSet& weights, const NetworkSpec& spec) {
  spec.validate();
  std::size_t channels = spec.input_channels;
  std::size_t matched = 0;
  for (const auto& layer : spec.layers) {
    if (layer.kind != LayerKind::kConv) continue;
    std::size_t hits = 0;
    for (const auto& l : weights.layers) hits += l.name == layer.name;
    if (hits == 0) throw ValidationError("weight file is missing layer '" + layer.name + "'");
    if (hits > 1) throw ValidationError("weight file repeats layer '" + layer.name + "'");
    const ConvKernel& k = weights.at(layer.name);
    try {
      k.validate();
    } catch (const ConfigError& e) {
      throw ValidationError("layer '" + layer.name + "': " + e.what());
    }
    if (k.in_channels != channels) {
      throw ValidationError("layer '" + layer.name + "' expects " + std::to_string(k.in_channels) +
                            " input channels but receives " + std::to_string(channels));
    }
    if (layer.out_channels != 0 && k.out_channels != layer.out_channels) {
      throw ValidationError("layer '" + layer.name + "' has " + std::to_string(k.out_channels) +
                            " output channels, network expects " +
                            std::to_string(layer.out_channels));
    }
    if (layer.kernel_size != 0 &&
        (k.kernel_h != layer.kernel_size || k.kernel_w != layer.kernel_size)) {
      throw ValidationError("layer '" + layer.name + "' has a " + std::to_string(k.kernel_h) + "x" +
                            std::to_string(k.kernel_w) + " kernel, network expects " +
                            std::to_string(layer.kernel_size) + "x" +
                            std::to_string(layer.kernel_size));
    }
    if (k.kernel_h % 2 == 0 || k.kernel_w % 2 == 0) {
      throw ValidationError("layer '" + layer.name + "' has an even kernel extent");
    }
    channels = k.out_channels;
    ++matched;
  }
  if (matched != weights.layers.size()) {
    for (const auto& l : weights.layers) {
      const auto idx = spec.find(l.name);
      if (!idx || spec.layers[*idx].kind != LayerKind::kConv) {
        throw ValidationError("weight file has layer '" + l.name + "' not present in the network");
      }
    }
  }
  for (float m : weights.preprocess_mean) {
    if (!std::isfinite(m)) throw ValidationError("preprocess mean is not finite");
  }
}

namespace detail {

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw IoError(std::string("weight file truncated while reading ") + what + " at byte " +
                    std::to_string(pos_));
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void floats(std::vector<float>& out, std::size_t n, const char* what) {
    if (n > remaining() / 4) {
      throw IoError(std::string("weight file truncated while reading ") + what + " at byte " +
                    std::to_string(pos_));
    }
    out.resize(n);
    for (auto& v : out) v = f32(what);
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_weights(const WeightSet& weights) {
  detail::ByteWriter out;
  out.raw(kWeightMagic.data(), kWeightMagic.size());
  out.u32(weights.format_version);
  for (float m : weights.preprocess_mean) out.f32(m);
  out.u32(static_cast<std::uint32_t>(weights.layers.size()));
  for (const auto& l : weights.layers) {
    if (l.name.size() > 0xFFFF) throw ConfigError("layer name too long: " + l.name);
    out.u16(static_cast<std::uint16_t>(l.name.size()));
    out.raw(l.name.data(), l.name.size());
    const auto& k = l.kernel;
    k.validate();
    out.u32(static_cast<std::uint32_t>(k.out_channels));
    out.u32(static_cast<std::uint32_t>(k.in_channels));
    out.u32(static_cast<std::uint32_t>(k.kernel_h));
    out.u32(static_cast<std::uint32_t>(k.kernel_w));
    for (float w : k.weights) out.f32(w);
    for (float b : k.bias) out.f32(b);
  }
  return out.take();
}

// Parses a GLW1 image without checking it against a network.
inline WeightSet parse_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWeightMagic.size() ||
      std::memcmp(bytes.data(), kWeightMagic.data(), kWeightMagic.size()) != 0) {
    throw FormatError("not a GLW1 weight file (bad magic)");
  }
  detail::ByteReader in(bytes.subspan(kWeightMagic.size()));
  WeightSet ws;
  ws.format_version = in.u32("format version");
  if (ws.format_version != kWeightFormatVersion) {
    throw FormatError("unsupported GLW1 format version " + std::to_string(ws.format_version));
  }
  for (float& m : ws.preprocess_mean) m = in.f32("preprocess mean");
  const std::uint32_t count = in.u32("layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedKernel l;
    l.name = in.str(in.u16("layer name length"), "layer name");
    auto& k = l.kernel;
    k.out_channels = in.u32("kernel dims");
    k.in_channels = in.u32("kernel dims");
    k.kernel_h = in.u32("kernel dims");
    k.kernel_w = in.u32("kernel dims");
    const std::uint64_t n = std::uint64_t{k.out_channels} * k.in_channels * k.kernel_h * k.kernel_w;
    if (n == 0) throw ValidationError("layer '" + l.name + "' has a zero kernel extent");
    in.floats(k.weights, static_cast<std::size_t>(n), "kernel weights");
    in.floats(k.bias, k.out_channels, "kernel biases");
    ws.layers.push_back(std::move(l));
  }
  if (in.remaining() != 0) {
    throw ValidationError("weight file has " + std::to_string(in.remaining()) +
                          " trailing bytes after the last layer");
  }
  return ws;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("error reading '" + path.string() + "'");
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) throw IoError("error writing '" + path.string() + "'");
}

inline WeightSet load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  WeightSet ws = parse_weights(read_file_bytes(path));
  validate_weights(ws, spec);
  return ws;
}

inline void save_weights(const WeightSet& weights, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(weights);
  write_file_bytes(path, bytes);
}

// He-normal initialised weights for every conv layer of `spec` (zero bias).
// Conv layers that leave out_channels/kernel_size unspecified get 64 / 3.
inline WeightSet random_weights(const NetworkSpec& spec, std::uint64_t seed,
                                std::array<float, 3> mean = kImageNetMean) {
  spec.validate();
  SeededRng rng(seed);
  WeightSet ws;
  ws.preprocess_mean = mean;
  std::size_t channels = spec.input_channels;
  for (const auto& layer : spec.layers) {
    if (layer.kind != LayerKind::kConv) continue;
    const std::size_t out = layer.out_channels ? layer.out_channels : 64;
    const std::size_t ks = layer.kernel_size ? layer.kernel_size : 3;
    ConvKernel k(out, channels, ks, ks);
    const double stddev = std::sqrt(2.0 / static_cast<double>(k.patch_size()));
    for (float& w : k.weights) w = static_cast<float>(stddev * rng.normal());
    ws.layers.push_back({layer.name, std::move(k)});
    channels = out;
  }
  return ws;
}

}  // namespace ghostlayer
