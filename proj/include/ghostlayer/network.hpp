#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ghostlayer/kernels.hpp"
#include "ghostlayer/network_spec.hpp"
#include "ghostlayer/tensor.hpp"
#include "ghostlayer/weights.hpp"

namespace ghostlayer {

// Activations F_l of one layer for a single image: channels() is N_l and
// positions() is M_l (height * width).
template <typename T>
struct BasicFeatureMap {
  std::string layer_name;
  BasicTensor<T> values;

  std::size_t channels() const { return values.shape().c; }
  std::size_t positions() const { return values.shape().plane(); }
};

template <typename T>
using BasicFeatureMaps = std::map<std::string, BasicFeatureMap<T>>;
template <typename T>
using BasicLayerGradients = std::map<std::string, BasicTensor<T>>;

// Everything a backward pass needs from the forward pass that produced it.
template <typename T>
struct ForwardContext {
  Shape input_shape{};
  std::vector<std::string> taps;
  std::optional<std::size_t> deepest;          // last layer evaluated
  std::vector<Shape> layer_inputs;             // input shape per evaluated layer
  std::vector<BasicTensor<T>> relu_outputs;    // populated for ReLU layers only
  std::vector<PoolContext> pools;              // populated for pool layers only
};

template <typename T>
struct ForwardResult {
  BasicFeatureMaps<T> features;
  ForwardContext<T> context;
};

// Frozen feed-forward trunk. Immutable after construction, so one instance
// can serve any number of concurrent forward/backward passes.
template <typename T>
class BasicFeatureExtractor {
 public:
  using Kernel = BasicConvKernel<T>;
  using Image = BasicTensor<T>;
  using Maps = BasicFeatureMaps<T>;
  using Gradients = BasicLayerGradients<T>;

  BasicFeatureExtractor(NetworkSpec spec, WeightSet weights)
      : spec_(std::move(spec)), mean_(weights.preprocess_mean) {
    validate_weights(weights, spec_);
    kernels_.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      if (spec_.layers[i].kind != LayerKind::kConv) continue;
      kernels_[i] = kernel_cast<T>(weights.at(spec_.layers[i].name));
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  const std::array<float, 3>& preprocess_mean() const { return mean_; }

  // Runs the trunk up to the deepest requested tap. `x` must be a single
  // mean-subtracted image (1 x C x H x W).
  ForwardResult<T> forward(const Image& x, std::span<const std::string> taps) const {
    const Shape& in = x.shape();
    if (in.n != 1 || in.c != spec_.input_channels) {
      throw ConfigError("forward_features: expected a 1x" + std::to_string(spec_.input_channels) +
                        "xHxW input, got " + in.str());
    }
    ForwardResult<T> result;
    ForwardContext<T>& ctx = result.context;
    ctx.input_shape = in;
    ctx.taps.assign(taps.begin(), taps.end());
    for (const auto& t : taps) {
      const std::size_t i = spec_.index_of(t);
      ctx.deepest = ctx.deepest ? std::max(*ctx.deepest, i) : i;
    }
    if (!ctx.deepest) return result;

    const std::size_t last = *ctx.deepest;
    ctx.layer_inputs.resize(last + 1);
    ctx.relu_outputs.resize(last + 1);
    ctx.pools.resize(last + 1);

    Image current = x;
    for (std::size_t i = 0; i <= last; ++i) {
      const LayerDesc& layer = spec_.layers[i];
      ctx.layer_inputs[i] = current.shape();
      switch (layer.kind) {
        case LayerKind::kConv: {
          const Kernel& k = *kernels_[i];
          current = conv2d_forward(current, k, k.kernel_h / 2, 1);
          break;
        }
        case LayerKind::kRelu:
          current = relu_forward(current);
          ctx.relu_outputs[i] = current;
          break;
        case LayerKind::kPool: {
          auto pooled = pool2d_forward(current, spec_.pool_mode, spec_.odd_extent);
          current = std::move(pooled.output);
          ctx.pools[i] = std::move(pooled.context);
          break;
        }
      }
      if (std::find(taps.begin(), taps.end(), layer.name) != taps.end()) {
        result.features[layer.name] = BasicFeatureMap<T>{layer.name, current};
      }
    }
    return result;
  }

  // Pixel gradient given d(loss)/d(F_l) for any subset of the tapped layers.
  // Contributions from several taps are summed as they meet in the trunk.
  Image backward_to_input(const Gradients& grads, const ForwardContext<T>& ctx) const {
    for (const auto& [name, g] : grads) {
      if (std::find(ctx.taps.begin(), ctx.taps.end(), name) == ctx.taps.end()) {
        throw ConfigError("backward_to_input: gradient supplied for untapped layer '" + name + "'");
      }
    }
    if (!ctx.deepest) return Image(ctx.input_shape);

    std::optional<Image> running;
    for (std::size_t i = *ctx.deepest + 1; i-- > 0;) {
      const LayerDesc& layer = spec_.layers[i];
      if (auto it = grads.find(layer.name); it != grads.end()) {
        const Shape expected = output_shape(i, ctx);
        if (it->second.shape() != expected) {
          throw ConfigError("backward_to_input: gradient for '" + layer.name + "' has shape " +
                            it->second.shape().str() + ", feature map is " + expected.str());
        }
        if (running) {
          *running += it->second;
        } else {
          running = it->second;
        }
      }
      if (!running) continue;
      switch (layer.kind) {
        case LayerKind::kConv: {
          const Kernel& k = *kernels_[i];
          running = conv2d_backward_input(*running, k, ctx.layer_inputs[i], k.kernel_h / 2, 1);
          break;
        }
        case LayerKind::kRelu:
          running = relu_backward(*running, ctx.relu_outputs[i]);
          break;
        case LayerKind::kPool:
          running = pool2d_backward(*running, ctx.pools[i]);
          break;
      }
    }
    return running ? std::move(*running) : Image(ctx.input_shape);
  }

 private:
  Shape output_shape(std::size_t i, const ForwardContext<T>& ctx) const {
    const Shape in = ctx.layer_inputs[i];
    switch (spec_.layers[i].kind) {
      case LayerKind::kConv:
        return {in.n, kernels_[i]->out_channels, in.h, in.w};
      case LayerKind::kRelu:
        return in;
      case LayerKind::kPool:
        return ctx.pools[i].output_shape;
    }
    return in;
  }

  NetworkSpec spec_;
  std::array<float, 3> mean_;
  std::vector<std::optional<Kernel>> kernels_;  // engaged for conv layers only
};

using FeatureMap = BasicFeatureMap<float>;
using FeatureMaps = BasicFeatureMaps<float>;
using LayerGradients = BasicLayerGradients<float>;
using FeatureExtractor = BasicFeatureExtractor<float>;

}  // namespace ghostlayer
