#pragma once

// Pixel-space minimisation of the reconstruction cost: initialisation,
// first-order updates (plain gradient descent or Adam), and the run loop
// that records the loss trace.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stop_token>
#include <string>
#include <utility>
#include <vector>

#include "ghostlayer/error.hpp"
#include "ghostlayer/losses.hpp"
#include "ghostlayer/network.hpp"
#include "ghostlayer/random.hpp"
#include "ghostlayer/tensor.hpp"

namespace ghostlayer {

enum class OptimizerMethod { kAdam, kSgd };
enum class InitMode { kNoise, kContent };

struct OptimizerConfig {
  OptimizerMethod method = OptimizerMethod::kAdam;
  double learning_rate = 1.0;
  std::size_t iterations = 10000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  InitMode init = InitMode::kNoise;
  // Fraction of noise in the noise initialisation; the rest is the content image.
  double noise_ratio = 1.0;
  std::size_t checkpoint_every = 100;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning rate must be positive");
    }
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
    if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0)) throw ConfigError("noise ratio must lie in [0, 1]");
    if (checkpoint_every < 1) throw ConfigError("checkpoint interval must be >= 1");
  }

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct TraceRow {
  std::size_t step = 0;
  LossBreakdown loss;
};

struct OptimizationState {
  Tensor x_hat;
  std::size_t step = 0;
  Tensor first_moment;
  Tensor second_moment;
  std::vector<TraceRow> trace;
};

// Starting image. Noise is uniform over the valid pixel range [0, 255],
// expressed in the mean-subtracted space the network consumes.
inline OptimizationState init_state(const OptimizerConfig& config, const Tensor& content,
                                    const std::array<float, 3>& mean) {
  const Shape& s = content.shape();
  if (s.n != 1 || s.c != 3) throw ConfigError("init_state: content must be 1x3xHxW, got " + s.str());
  OptimizationState state;
  state.first_moment = Tensor(s);
  state.second_moment = Tensor(s);
  if (config.init == InitMode::kContent) {
    state.x_hat = content;
    return state;
  }
  SeededRng rng(config.seed);
  state.x_hat = Tensor(s);
  const double r = config.noise_ratio;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < s.plane(); ++i) {
      const std::size_t idx = c * s.plane() + i;
      const double noise = rng.uniform(0.0, 255.0) - mean[c];
      state.x_hat[idx] = static_cast<float>(r * noise + (1.0 - r) * content[idx]);
    }
  }
  return state;
}

// One update of x_hat from the pixel gradient.
inline void step(OptimizationState& state, const Tensor& pixel_grad, const OptimizerConfig& config) {
  pixel_grad.require_same_shape(state.x_hat, "optimizer step");
  if (!pixel_grad.all_finite()) {
    throw NumericError("non-finite pixel gradient at step " + std::to_string(state.step));
  }
  const std::size_t t = state.step + 1;
  auto x = state.x_hat.data();
  const auto g = pixel_grad.data();
  if (config.method == OptimizerMethod::kSgd) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<float>(x[i] - config.learning_rate * g[i]);
    }
  } else {
    auto m = state.first_moment.data();
    auto v = state.second_moment.data();
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      x[i] = static_cast<float>(x[i] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  }
  if (!state.x_hat.all_finite()) {
    throw NumericError("image became non-finite at step " + std::to_string(t));
  }
  state.step = t;
}

// The reconstruction cost for a fixed content image and style image(s):
// content features and style Grams are computed once and reused for every
// evaluation.
template <typename T>
class BasicStyleObjective {
 public:
  using Image = BasicTensor<T>;

  BasicStyleObjective(const BasicFeatureExtractor<T>& network, LossConfig config, const Image& content,
                      std::span<const Image> styles)
      : network_(&network), config_(std::move(config)) {
    config_.validate();
    taps_ = config_.taps();
    if (!config_.content_layer.empty()) {
      const std::string tap[] = {config_.content_layer};
      content_features_ = network.forward(content, tap).features;
    }
    std::vector<std::string> style_taps;
    for (const auto& s : config_.style_layers) style_taps.push_back(s.name);
    for (const auto& style : styles) {
      GramSet grams;
      for (auto& [name, f] : network.forward(style, style_taps).features) grams.emplace(name, gram(f));
      style_grams_.push_back(std::move(grams));
    }
    if (style_grams_.empty() && !config_.style_layers.empty()) {
      throw ConfigError("style layers configured but no style image supplied");
    }
  }

  const LossConfig& config() const { return config_; }
  const BasicFeatureExtractor<T>& network() const { return *network_; }

  struct Evaluation {
    LossBreakdown loss;
    Image grad;
  };

  Evaluation evaluate(const Image& x) const {
    auto fwd = network_->forward(x, taps_);
    auto total = total_loss(config_, fwd.features, content_features_, style_grams_);
    return {std::move(total.breakdown), network_->backward_to_input(total.grads, fwd.context)};
  }

  LossBreakdown loss(const Image& x) const {
    auto fwd = network_->forward(x, taps_);
    return total_loss(config_, fwd.features, content_features_, style_grams_).breakdown;
  }

 private:
  const BasicFeatureExtractor<T>* network_;
  LossConfig config_;
  std::vector<std::string> taps_;
  BasicFeatureMaps<T> content_features_;
  std::vector<GramSet> style_grams_;
};

using StyleObjective = BasicStyleObjective<float>;

using CheckpointObserver = std::function<void(const TraceRow&)>;

// Runs `config.iterations` updates from `state`. The loss is recorded at
// step 0, every `checkpoint_every` steps, and at the final step. A stop
// request ends the run between updates, leaving `state` consistent.
inline void run(const StyleObjective& objective, const OptimizerConfig& config,
                OptimizationState& state, const CheckpointObserver& observer = {},
                std::stop_token stop = {}) {
  config.validate();
  const std::size_t end = state.step + config.iterations;
  auto record = [&](LossBreakdown loss) {
    if (!std::isfinite(loss.c_tot)) {
      throw NumericError("non-finite loss at step " + std::to_string(state.step));
    }
    state.trace.push_back({state.step, std::move(loss)});
    if (observer) observer(state.trace.back());
  };
  while (state.step < end) {
    if (stop.stop_requested()) return;
    auto eval = objective.evaluate(state.x_hat);
    if (state.step % config.checkpoint_every == 0) record(std::move(eval.loss));
    step(state, eval.grad, config);
  }
  if (state.trace.empty() || state.trace.back().step != state.step) {
    record(objective.loss(state.x_hat));
  }
}

}  // namespace ghostlayer
