#pragma once

// Content and Gram-matrix style costs of the reconstruction objective
//
//   C_tot = alpha * C_cont + beta * sum_l w_l E_l
//
// together with their gradients with respect to the tapped feature maps.
// All sums are accumulated in double precision.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ghostlayer/error.hpp"
#include "ghostlayer/network.hpp"
#include "ghostlayer/tensor.hpp"

namespace ghostlayer {

struct StyleLayer {
  std::string name;
  double weight = 1.0;

  friend bool operator==(const StyleLayer&, const StyleLayer&) = default;
};

struct LossConfig {
  double alpha = 10.0;
  double beta = 40.0;
  std::string content_layer = "conv4_2";  // empty disables the content term
  std::vector<StyleLayer> style_layers;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite value >= 0");
    for (const auto& s : style_layers) {
      if (!(s.weight >= 0.0) || !std::isfinite(s.weight)) {
        throw ConfigError("style layer '" + s.name + "' has a negative or non-finite weight");
      }
    }
    if (content_layer.empty() && style_layers.empty()) {
      throw ConfigError("loss needs at least one content or style layer");
    }
  }

  // Every layer the loss reads, content layer first, without duplicates.
  std::vector<std::string> taps() const {
    std::vector<std::string> out;
    if (!content_layer.empty()) out.push_back(content_layer);
    for (const auto& s : style_layers) {
      if (std::find(out.begin(), out.end(), s.name) == out.end()) out.push_back(s.name);
    }
    return out;
  }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

inline std::vector<StyleLayer> equal_style_weights(const std::vector<std::string>& names) {
  std::vector<StyleLayer> out;
  for (const auto& n : names) out.push_back({n, 1.0 / static_cast<double>(names.size())});
  return out;
}

inline LossConfig default_loss_config() {
  LossConfig c;
  c.style_layers = equal_style_weights({"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"});
  return c;
}

struct GramMatrix {
  std::string layer_name;
  Eigen::MatrixXd values;  // N_l x N_l
  std::size_t channels = 0;   // N_l
  std::size_t positions = 0;  // M_l
};

using GramSet = std::map<std::string, GramMatrix>;

struct LossBreakdown {
  double c_cont = 0.0;
  double c_style = 0.0;
  double c_tot = 0.0;
  std::map<std::string, double> per_layer_E;
};

namespace detail {

// Spatial positions processed per block when promoting features to double.
inline constexpr std::size_t kGramBlock = 16384;

template <typename T>
Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> feature_matrix(
    const BasicFeatureMap<T>& f) {
  return {f.values.raw(), static_cast<Eigen::Index>(f.channels()),
          static_cast<Eigen::Index>(f.positions())};
}

template <typename T>
void require_single_image(const BasicFeatureMap<T>& f) {
  if (f.values.shape().n != 1) {
    throw ConfigError("feature map '" + f.layer_name + "' must hold a single image, got " +
                      f.values.shape().str());
  }
}

}  // namespace detail

// G = F F^T with F viewed as an N_l x M_l matrix.
template <typename T>
GramMatrix gram(const BasicFeatureMap<T>& f) {
  detail::require_single_image(f);
  const auto n = static_cast<Eigen::Index>(f.channels());
  const auto m = f.positions();
  const auto features = detail::feature_matrix(f);
  GramMatrix g{f.layer_name, Eigen::MatrixXd::Zero(n, n), f.channels(), m};
  Eigen::MatrixXd block;
  for (std::size_t start = 0; start < m; start += detail::kGramBlock) {
    const auto len = static_cast<Eigen::Index>(std::min(detail::kGramBlock, m - start));
    block = features.middleCols(static_cast<Eigen::Index>(start), len).template cast<double>();
    g.values.noalias() += block * block.transpose();
  }
  return g;
}

template <typename T>
struct LayerLoss {
  double value = 0.0;
  BasicTensor<T> grad;  // d(value)/d(F_hat)
};

// (1 / (N M)) * sum (F_hat - F_c)^2 and its gradient 2 (F_hat - F_c) / (N M).
template <typename T>
LayerLoss<T> content_loss(const BasicFeatureMap<T>& f_hat, const BasicFeatureMap<T>& f_content) {
  if (f_hat.values.shape() != f_content.values.shape()) {
    throw ConfigError("content_loss: shape " + f_hat.values.shape().str() + " vs " +
                      f_content.values.shape().str());
  }
  const double norm = static_cast<double>(f_hat.channels()) * static_cast<double>(f_hat.positions());
  LayerLoss<T> out{0.0, BasicTensor<T>(f_hat.values.shape())};
  const auto a = f_hat.values.data();
  const auto b = f_content.values.data();
  auto g = out.grad.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
    g[i] = static_cast<T>(2.0 * d / norm);
  }
  out.value = sum / norm;
  return out;
}

// E_l = (1 / (4 N^2 M^2)) * sum (G_hat - G_s)^2, differentiated through the
// Gram map: dE/dF = (G_hat - G_s) F / (N^2 M^2).
template <typename T>
LayerLoss<T> style_layer_error(const BasicFeatureMap<T>& f_hat, const GramMatrix& g_hat,
                               const GramMatrix& g_style) {
  if (g_hat.layer_name != g_style.layer_name || g_hat.channels != g_style.channels) {
    throw ConfigError("style_layer_error: layer '" + g_hat.layer_name + "' (N=" +
                      std::to_string(g_hat.channels) + ") vs '" + g_style.layer_name +
                      "' (N=" + std::to_string(g_style.channels) + ")");
  }
  if (f_hat.channels() != g_hat.channels || f_hat.positions() != g_hat.positions) {
    throw ConfigError("style_layer_error: feature map '" + f_hat.layer_name +
                      "' does not match its Gram matrix");
  }
  const double n = static_cast<double>(g_hat.channels);
  const double m = static_cast<double>(g_hat.positions);
  const double scale = 1.0 / (n * n * m * m);
  const Eigen::MatrixXd residual = g_hat.values - g_style.values;

  LayerLoss<T> out{0.25 * scale * residual.squaredNorm(), BasicTensor<T>(f_hat.values.shape())};

  const auto features = detail::feature_matrix(f_hat);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> grad(
      out.grad.raw(), features.rows(), features.cols());
  const Eigen::MatrixXd scaled = scale * residual;
  Eigen::MatrixXd block;
  const auto total = f_hat.positions();
  for (std::size_t start = 0; start < total; start += detail::kGramBlock) {
    const auto len = static_cast<Eigen::Index>(std::min(detail::kGramBlock, total - start));
    const auto col = static_cast<Eigen::Index>(start);
    block = scaled * features.middleCols(col, len).template cast<double>();
    grad.middleCols(col, len) = block.template cast<T>();
  }
  return out;
}

template <typename T>
LayerLoss<T> style_layer_error(const BasicFeatureMap<T>& f_hat, const GramMatrix& g_style) {
  return style_layer_error(f_hat, gram(f_hat), g_style);
}

template <typename T>
struct TotalLoss {
  LossBreakdown breakdown;
  BasicLayerGradients<T> grads;  // already scaled by alpha or beta * w_l
};

// Style Grams can come from several style images; their layer errors are
// summed (one set per image).
template <typename T>
TotalLoss<T> total_loss(const LossConfig& config, const BasicFeatureMaps<T>& features_hat,
                        const BasicFeatureMaps<T>& features_content,
                        std::span<const GramSet> style_grams) {
  config.validate();
  auto feature = [](const BasicFeatureMaps<T>& maps, const std::string& name, const char* what)
      -> const BasicFeatureMap<T>& {
    auto it = maps.find(name);
    if (it == maps.end()) {
      throw ConfigError(std::string("total_loss: ") + what + " features lack layer '" + name + "'");
    }
    return it->second;
  };
  auto accumulate = [](BasicLayerGradients<T>& grads, const std::string& name, BasicTensor<T> g,
                       double factor) {
    for (T& v : g.data()) v = static_cast<T>(factor * v);
    if (auto it = grads.find(name); it != grads.end()) {
      it->second += g;
    } else {
      grads.emplace(name, std::move(g));
    }
  };

  TotalLoss<T> out;
  LossBreakdown& b = out.breakdown;
  if (!config.content_layer.empty()) {
    const auto& hat = feature(features_hat, config.content_layer, "reconstruction");
    const auto& ref = feature(features_content, config.content_layer, "content");
    auto c = content_loss(hat, ref);
    b.c_cont = c.value;
    if (config.alpha != 0.0) accumulate(out.grads, config.content_layer, std::move(c.grad), config.alpha);
  }
  for (const auto& layer : config.style_layers) {
    const auto& hat = feature(features_hat, layer.name, "reconstruction");
    const GramMatrix g_hat = gram(hat);
    double e_sum = 0.0;
    std::optional<BasicTensor<T>> grad_sum;
    for (const auto& set : style_grams) {
      auto it = set.find(layer.name);
      if (it == set.end()) throw ConfigError("total_loss: style Grams lack layer '" + layer.name + "'");
      auto e = style_layer_error(hat, g_hat, it->second);
      e_sum += e.value;
      if (grad_sum) {
        *grad_sum += e.grad;
      } else {
        grad_sum = std::move(e.grad);
      }
    }
    b.per_layer_E[layer.name] = e_sum;
    b.c_style += layer.weight * e_sum;
    const double factor = config.beta * layer.weight;
    if (grad_sum && factor != 0.0) accumulate(out.grads, layer.name, std::move(*grad_sum), factor);
  }
  b.c_tot = config.alpha * b.c_cont + config.beta * b.c_style;
  return out;
}

template <typename T>
TotalLoss<T> total_loss(const LossConfig& config, const BasicFeatureMaps<T>& features_hat,
                        const BasicFeatureMaps<T>& features_content, const GramSet& style_grams) {
  return total_loss(config, features_hat, features_content, std::span<const GramSet>(&style_grams, 1));
}

}  // namespace ghostlayer
