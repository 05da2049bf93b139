#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relprop/network.hpp"
#include "relprop/tensor.hpp"

namespace relprop::lrp {

/// One redistribution rule. Linear layers (Conv2D, Dense) accept Zero,
/// Epsilon, Gamma and ZBox; pooling uses WinnerTakeAll; ReLU, Flatten and
/// Softmax pass relevance through unchanged.
struct Rule {
  enum class Kind { Zero, Epsilon, Gamma, ZBox, WinnerTakeAll, PassThrough };

  Kind kind = Kind::Zero;
  double epsilon = 0.0;
  double gamma = 0.0;
  double low = 0.0;
  double high = 0.0;

  static Rule zero() { return {}; }
  static Rule epsilon_rule(double epsilon);
  static Rule gamma_rule(double gamma);
  static Rule zbox(double low, double high);
  static Rule winner_take_all() { return {Kind::WinnerTakeAll}; }
  static Rule pass_through() { return {Kind::PassThrough}; }

  std::string describe() const;
  friend bool operator==(const Rule&, const Rule&) = default;
};

/// Depth-dependent rule assignment. The pixel layer (first Conv2D/Dense,
/// possibly behind a Flatten) gets `input_rule`, ZBox over
/// [zbox_low, zbox_high] when unset. Of the remaining Conv2D layers the lowest
/// round(lower_fraction * count) get Gamma(conv_gamma) and the rest
/// Epsilon(conv_epsilon). Other Dense layers get Epsilon(dense_epsilon).
/// `uniform_rule`, when set, overrides every Conv2D/Dense layer.
struct CompositeConfig {
  std::optional<Rule> input_rule;
  double zbox_low = 0.0;
  double zbox_high = 255.0;
  double lower_fraction = 0.5;
  double conv_gamma = 0.25;
  double conv_epsilon = 0.25;
  double dense_epsilon = 1e-9;
  std::optional<Rule> uniform_rule;

  /// ZBox bounds for raw pixels in [0, 255] after mean subtraction:
  /// [0 - max(mean), 255 - min(mean)].
  static CompositeConfig for_channel_means(std::span<const float> means);
  static CompositeConfig uniform(Rule rule);

  /// Deterministic text form (sorted keys, round-trip precision) used for
  /// digests.
  std::string canonical() const;
};

/// One rule per layer, in layer order.
std::vector<Rule> assign_rules(const NetworkModel& model, const CompositeConfig& config);

struct RelevanceMap {
  Tensor values;  // H x W, the model's input spatial shape
  std::size_t target_class = 0;
  std::string model_id;
  bool normalized = false;
};

// Single-layer rules. Relevance tensors have the layer's output / input
// shape; weights and bias follow the layer conventions (Dense out x in,
// Conv2D kh x kw x Cin x Cout).
Tensor lrp_dense(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                 const Tensor& input, const Rule& rule);
Tensor lrp_conv(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                const Tensor& input, std::size_t stride, Padding padding, const Rule& rule);
Tensor lrp_pool(const Tensor& r_out, const Shape& input_shape,
                std::span<const std::size_t> winners);
Tensor lrp_input_zbox(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                      const Tensor& input, double low, double high);
Tensor lrp_input_zbox_conv(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                           const Tensor& input, std::size_t stride, Padding padding,
                           double low, double high);

/// Unnormalized map: relevance seeded with the target logit at the readout,
/// propagated per `config`, summed over input channels.
RelevanceMap compute_relevance(const NetworkModel& model, const Tensor& image,
                               std::size_t target_class, const CompositeConfig& config);

/// compute_relevance followed by normalize_map.
RelevanceMap relevance_map(const NetworkModel& model, const Tensor& image,
                           std::size_t target_class, const CompositeConfig& config);

/// Divides by max |value|. An all-zero map is returned as is (flagged
/// normalized).
RelevanceMap normalize_map(RelevanceMap map);

/// Grayscale rendering: -1 -> 0, 0 -> 128, +1 -> 255.
Tensor render_map(const RelevanceMap& map);

}  // namespace relprop::lrp
