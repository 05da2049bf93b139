#include <cmath>

#include "propagate_internal.hpp"
#include "relprop/error.hpp"
#include "relprop/lrp.hpp"

namespace relprop::lrp {
namespace {

std::vector<double> widen(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor narrow(const Shape& shape, const std::vector<double>& v) {
  return Tensor(shape, std::vector<float>(v.begin(), v.end()));
}

void check_output_shape(const Tensor& r_out, const Shape& expected) {
  if (r_out.shape() != expected) {
    throw InvalidInput("relevance shape " + shape_string(r_out.shape()) +
                       " does not match layer output " + shape_string(expected));
  }
}

Shape conv_output_shape(const Tensor& weights, const Tensor& input, std::size_t stride,
                        Padding padding) {
  if (weights.rank() != 4) throw InvalidInput("conv weights must be kh x kw x Cin x Cout");
  const auto g = conv_geometry(input.shape(), weights.dim(0), weights.dim(1), weights.dim(3),
                               stride, padding);
  return {g.out_h, g.out_w, g.out_c};
}

}  // namespace

Tensor lrp_dense(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                 const Tensor& input, const Rule& rule) {
  const auto map = detail::dense_map(weights);
  check_output_shape(r_out, {map.out_size});
  return narrow(input.shape(),
                detail::propagate_linear(map, widen(r_out), weights, bias, input, rule));
}

Tensor lrp_conv(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                const Tensor& input, std::size_t stride, Padding padding, const Rule& rule) {
  check_output_shape(r_out, conv_output_shape(weights, input, stride, padding));
  const auto map = detail::conv_map(weights, input.shape(), stride, padding);
  return narrow(input.shape(),
                detail::propagate_linear(map, widen(r_out), weights, bias, input, rule));
}

Tensor lrp_pool(const Tensor& r_out, const Shape& input_shape,
                std::span<const std::size_t> winners) {
  return narrow(input_shape, detail::propagate_pool(widen(r_out), shape_size(input_shape), winners));
}

Tensor lrp_input_zbox(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                      const Tensor& input, double low, double high) {
  const auto map = detail::dense_map(weights);
  check_output_shape(r_out, {map.out_size});
  return narrow(input.shape(),
                detail::propagate_zbox(map, widen(r_out), weights, bias, input, low, high));
}

Tensor lrp_input_zbox_conv(const Tensor& r_out, const Tensor& weights, const Tensor& bias,
                           const Tensor& input, std::size_t stride, Padding padding,
                           double low, double high) {
  check_output_shape(r_out, conv_output_shape(weights, input, stride, padding));
  const auto map = detail::conv_map(weights, input.shape(), stride, padding);
  return narrow(input.shape(),
                detail::propagate_zbox(map, widen(r_out), weights, bias, input, low, high));
}

RelevanceMap compute_relevance(const NetworkModel& model, const Tensor& image,
                               std::size_t target_class, const CompositeConfig& config) {
  if (target_class >= model.num_classes()) {
    throw InvalidInput("target class " + std::to_string(target_class) + " out of range for " +
                       std::to_string(model.num_classes()) + " classes");
  }
  const auto rules = assign_rules(model, config);
  const auto trace = forward(model, image);
  const auto& layers = model.layers();

  std::vector<double> r(model.num_classes(), 0.0);
  r[target_class] = static_cast<double>(trace.logits[target_class]);

  for (std::size_t i = model.readout_index() + 1; i-- > 0;) {
    const auto& layer = layers[i];
    const auto& rule = rules[i];
    const Tensor& a = trace.layers[i].input;
    try {
      switch (layer.kind) {
        case LayerKind::Dense:
        case LayerKind::Conv2D: {
          const auto& p = model.params(layer.name);
          const auto map = layer.kind == LayerKind::Dense
                               ? detail::dense_map(p.weights)
                               : detail::conv_map(p.weights, a.shape(), layer.stride, layer.padding);
          r = rule.kind == Rule::Kind::ZBox
                  ? detail::propagate_zbox(map, r, p.weights, p.bias, a, rule.low, rule.high)
                  : detail::propagate_linear(map, r, p.weights, p.bias, a, rule);
          break;
        }
        case LayerKind::MaxPool2x2:
          r = detail::propagate_pool(r, a.size(), trace.layers[i].winners);
          break;
        case LayerKind::ReLU:
        case LayerKind::Flatten:
        case LayerKind::Softmax:
          break;
      }
    } catch (const InvalidInput& e) {
      throw InvalidInput("layer '" + layer.name + "': " + e.what());
    }
    for (double v : r) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite relevance after layer '" + layer.name + "' (" +
                           rule.describe() + ")");
      }
    }
  }

  const auto& in = model.input_shape();
  const std::size_t h = in[0], w = in[1], c = in[2];
  std::vector<float> pixels(h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) acc += r[p * c + ch];
    pixels[p] = static_cast<float>(acc);
  }
  return RelevanceMap{Tensor({h, w}, std::move(pixels)), target_class, model.id(), false};
}

RelevanceMap relevance_map(const NetworkModel& model, const Tensor& image,
                           std::size_t target_class, const CompositeConfig& config) {
  return normalize_map(compute_relevance(model, image, target_class, config));
}

RelevanceMap normalize_map(RelevanceMap map) {
  float peak = 0.0f;
  for (float v : map.values.values()) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0f) {
    std::vector<float> out(map.values.values().begin(), map.values.values().end());
    for (auto& v : out) v /= peak;
    map.values = Tensor(map.values.shape(), std::move(out));
  }
  map.normalized = true;
  return map;
}

Tensor render_map(const RelevanceMap& map) {
  std::vector<float> out;
  out.reserve(map.values.size());
  for (float v : map.values.values()) {
    const double x = std::clamp(static_cast<double>(v), -1.0, 1.0);
    const double gray = x >= 0.0 ? 128.0 + 127.0 * x : 128.0 + 128.0 * x;
    out.push_back(static_cast<float>(std::floor(gray + 0.5)));
  }
  return Tensor(map.values.shape(), std::move(out));
}

}  // namespace relprop::lrp
