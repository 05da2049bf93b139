#include <cmath>
#include <set>

#include "relprop/error.hpp"
#include "relprop/network.hpp"

namespace relprop {
namespace {

[[noreturn]] void layer_error(const LayerSpec& layer, const std::string& what) {
  throw InvalidInput("layer '" + layer.name + "' (" + std::string(layer_kind_name(layer.kind)) +
                     "): " + what);
}

Shape propagate_shape(const LayerSpec& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::Conv2D: {
      if (in.size() != 3) layer_error(layer, "expects H x W x C input, got " + shape_string(in));
      if (in[2] != layer.in_channels) {
        layer_error(layer, "declares " + std::to_string(layer.in_channels) +
                               " input channels but receives " + shape_string(in));
      }
      try {
        const auto g = conv_geometry(in, layer.kernel_h, layer.kernel_w, layer.out_channels,
                                     layer.stride, layer.padding);
        return {g.out_h, g.out_w, g.out_c};
      } catch (const InvalidInput& e) {
        layer_error(layer, e.what());
      }
    }
    case LayerKind::MaxPool2x2:
      if (in.size() != 3) layer_error(layer, "expects H x W x C input, got " + shape_string(in));
      return {(in[0] + 1) / 2, (in[1] + 1) / 2, in[2]};
    case LayerKind::ReLU:
      return in;
    case LayerKind::Flatten:
      return {shape_size(in)};
    case LayerKind::Dense:
      // Dense flattens whatever it receives.
      if (shape_size(in) != layer.in_features) {
        layer_error(layer, "declares " + std::to_string(layer.in_features) +
                               " input features but receives " + shape_string(in));
      }
      if (layer.out_features == 0) layer_error(layer, "out_features must be positive");
      return {layer.out_features};
    case LayerKind::Softmax:
      if (in.size() != 1) layer_error(layer, "expects a rank-1 input, got " + shape_string(in));
      return in;
  }
  layer_error(layer, "unknown layer kind");
}

void check_params(const LayerSpec& layer, const LayerParams& p) {
  if (p.weights.shape() != layer.weight_shape()) {
    layer_error(layer, "weight tensor " + shape_string(p.weights.shape()) +
                           " does not match declared " + shape_string(layer.weight_shape()));
  }
  if (p.bias.shape() != layer.bias_shape()) {
    layer_error(layer, "bias tensor " + shape_string(p.bias.shape()) +
                           " does not match declared " + shape_string(layer.bias_shape()));
  }
}

}  // namespace

NetworkModel NetworkModel::create(std::vector<LayerSpec> layers,
                                  std::map<std::string, LayerParams> params, Shape input_shape,
                                  std::vector<std::string> class_labels, std::string id) {
  if (input_shape.size() != 3 || shape_size(input_shape) == 0) {
    throw InvalidInput("model input shape must be H x W x C with positive sizes, got " +
                       shape_string(input_shape));
  }
  if (layers.size() < 2 || layers.back().kind != LayerKind::Softmax ||
      layers[layers.size() - 2].kind != LayerKind::Dense) {
    throw InvalidInput("model must end with a Dense layer followed by Softmax");
  }

  std::set<std::string> names;
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape current = input_shape;
  std::size_t parameterized = 0;
  for (const auto& layer : layers) {
    if (layer.name.empty()) throw InvalidInput("layer names must be non-empty");
    if (!names.insert(layer.name).second) {
      throw InvalidInput("duplicate layer name '" + layer.name + "'");
    }
    if (layer.has_params()) {
      const auto it = params.find(layer.name);
      if (it == params.end()) layer_error(layer, "missing weight and bias tensors");
      check_params(layer, it->second);
      ++parameterized;
    }
    current = propagate_shape(layer, current);
    shapes.push_back(current);
  }
  if (parameterized != params.size()) {
    throw InvalidInput("parameter map holds tensors for layers that take no parameters");
  }
  const auto& readout = layers[layers.size() - 2];
  if (class_labels.size() != readout.out_features) {
    throw InvalidInput("model has " + std::to_string(class_labels.size()) +
                       " class labels but the readout produces " +
                       std::to_string(readout.out_features) + " logits");
  }

  NetworkModel model;
  model.layers_ = std::move(layers);
  model.params_ = std::move(params);
  model.input_shape_ = std::move(input_shape);
  model.class_labels_ = std::move(class_labels);
  model.id_ = std::move(id);
  model.output_shapes_ = std::move(shapes);
  return model;
}

const LayerParams& NetworkModel::params(const std::string& layer_name) const {
  const auto it = params_.find(layer_name);
  if (it == params_.end()) throw InvalidInput("layer '" + layer_name + "' has no parameters");
  return it->second;
}

const Shape& NetworkModel::layer_input_shape(std::size_t layer_index) const {
  return layer_index == 0 ? input_shape_ : output_shapes_.at(layer_index - 1);
}

NetworkModel NetworkModel::with_id(std::string id) const {
  NetworkModel copy = *this;
  copy.id_ = std::move(id);
  return copy;
}

namespace {

struct LayerOutput {
  Tensor output;
  std::vector<std::size_t> winners;
};

LayerOutput run_layer(const NetworkModel& model, const LayerSpec& layer, const Tensor& in) {
  try {
    switch (layer.kind) {
      case LayerKind::Conv2D: {
        const auto& p = model.params(layer.name);
        return {conv2d_forward(in, p.weights, p.bias, layer.stride, layer.padding), {}};
      }
      case LayerKind::MaxPool2x2: {
        auto pooled = maxpool2x2_forward(in);
        return {std::move(pooled.output), std::move(pooled.winners)};
      }
      case LayerKind::ReLU: return {relu(in), {}};
      case LayerKind::Flatten: return {in.reshaped({in.size()}), {}};
      case LayerKind::Dense: {
        const auto& p = model.params(layer.name);
        return {dense_forward(in.reshaped({in.size()}), p.weights, p.bias), {}};
      }
      case LayerKind::Softmax: return {softmax(in), {}};
    }
  } catch (const InvalidInput& e) {
    layer_error(layer, e.what());
  }
  layer_error(layer, "unknown layer kind");
}

void check_image(const NetworkModel& model, const Tensor& image) {
  if (image.shape() != model.input_shape()) {
    throw InvalidInput("image shape " + shape_string(image.shape()) + " does not match model input " +
                       shape_string(model.input_shape()));
  }
}

}  // namespace

ActivationTrace forward(const NetworkModel& model, const Tensor& image) {
  check_image(model, image);
  ActivationTrace trace;
  trace.layers.reserve(model.layers().size());
  Tensor current = image;
  for (const auto& layer : model.layers()) {
    auto result = run_layer(model, layer, current);
    if (layer.kind == LayerKind::Softmax) trace.logits = current;
    trace.layers.push_back(
        LayerActivation{layer.name, std::move(current), result.output, std::move(result.winners)});
    current = std::move(result.output);
  }
  trace.probabilities = std::move(current);
  trace.predicted_class = argmax(trace.logits);
  return trace;
}

Tensor penultimate_features(const NetworkModel& model, const Tensor& image) {
  check_image(model, image);
  Tensor current = image;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < model.readout_index(); ++i) {
    current = run_layer(model, layers[i], current).output;
  }
  return current;
}

}  // namespace relprop
