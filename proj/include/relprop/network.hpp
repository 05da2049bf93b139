#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "relprop/kernels.hpp"
#include "relprop/tensor.hpp"

namespace relprop {

// Numeric values are the NNWB kind tags.
enum class LayerKind : std::uint8_t {
  Conv2D = 1,
  MaxPool2x2 = 2,
  ReLU = 3,
  Flatten = 4,
  Dense = 5,
  Softmax = 6,
};

enum class Padding : std::uint8_t { Valid = 0, Same = 1 };

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);
std::string_view padding_name(Padding padding);
Padding parse_padding(std::string_view name);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::ReLU;

  // Conv2D
  std::uint32_t kernel_h = 0;
  std::uint32_t kernel_w = 0;
  std::uint32_t in_channels = 0;
  std::uint32_t out_channels = 0;
  std::uint32_t stride = 1;
  Padding padding = Padding::Valid;

  // Dense (flattens its input; in_features is the element count)
  std::uint32_t in_features = 0;
  std::uint32_t out_features = 0;

  static LayerSpec conv2d(std::string name, std::uint32_t kernel_h, std::uint32_t kernel_w,
                          std::uint32_t in_channels, std::uint32_t out_channels,
                          std::uint32_t stride = 1, Padding padding = Padding::Valid);
  static LayerSpec dense(std::string name, std::uint32_t in_features,
                         std::uint32_t out_features);
  static LayerSpec maxpool(std::string name);
  static LayerSpec relu(std::string name);
  static LayerSpec flatten(std::string name);
  static LayerSpec softmax(std::string name);

  bool has_params() const { return kind == LayerKind::Conv2D || kind == LayerKind::Dense; }
  /// Conv2D: kh x kw x Cin x Cout. Dense: out x in (row k feeds output k).
  Shape weight_shape() const;
  Shape bias_shape() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct LayerParams {
  Tensor weights;
  Tensor bias;
};

/// A validated, immutable network. The only way to obtain one is create(),
/// which checks the shape chain, the parameter declarations and the
/// Dense -> Softmax tail, so every NetworkModel in existence can run forward.
class NetworkModel {
 public:
  /// input_shape is H x W x C.
  static NetworkModel create(std::vector<LayerSpec> layers,
                             std::map<std::string, LayerParams> params, Shape input_shape,
                             std::vector<std::string> class_labels, std::string id = {});

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::map<std::string, LayerParams>& all_params() const noexcept { return params_; }
  const LayerParams& params(const std::string& layer_name) const;
  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<std::string>& class_labels() const noexcept { return class_labels_; }
  std::size_t num_classes() const noexcept { return class_labels_.size(); }
  const std::string& id() const noexcept { return id_; }
  /// Shape produced by layer i.
  const Shape& output_shape(std::size_t layer_index) const {
    return output_shapes_.at(layer_index);
  }
  const Shape& layer_input_shape(std::size_t layer_index) const;
  /// Index of the final Dense layer whose output is the logit vector.
  std::size_t readout_index() const noexcept { return layers_.size() - 2; }

  NetworkModel with_id(std::string id) const;

 private:
  NetworkModel() = default;

  std::vector<LayerSpec> layers_;
  std::map<std::string, LayerParams> params_;
  Shape input_shape_;
  std::vector<std::string> class_labels_;
  std::string id_;
  std::vector<Shape> output_shapes_;
};

struct LayerActivation {
  std::string name;
  Tensor input;
  Tensor output;
  /// MaxPool2x2 only: flat input index of each output cell's maximum.
  std::vector<std::size_t> winners;
};

struct ActivationTrace {
  std::vector<LayerActivation> layers;
  Tensor logits;
  Tensor probabilities;
  std::size_t predicted_class = 0;
};

kernels::ConvGeometry conv_geometry(const Shape& input_shape, std::size_t kernel_h,
                                    std::size_t kernel_w, std::size_t out_channels,
                                    std::size_t stride, Padding padding);

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      std::size_t stride, Padding padding);

struct PoolResult {
  Tensor output;
  std::vector<std::size_t> winners;
};

/// 2x2 / stride 2 max pooling; odd edges pool over the partial window.
PoolResult maxpool2x2_forward(const Tensor& input);

Tensor relu(const Tensor& t);
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
/// Max-shifted softmax evaluated in double.
Tensor softmax(const Tensor& logits);

ActivationTrace forward(const NetworkModel& model, const Tensor& image);

/// Activation entering the readout layer (the penultimate feature vector).
Tensor penultimate_features(const NetworkModel& model, const Tensor& image);

/// output[h, w, c] = input[h, w, c] - channel_means[c].
Tensor preprocess(const Tensor& image, const Tensor& channel_means);

/// Repeats a single-channel H x W x 1 image across `channels` channels.
Tensor replicate_channels(const Tensor& gray, std::size_t channels);

}  // namespace relprop
