#include <algorithm>
#include <cmath>
#include <limits>

#include "relprop/error.hpp"
#include "relprop/network.hpp"

namespace relprop {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::MaxPool2x2: return "MaxPool2x2";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Softmax: return "Softmax";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (auto kind : {LayerKind::Conv2D, LayerKind::MaxPool2x2, LayerKind::ReLU,
                    LayerKind::Flatten, LayerKind::Dense, LayerKind::Softmax}) {
    if (layer_kind_name(kind) == name) return kind;
  }
  throw InvalidInput("unknown layer kind '" + std::string(name) + "'");
}

std::string_view padding_name(Padding padding) {
  return padding == Padding::Same ? "same" : "valid";
}

Padding parse_padding(std::string_view name) {
  if (name == "valid") return Padding::Valid;
  if (name == "same") return Padding::Same;
  throw InvalidInput("unknown padding '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv2d(std::string name, std::uint32_t kernel_h, std::uint32_t kernel_w,
                            std::uint32_t in_channels, std::uint32_t out_channels,
                            std::uint32_t stride, Padding padding) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Conv2D;
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::dense(std::string name, std::uint32_t in_features,
                           std::uint32_t out_features) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Dense;
  s.in_features = in_features;
  s.out_features = out_features;
  return s;
}

namespace {
LayerSpec plain(std::string name, LayerKind kind) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = kind;
  return s;
}
}  // namespace

LayerSpec LayerSpec::maxpool(std::string name) { return plain(std::move(name), LayerKind::MaxPool2x2); }
LayerSpec LayerSpec::relu(std::string name) { return plain(std::move(name), LayerKind::ReLU); }
LayerSpec LayerSpec::flatten(std::string name) { return plain(std::move(name), LayerKind::Flatten); }
LayerSpec LayerSpec::softmax(std::string name) { return plain(std::move(name), LayerKind::Softmax); }

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::Conv2D: return {kernel_h, kernel_w, in_channels, out_channels};
    case LayerKind::Dense: return {out_features, in_features};
    default: return {};
  }
}

Shape LayerSpec::bias_shape() const {
  switch (kind) {
    case LayerKind::Conv2D: return {out_channels};
    case LayerKind::Dense: return {out_features};
    default: return {};
  }
}

kernels::ConvGeometry conv_geometry(const Shape& input_shape, std::size_t kernel_h,
                                    std::size_t kernel_w, std::size_t out_channels,
                                    std::size_t stride, Padding padding) {
  if (input_shape.size() != 3) {
    throw InvalidInput("conv2d expects an H x W x C input, got " + shape_string(input_shape));
  }
  if (stride < 1) throw InvalidInput("conv2d stride must be at least 1");
  if (kernel_h < 1 || kernel_w < 1 || out_channels < 1) {
    throw InvalidInput("conv2d kernel dimensions must be positive");
  }
  kernels::ConvGeometry g;
  g.in_h = input_shape[0];
  g.in_w = input_shape[1];
  g.in_c = input_shape[2];
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.out_c = out_channels;
  g.stride = stride;
  if (padding == Padding::Valid) {
    if (kernel_h > g.in_h || kernel_w > g.in_w) {
      throw InvalidInput("conv2d kernel " + std::to_string(kernel_h) + "x" +
                         std::to_string(kernel_w) + " larger than input " +
                         shape_string(input_shape));
    }
    g.out_h = (g.in_h - kernel_h) / stride + 1;
    g.out_w = (g.in_w - kernel_w) / stride + 1;
  } else {
    g.out_h = (g.in_h + stride - 1) / stride;
    g.out_w = (g.in_w + stride - 1) / stride;
    const std::size_t need_h = (g.out_h - 1) * stride + kernel_h;
    const std::size_t need_w = (g.out_w - 1) * stride + kernel_w;
    const std::size_t pad_h = need_h > g.in_h ? need_h - g.in_h : 0;
    const std::size_t pad_w = need_w > g.in_w ? need_w - g.in_w : 0;
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  }
  return g;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      std::size_t stride, Padding padding) {
  if (weights.rank() != 4) throw InvalidInput("conv2d weights must be kh x kw x Cin x Cout");
  const auto g = conv_geometry(input.shape(), weights.dim(0), weights.dim(1), weights.dim(3),
                               stride, padding);
  if (weights.dim(2) != g.in_c) {
    throw InvalidInput("conv2d weights expect " + std::to_string(weights.dim(2)) +
                       " input channels, input has " + std::to_string(g.in_c));
  }
  if (bias.shape() != Shape{g.out_c}) throw InvalidInput("conv2d bias length mismatch");

  std::vector<double> acc(g.output_size());
  kernels::conv2d(g, input.values(), weights.values(), acc);
  std::vector<float> out(acc.size());
  const auto b = bias.values();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out[i] = static_cast<float>(acc[i] + static_cast<double>(b[i % g.out_c]));
  }
  return Tensor({g.out_h, g.out_w, g.out_c}, std::move(out));
}

PoolResult maxpool2x2_forward(const Tensor& input) {
  if (input.rank() != 3) {
    throw InvalidInput("maxpool expects an H x W x C input, got " + shape_string(input.shape()));
  }
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  const auto x = input.values();
  std::vector<float> out(oh * ow * c);
  std::vector<std::size_t> winners(out.size());
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        // Row-major scan with strict '>' keeps the lowest flat index on ties.
        std::size_t best = ((2 * oy) * w + 2 * ox) * c + ch;
        for (std::size_t dy = 0; dy < 2 && 2 * oy + dy < h; ++dy) {
          for (std::size_t dx = 0; dx < 2 && 2 * ox + dx < w; ++dx) {
            const std::size_t idx = ((2 * oy + dy) * w + (2 * ox + dx)) * c + ch;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (oy * ow + ox) * c + ch;
        out[o] = x[best];
        winners[o] = best;
      }
    }
  }
  return {Tensor({oh, ow, c}, std::move(out)), std::move(winners)};
}

Tensor relu(const Tensor& t) {
  std::vector<float> out(t.values().begin(), t.values().end());
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  return Tensor(t.shape(), std::move(out));
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 1) {
    throw InvalidInput("dense expects a rank-1 input, got " + shape_string(input.shape()));
  }
  if (weights.rank() != 2 || weights.dim(1) != input.dim(0)) {
    throw InvalidInput("dense weights " + shape_string(weights.shape()) +
                       " do not accept input of length " + std::to_string(input.dim(0)));
  }
  if (bias.shape() != Shape{weights.dim(0)}) throw InvalidInput("dense bias length mismatch");
  std::vector<double> acc(weights.dim(0));
  kernels::matvec(weights.values(), weights.dim(0), weights.dim(1), input.values(), acc);
  std::vector<float> out(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    out[k] = static_cast<float>(acc[k] + static_cast<double>(bias[k]));
  }
  const std::size_t n = out.size();
  return Tensor({n}, std::move(out));
}

Tensor softmax(const Tensor& logits) {
  const auto z = logits.values();
  const double shift = max_value(logits);
  std::vector<double> e(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    e[k] = std::exp(static_cast<double>(z[k]) - shift);
    total += e[k];
  }
  std::vector<float> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = static_cast<float>(e[k] / total);
  return Tensor(logits.shape(), std::move(out));
}

Tensor preprocess(const Tensor& image, const Tensor& channel_means) {
  if (image.rank() != 3) {
    throw InvalidInput("preprocess expects an H x W x C image, got " + shape_string(image.shape()));
  }
  const std::size_t c = image.dim(2);
  if (channel_means.size() != c) {
    throw InvalidInput("preprocess: " + std::to_string(channel_means.size()) +
                       " channel means for an image with " + std::to_string(c) + " channels");
  }
  std::vector<float> out(image.values().begin(), image.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= channel_means[i % c];
  return Tensor(image.shape(), std::move(out));
}

Tensor replicate_channels(const Tensor& gray, std::size_t channels) {
  if (gray.rank() != 3 || gray.dim(2) != 1) {
    throw InvalidInput("replicate_channels expects an H x W x 1 image");
  }
  if (channels == 1) return gray;
  std::vector<float> out;
  out.reserve(gray.size() * channels);
  for (float v : gray.values()) out.insert(out.end(), channels, v);
  return Tensor({gray.dim(0), gray.dim(1), channels}, std::move(out));
}

}  // namespace relprop
