#include "fixtures.hpp"

#include "relprop/nnwb.hpp"
#include "relprop/pgm.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace relprop::testing {
namespace fs = std::filesystem;

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<float> v(shape_size(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(shape, std::move(v));
}

std::vector<double> as_doubles(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

namespace {

LayerParams random_params(const LayerSpec& spec, Rng& rng, double scale, bool bias_free) {
  auto w = random_tensor(spec.weight_shape(), rng, -scale, scale);
  auto b = bias_free ? Tensor::zeros(spec.bias_shape())
                     : random_tensor(spec.bias_shape(), rng, -0.1, 0.1);
  return {std::move(w), std::move(b)};
}

std::vector<std::string> numbered_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

struct Geometry {
  std::size_t out_h, out_w, pad_top, pad_left;
};

Geometry geometry(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                  std::size_t stride, Padding padding) {
  if (padding == Padding::Valid) return {(h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0};
  const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  const long th = std::max<long>(static_cast<long>((oh - 1) * stride + kh) - static_cast<long>(h), 0);
  const long tw = std::max<long>(static_cast<long>((ow - 1) * stride + kw) - static_cast<long>(w), 0);
  return {oh, ow, static_cast<std::size_t>(th / 2), static_cast<std::size_t>(tw / 2)};
}

}  // namespace

NetworkModel toynet(std::uint64_t seed, bool with_bias, bool zero_bias) {
  Rng rng(seed);
  std::vector<LayerSpec> layers{LayerSpec::conv2d("conv", 3, 3, 1, 2), LayerSpec::relu("relu"),
                                LayerSpec::maxpool("pool"), LayerSpec::flatten("flat"),
                                LayerSpec::dense("fc", 18, 3), LayerSpec::softmax("prob")};
  std::map<std::string, LayerParams> params;
  for (const auto& l : layers) {
    if (!l.has_params()) continue;
    auto p = random_params(l, rng, 0.5, !with_bias);
    if (zero_bias) p.bias = Tensor::zeros(l.bias_shape());
    params.emplace(l.name, std::move(p));
  }
  return NetworkModel::create(layers, params, {8, 8, 1}, {"a", "b", "c"}, "toynet");
}

NetworkModel random_cnn(Rng& rng, bool bias_free) {
  const std::size_t h = 5 + rng.index(6), w = 5 + rng.index(6), c = 1 + rng.index(3);
  std::vector<LayerSpec> layers;
  std::map<std::string, LayerParams> params;
  Shape shape{h, w, c};

  const std::size_t blocks = 1 + rng.index(2);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::uint32_t k = static_cast<std::uint32_t>(
        1 + rng.index(std::min<std::size_t>(3, std::min(shape[0], shape[1]))));
    const std::uint32_t cout = static_cast<std::uint32_t>(1 + rng.index(4));
    const std::uint32_t stride = static_cast<std::uint32_t>(1 + rng.index(2));
    const Padding pad = rng.index(2) ? Padding::Same : Padding::Valid;
    auto spec = LayerSpec::conv2d("conv" + std::to_string(b), k, k,
                                  static_cast<std::uint32_t>(shape[2]), cout, stride, pad);
    params.emplace(spec.name, random_params(spec, rng, 1.0, bias_free));
    const auto g = geometry(shape[0], shape[1], k, k, stride, pad);
    shape = {g.out_h, g.out_w, cout};
    layers.push_back(spec);
    layers.push_back(LayerSpec::relu("relu" + std::to_string(b)));
    if (b == 0 && rng.index(2) && shape[0] >= 2 && shape[1] >= 2) {
      layers.push_back(LayerSpec::maxpool("pool"));
      shape = {(shape[0] + 1) / 2, (shape[1] + 1) / 2, shape[2]};
    }
  }
  layers.push_back(LayerSpec::flatten("flat"));
  std::uint32_t features = static_cast<std::uint32_t>(shape_size(shape));
  if (blocks == 1 && rng.index(2)) {
    const std::uint32_t hidden = static_cast<std::uint32_t>(2 + rng.index(6));
    auto spec = LayerSpec::dense("hidden", features, hidden);
    params.emplace(spec.name, random_params(spec, rng, 1.0, bias_free));
    layers.push_back(spec);
    layers.push_back(LayerSpec::relu("relu_hidden"));
    features = hidden;
  }
  const std::size_t classes = 2 + rng.index(4);
  auto readout = LayerSpec::dense("readout", features, static_cast<std::uint32_t>(classes));
  params.emplace(readout.name, random_params(readout, rng, 1.0, bias_free));
  layers.push_back(readout);
  layers.push_back(LayerSpec::softmax("prob"));
  return NetworkModel::create(layers, params, {h, w, c}, numbered_labels(classes), "random");
}

NetworkModel linear_model(Rng& rng, std::size_t in, std::size_t out, bool bias_free) {
  std::vector<LayerSpec> layers{
      LayerSpec::flatten("flat"),
      LayerSpec::dense("fc", static_cast<std::uint32_t>(in), static_cast<std::uint32_t>(out)),
      LayerSpec::softmax("prob")};
  std::map<std::string, LayerParams> params;
  params.emplace("fc", random_params(layers[1], rng, 1.0, bias_free));
  return NetworkModel::create(layers, params, {1, in, 1}, numbered_labels(out), "linear");
}

std::vector<double> conv_oracle(const Tensor& input, const Tensor& weights, const Tensor& bias,
                                std::size_t stride, Padding padding) {
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
  const auto g = geometry(h, w, kh, kw, stride, padding);
  std::vector<double> out(g.out_h * g.out_w * cout);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = bias[co];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(g.pad_top);
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(g.pad_left);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) {
              continue;
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
              acc += static_cast<double>(input.at({static_cast<std::size_t>(iy),
                                                   static_cast<std::size_t>(ix), ci})) *
                     static_cast<double>(weights.at({ky, kx, ci, co}));
            }
          }
        }
        out[(oy * g.out_w + ox) * cout + co] = acc;
      }
    }
  }
  return out;
}

ConvMatrix conv_matrix(const Shape& input_shape, const Tensor& weights, std::size_t stride,
                       Padding padding) {
  const std::size_t h = input_shape[0], w = input_shape[1], cin = input_shape[2];
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
  const auto g = geometry(h, w, kh, kw, stride, padding);
  ConvMatrix m;
  m.rows = g.out_h * g.out_w * cout;
  m.cols = h * w * cin;
  m.m.assign(m.rows * m.cols, 0.0);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      for (std::size_t co = 0; co < cout; ++co) {
        const std::size_t row = (oy * g.out_w + ox) * cout + co;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(g.pad_top);
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(g.pad_left);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) {
              continue;
            }
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const std::size_t col = (static_cast<std::size_t>(iy) * w +
                                       static_cast<std::size_t>(ix)) * cin + ci;
              m.m[row * m.cols + col] = weights.at({ky, kx, ci, co});
            }
          }
        }
      }
    }
  }
  return m;
}

Tensor conv_bias_vector(const Shape& output_shape, const Tensor& bias) {
  const std::size_t n = shape_size(output_shape), c = output_shape.back();
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = bias[i % c];
  return Tensor({n}, std::move(v));
}

std::pair<std::vector<double>, std::vector<std::size_t>> pool_oracle(const Tensor& input) {
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  std::vector<double> values(oh * ow * c);
  std::vector<std::size_t> winners(oh * ow * c);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        // Scan candidates in flat-index order so the first maximum wins.
        std::vector<std::size_t> cand;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t y = 2 * oy + dy, x = 2 * ox + dx;
            if (y < h && x < w) cand.push_back((y * w + x) * c + ch);
          }
        }
        std::sort(cand.begin(), cand.end());
        std::size_t best = cand[0];
        for (std::size_t idx : cand) {
          if (input[idx] > input[best]) best = idx;
        }
        const std::size_t o = (oy * ow + ox) * c + ch;
        values[o] = input[best];
        winners[o] = best;
      }
    }
  }
  return {values, winners};
}

std::vector<double> forward_oracle(const NetworkModel& model, const Tensor& image) {
  std::vector<double> a = as_doubles(image);
  Shape shape = image.shape();
  for (const auto& layer : model.layers()) {
    switch (layer.kind) {
      case LayerKind::Conv2D: {
        const auto& p = model.params(layer.name);
        std::vector<float> af(a.begin(), a.end());
        // Re-round to float between layers like any float32 engine.
        a = conv_oracle(Tensor(shape, af), p.weights, p.bias, layer.stride, layer.padding);
        const auto g = geometry(shape[0], shape[1], layer.kernel_h, layer.kernel_w, layer.stride,
                                layer.padding);
        shape = {g.out_h, g.out_w, layer.out_channels};
        for (auto& v : a) v = static_cast<float>(v);
        break;
      }
      case LayerKind::MaxPool2x2: {
        std::vector<float> af(a.begin(), a.end());
        a = pool_oracle(Tensor(shape, af)).first;
        shape = {(shape[0] + 1) / 2, (shape[1] + 1) / 2, shape[2]};
        break;
      }
      case LayerKind::ReLU:
        for (auto& v : a) v = std::max(v, 0.0);
        break;
      case LayerKind::Flatten:
        shape = {a.size()};
        break;
      case LayerKind::Dense: {
        const auto& p = model.params(layer.name);
        std::vector<double> out(layer.out_features);
        for (std::size_t k = 0; k < out.size(); ++k) {
          double acc = p.bias[k];
          for (std::size_t j = 0; j < a.size(); ++j) {
            acc += static_cast<double>(p.weights.at({k, j})) * a[j];
          }
          out[k] = static_cast<float>(acc);
        }
        a = std::move(out);
        shape = {a.size()};
        break;
      }
      case LayerKind::Softmax:
        return a;  // logits
    }
  }
  throw std::logic_error("model has no softmax");
}

std::vector<double> zero_rule_lrp_oracle(const NetworkModel& model, const Tensor& image,
                                         std::size_t target) {
  const auto trace = forward(model, image);
  const auto& layers = model.layers();
  std::vector<double> r(trace.logits.size(), 0.0);
  r[target] = trace.logits[target];

  for (std::size_t i = model.readout_index() + 1; i-- > 0;) {
    const auto& layer = layers[i];
    const auto& act = trace.layers[i];
    const auto a = as_doubles(act.input);
    switch (layer.kind) {
      case LayerKind::Conv2D:
      case LayerKind::Dense: {
        const auto& p = model.params(layer.name);
        std::vector<double> m;
        std::size_t rows = 0, cols = a.size();
        std::vector<double> bias;
        if (layer.kind == LayerKind::Dense) {
          rows = layer.out_features;
          m = as_doubles(p.weights);
          bias = as_doubles(p.bias);
        } else {
          auto cm = conv_matrix(act.input.shape(), p.weights, layer.stride, layer.padding);
          rows = cm.rows;
          m = std::move(cm.m);
          bias = as_doubles(conv_bias_vector(act.output.shape(), p.bias));
        }
        std::vector<double> r_in(cols, 0.0);
        for (std::size_t k = 0; k < rows; ++k) {
          double z = bias[k];
          for (std::size_t j = 0; j < cols; ++j) z += a[j] * m[k * cols + j];
          if (z == 0.0) continue;
          for (std::size_t j = 0; j < cols; ++j) r_in[j] += a[j] * m[k * cols + j] / z * r[k];
        }
        r = std::move(r_in);
        break;
      }
      case LayerKind::MaxPool2x2: {
        std::vector<double> r_in(a.size(), 0.0);
        for (std::size_t o = 0; o < r.size(); ++o) r_in[act.winners[o]] += r[o];
        r = std::move(r_in);
        break;
      }
      default:
        break;  // ReLU, Flatten: relevance passes through
    }
  }
  const auto& in = model.input_shape();
  std::vector<double> pixels(in[0] * in[1], 0.0);
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    for (std::size_t ch = 0; ch < in[2]; ++ch) pixels[p] += r[p * in[2] + ch];
  }
  return pixels;
}

ToyTask make_toy_task(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  ToyTask task;
  task.class_labels = {"q0", "q1", "q2", "q3"};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % 4;
    std::vector<float> px(16 * 16);
    for (auto& v : px) v = static_cast<float>(std::floor(rng.uniform(0.0, 60.0)));
    const std::size_t y0 = (cls / 2) * 8 + rng.index(5);
    const std::size_t x0 = (cls % 2) * 8 + rng.index(5);
    for (std::size_t y = y0; y < y0 + 4; ++y) {
      for (std::size_t x = x0; x < x0 + 4; ++x) {
        px[y * 16 + x] = static_cast<float>(std::floor(rng.uniform(180.0, 255.0)));
      }
    }
    task.images.emplace_back(Shape{16, 16, 1}, std::move(px));
    task.labels.push_back(cls);
  }
  return task;
}

NetworkModel toy_backbone() {
  // Three fixed 3x3 filters: box average, horizontal and vertical edges.
  const float s = 1.0f / (9.0f * 255.0f);
  const float box[9] = {1, 1, 1, 1, 1, 1, 1, 1, 1};
  const float hor[9] = {1, 1, 1, 0, 0, 0, -1, -1, -1};
  const float ver[9] = {1, 0, -1, 1, 0, -1, 1, 0, -1};
  std::vector<float> w(3 * 3 * 1 * 3);
  for (std::size_t k = 0; k < 9; ++k) {
    w[k * 3 + 0] = box[k] * s;
    w[k * 3 + 1] = hor[k] * s;
    w[k * 3 + 2] = ver[k] * s;
  }
  std::vector<LayerSpec> layers{LayerSpec::conv2d("conv1", 3, 3, 1, 3, 1, Padding::Same),
                                LayerSpec::relu("relu1"),
                                LayerSpec::maxpool("pool1"),
                                LayerSpec::maxpool("pool2"),
                                LayerSpec::flatten("flat"),
                                LayerSpec::dense("readout", 48, 4),
                                LayerSpec::softmax("prob")};
  std::map<std::string, LayerParams> params;
  params.emplace("conv1", LayerParams{Tensor({3, 3, 1, 3}, std::move(w)),
                                      Tensor({3}, {-0.1f, 0.0f, 0.0f})});
  params.emplace("readout", LayerParams{Tensor::zeros({4, 48}), Tensor::zeros({4})});
  return NetworkModel::create(layers, params, {16, 16, 1}, {"q0", "q1", "q2", "q3"}, "backbone");
}

TrainedToy train_toy_model(std::uint64_t init_seed, std::uint64_t data_seed) {
  auto base = finetune::replace_readout(toy_backbone(), {"q0", "q1", "q2", "q3"}, init_seed)
                  .with_id("toy-" + std::to_string(init_seed));
  const auto train = make_toy_task(160, data_seed);
  const auto val = make_toy_task(40, data_seed + 1000);
  finetune::TrainConfig config;
  config.learning_rate = 0.5;
  config.batch_size = 8;
  config.shuffle_seed = init_seed;
  auto result = finetune::finetune_readout(base, {train.images, train.labels},
                                           {val.images, val.labels}, config);
  return {std::move(result.model), std::move(result.history)};
}

ToyCorpus write_toy_corpus(const fs::path& dir, std::size_t images, bool multi_task) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "models");
  const auto task = make_toy_task(images, 4242);
  ToyCorpus out;
  std::string quadrant = "path,label\n", side = "path,label\n";
  for (std::size_t i = 0; i < images; ++i) {
    const auto name = "img" + std::to_string(100 + i) + ".pgm";
    pgm::save(task.images[i].reshaped({16, 16}), dir / "images" / name);
    out.images.push_back(dir / "images" / name);
    quadrant += "images/" + name + "," + task.class_labels[task.labels[i]] + "\n";
    side += "images/" + name + "," + (task.labels[i] % 2 == 0 ? "left" : "right") + "\n";
  }
  out.quadrant_manifest = dir / "quadrant.csv";
  out.side_manifest = dir / "side.csv";
  write_text_file(out.quadrant_manifest, quadrant);
  write_text_file(out.side_manifest, side);

  struct Entry {
    std::string pretrain, task;
    std::uint64_t seed;
  };
  std::vector<Entry> entries;
  if (multi_task) {
    for (std::string p : {"alpha", "beta"})
      for (std::string t : {"quadrant", "side"})
        for (std::uint64_t s : {1, 2}) entries.push_back({p, t, s});
  } else {
    entries = {{"alpha", "quadrant", 1}, {"alpha", "quadrant", 2}};
  }

  std::string registry = "[\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto id = e.pretrain + "-" + e.task + "-" + std::to_string(e.seed);
    const std::vector<std::string> labels =
        e.task == "quadrant" ? task.class_labels : std::vector<std::string>{"left", "right"};
    // The pretrain name salts the readout seed so the two pretrains differ.
    const std::uint64_t salt = e.pretrain == "alpha" ? 0 : 1000;
    const auto model = finetune::replace_readout(toy_backbone(), labels, e.seed + salt);
    const auto file = dir / "models" / (id + ".nnwb");
    nnwb::save_weights(model, file);
    out.models.push_back(file);
    registry += "  {\"model_id\": \"" + id + "\", \"pretrain\": \"" + e.pretrain +
                "\", \"task\": \"" + e.task + "\", \"init_seed\": " + std::to_string(e.seed) +
                ", \"weights_path\": \"models/" + id + ".nnwb\"}" +
                (i + 1 < entries.size() ? ",\n" : "\n");
  }
  registry += "]\n";
  out.registry = dir / "registry.json";
  write_text_file(out.registry, registry);
  return out;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("relprop-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace relprop::testing
