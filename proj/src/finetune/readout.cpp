#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "relprop/error.hpp"
#include "relprop/finetune.hpp"
#include "relprop/kernels.hpp"
#include "relprop/parallel.hpp"
#include "relprop/rng.hpp"

namespace relprop::finetune {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidInput("epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("learning rate must be a finite non-negative number");
  }
  if (batch_size < 1) throw InvalidInput("batch size must be at least 1");
}

double readout_init_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

NetworkModel replace_readout(const NetworkModel& model, std::vector<std::string> class_labels,
                             std::uint64_t init_seed) {
  if (class_labels.size() < 2) throw InvalidInput("a readout needs at least 2 classes");
  auto layers = model.layers();
  auto params = model.all_params();
  auto& readout = layers[model.readout_index()];
  readout.out_features = static_cast<std::uint32_t>(class_labels.size());

  const std::size_t fan_in = readout.in_features;
  const std::size_t fan_out = readout.out_features;
  const double r = readout_init_bound(fan_in, fan_out);
  Rng rng(init_seed);
  std::vector<float> w(fan_in * fan_out);
  for (auto& v : w) v = static_cast<float>(rng.uniform(-r, r));
  params[readout.name] = LayerParams{Tensor({fan_out, fan_in}, std::move(w)),
                                     Tensor::zeros({fan_out})};
  return NetworkModel::create(std::move(layers), std::move(params), model.input_shape(),
                              std::move(class_labels), model.id());
}

NetworkModel replace_readout(const NetworkModel& model, std::size_t num_classes,
                             std::uint64_t init_seed) {
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < num_classes; ++k) labels.push_back(std::to_string(k));
  return replace_readout(model, std::move(labels), init_seed);
}

namespace {

struct Readout {
  std::size_t classes = 0;
  std::size_t features = 0;
  std::vector<float> w;  // classes x features
  std::vector<float> b;
};

// Logits in double plus the softmax probabilities; returns the loss.
double example_terms(const Readout& r, std::span<const float> h, std::size_t label,
                     std::vector<double>& z, std::vector<double>& p) {
  z.resize(r.classes);
  p.resize(r.classes);
  kernels::matvec(r.w, r.classes, r.features, h, z);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < r.classes; ++k) {
    z[k] += static_cast<double>(r.b[k]);
    peak = std::max(peak, z[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < r.classes; ++k) {
    p[k] = std::exp(z[k] - peak);
    total += p[k];
  }
  for (auto& v : p) v /= total;
  return std::log(total) + peak - z[label];
}

void accumulate_gradient(const Readout& r, std::span<const float> h, std::size_t label,
                         const std::vector<double>& p, std::vector<double>& gw,
                         std::vector<double>& gb) {
  for (std::size_t k = 0; k < r.classes; ++k) {
    const double d = p[k] - (k == label ? 1.0 : 0.0);
    gb[k] += d;
    double* row = gw.data() + k * r.features;
    for (std::size_t j = 0; j < r.features; ++j) row[j] += d * static_cast<double>(h[j]);
  }
}

struct Metrics {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double acc = std::numeric_limits<double>::quiet_NaN();
};

Metrics evaluate(const Readout& r, const std::vector<Tensor>& features,
                 const std::vector<std::size_t>& labels) {
  if (features.empty()) return {};
  std::vector<double> z, p;
  std::vector<float> logits(r.classes);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    loss += example_terms(r, features[i].values(), labels[i], z, p);
    // Same float rounding as the model's own forward pass.
    for (std::size_t k = 0; k < r.classes; ++k) logits[k] = static_cast<float>(z[k]);
    if (argmax(logits) == labels[i]) ++correct;
  }
  const auto n = static_cast<double>(features.size());
  return {loss / n, static_cast<double>(correct) / n};
}

std::vector<Tensor> compute_features(const NetworkModel& model, const std::vector<Tensor>& images,
                                     std::size_t threads) {
  std::vector<Tensor> out(images.size());
  parallel_for(images.size(), threads,
               [&](std::size_t i) { out[i] = penultimate_features(model, images[i]); });
  return out;
}

void check_labels(const LabeledImages& set, std::size_t classes, const char* which) {
  if (set.images.size() != set.labels.size()) {
    throw InvalidInput(std::string(which) + " set has mismatched image and label counts");
  }
  for (auto l : set.labels) {
    if (l >= classes) {
      throw InvalidInput(std::string(which) + " label " + std::to_string(l) +
                         " out of range for " + std::to_string(classes) + " classes");
    }
  }
}

}  // namespace

ReadoutGradient readout_gradient(const Tensor& weights, const Tensor& bias,
                                 std::span<const float> features, std::size_t label) {
  if (weights.rank() != 2 || weights.dim(1) != features.size() ||
      bias.shape() != Shape{weights.dim(0)} || label >= weights.dim(0)) {
    throw InvalidInput("readout_gradient: inconsistent shapes or label");
  }
  Readout r{weights.dim(0), weights.dim(1),
            {weights.values().begin(), weights.values().end()},
            {bias.values().begin(), bias.values().end()}};
  std::vector<double> z, p;
  ReadoutGradient g;
  g.loss = example_terms(r, features, label, z, p);
  g.weights.assign(r.classes * r.features, 0.0);
  g.bias.assign(r.classes, 0.0);
  accumulate_gradient(r, features, label, p, g.weights, g.bias);
  return g;
}

FinetuneResult finetune_readout(const NetworkModel& model, const LabeledImages& train,
                                const LabeledImages& val, const TrainConfig& config,
                                std::size_t threads) {
  config.validate();
  if (train.images.empty()) throw InvalidInput("finetuning needs at least one training image");
  const std::size_t classes = model.num_classes();
  check_labels(train, classes, "training");
  check_labels(val, classes, "validation");

  History history;
  {
    std::vector<bool> seen(classes, false);
    for (auto l : train.labels) seen[l] = true;
    for (std::size_t k = 0; k < classes; ++k) {
      if (!seen[k]) {
        history.warnings.push_back("class '" + model.class_labels()[k] +
                                   "' has no examples in the training split");
      }
    }
  }

  const auto& readout_spec = model.layers()[model.readout_index()];
  const auto& start = model.params(readout_spec.name);
  Readout r{classes, readout_spec.in_features,
            {start.weights.values().begin(), start.weights.values().end()},
            {start.bias.values().begin(), start.bias.values().end()}};

  const auto train_features = compute_features(model, train.images, threads);
  const auto val_features = compute_features(model, val.images, threads);

  Rng rng(config.shuffle_seed);
  std::vector<std::size_t> order(train.images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> gw(r.w.size()), gb(r.b.size()), z, p;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t idx = order[i];
        const Tensor h = config.cache_features ? train_features[idx]
                                               : penultimate_features(model, train.images[idx]);
        batch_loss += example_terms(r, h.values(), train.labels[idx], z, p);
        accumulate_gradient(r, h.values(), train.labels[idx], p, gw, gb);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch) +
                           " (batch starting at " + std::to_string(begin) + ")");
      }
      const double step = config.learning_rate / static_cast<double>(end - begin);
      for (std::size_t i = 0; i < r.w.size(); ++i) {
        r.w[i] = static_cast<float>(static_cast<double>(r.w[i]) - step * gw[i]);
      }
      for (std::size_t k = 0; k < r.b.size(); ++k) {
        r.b[k] = static_cast<float>(static_cast<double>(r.b[k]) - step * gb[k]);
      }
    }

    const auto tr = evaluate(r, train_features, train.labels);
    const auto va = evaluate(r, val_features, val.labels);
    if (!std::isfinite(tr.loss)) {
      throw NumericError("training loss became non-finite after epoch " + std::to_string(epoch));
    }
    history.epochs.push_back({epoch, tr.loss, tr.acc, va.loss, va.acc});
  }

  auto params = model.all_params();
  params[readout_spec.name] = LayerParams{Tensor({classes, r.features}, std::move(r.w)),
                                          Tensor({classes}, std::move(r.b))};
  auto tuned = NetworkModel::create(model.layers(), std::move(params), model.input_shape(),
                                    model.class_labels(), model.id());
  return {std::move(tuned), std::move(history)};
}

}  // namespace relprop::finetune
