#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relprop/network.hpp"

namespace relprop::finetune {

struct DatasetItem {
  std::string path;
  std::size_t label = 0;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::vector<std::string> class_labels;
  std::uint64_t split_seed = 0;
};

/// Reads a `path,label` manifest. The class vocabulary is the sorted set of
/// distinct labels; relative image paths resolve against the manifest's
/// directory.
Dataset load_manifest(const std::filesystem::path& csv_path, std::uint64_t split_seed = 0);

struct Split {
  Dataset train;
  Dataset val;
};

/// Seeded shuffle, then the first N - floor(N/5) items train and the rest
/// validate. Needs at least 5 items.
Split split_dataset(const Dataset& dataset);

struct TrainConfig {
  std::size_t epochs = 25;
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  std::uint64_t shuffle_seed = 0;
  /// Compute penultimate features once up front instead of re-running the
  /// frozen layers for every minibatch. Results are identical either way.
  bool cache_features = true;

  void validate() const;
};

struct LabeledImages {
  std::vector<Tensor> images;  // preprocessed, model input shape
  std::vector<std::size_t> labels;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation data
  double val_acc = 0.0;
};

struct History {
  std::vector<EpochStats> epochs;
  std::vector<std::string> warnings;
};

struct FinetuneResult {
  NetworkModel model;
  History history;
};

/// Half-width of the uniform readout initialization, sqrt(6 / (fan_in + fan_out)).
double readout_init_bound(std::size_t fan_in, std::size_t fan_out);

/// Swaps the final Dense for a freshly initialized one with one output per
/// label: weights uniform on [-r, r], zero bias. Everything else is copied
/// unchanged.
NetworkModel replace_readout(const NetworkModel& model, std::vector<std::string> class_labels,
                             std::uint64_t init_seed);
NetworkModel replace_readout(const NetworkModel& model, std::size_t num_classes,
                             std::uint64_t init_seed);

/// Minibatch SGD on softmax cross-entropy over the readout only. Aborts with
/// NumericError when the loss stops being finite.
FinetuneResult finetune_readout(const NetworkModel& model, const LabeledImages& train,
                                const LabeledImages& val, const TrainConfig& config,
                                std::size_t threads = 1);

/// Cross-entropy of one example and its gradient with respect to the
/// readout weights (out x in, row-major) and bias.
struct ReadoutGradient {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> bias;
};

ReadoutGradient readout_gradient(const Tensor& weights, const Tensor& bias,
                                 std::span<const float> features, std::size_t label);

}  // namespace relprop::finetune
