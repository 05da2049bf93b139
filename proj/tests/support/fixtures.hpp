#pragma once
// Shared fixtures and independent reference implementations for the tests.
// The oracles here are deliberately naive (nested loops, explicit matrices,
// double precision throughout) and share no code with the library kernels.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relprop/finetune.hpp"
#include "relprop/lrp.hpp"
#include "relprop/network.hpp"
#include "relprop/rng.hpp"
#include "relprop/tensor.hpp"

namespace relprop::testing {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);
std::vector<double> as_doubles(const Tensor& t);

/// 8x8x1 -> conv 3x3x1x2 -> ReLU -> maxpool -> flatten -> dense(3) -> softmax.
NetworkModel toynet(std::uint64_t seed, bool with_bias = true, bool zero_bias = false);

/// Random small CNN: one or two conv blocks (optional pooling), flatten, an
/// optional hidden dense layer and the readout. At most 5 parameterized or
/// pooling layers. Biases are zero when bias_free.
NetworkModel random_cnn(Rng& rng, bool bias_free);

/// Single Dense (in -> out) + Softmax model over an 1 x 1 x in input.
NetworkModel linear_model(Rng& rng, std::size_t in, std::size_t out, bool bias_free);

// ---- oracles --------------------------------------------------------------

/// Direct six-loop cross-correlation in double.
std::vector<double> conv_oracle(const Tensor& input, const Tensor& weights, const Tensor& bias,
                                std::size_t stride, Padding padding);

/// Explicit (out x in) matrix of the conv's linear part, in double.
struct ConvMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> m;
};
ConvMatrix conv_matrix(const Shape& input_shape, const Tensor& weights, std::size_t stride,
                       Padding padding);

/// Bias expanded to one entry per conv output element.
Tensor conv_bias_vector(const Shape& output_shape, const Tensor& bias);

/// Window-scan max pooling oracle: (values, winners).
std::pair<std::vector<double>, std::vector<std::size_t>> pool_oracle(const Tensor& input);

/// Straight-line forward pass in double (no library kernels).
std::vector<double> forward_oracle(const NetworkModel& model, const Tensor& image);

/// Zero-rule LRP (winner-take-all pooling) in double via explicit matrices;
/// returns the per-pixel channel sums.
std::vector<double> zero_rule_lrp_oracle(const NetworkModel& model, const Tensor& image,
                                         std::size_t target);

// ---- toy classification task ---------------------------------------------

/// 16 x 16 x 1 images with a bright 4 x 4 patch in one of four quadrants
/// (the class) over dim noise. Classes are balanced: item i has class i % 4.
struct ToyTask {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_labels;
};
ToyTask make_toy_task(std::size_t count, std::uint64_t seed);

/// Frozen feature extractor for the toy task: fixed conv filters, ReLU,
/// pooling and a random 4-way readout.
NetworkModel toy_backbone();

/// Readout finetuned on a fresh toy training set.
struct TrainedToy {
  NetworkModel model;
  finetune::History history;
};
TrainedToy train_toy_model(std::uint64_t init_seed, std::uint64_t data_seed);

/// On-disk corpus for command-line runs: toy images as PGM files, a
/// `path,label` manifest per task ("quadrant" with q0..q3 and "side" with
/// left/right), NNWB models with fresh readouts and a registry listing them.
/// With multi_task the registry covers 2 pretrains x 2 tasks x 2 seeds;
/// otherwise 2 quadrant models with different seeds.
struct ToyCorpus {
  std::filesystem::path registry;
  std::filesystem::path quadrant_manifest;
  std::filesystem::path side_manifest;
  std::vector<std::filesystem::path> images;
  std::vector<std::filesystem::path> models;
};
ToyCorpus write_toy_corpus(const std::filesystem::path& dir, std::size_t images, bool multi_task);

// ---- filesystem ------------------------------------------------------------

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace relprop::testing
