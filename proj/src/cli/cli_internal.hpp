#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "relprop/finetune.hpp"
#include "relprop/lrp.hpp"
#include "relprop/network.hpp"
#include "relprop/occlusion.hpp"

namespace relprop::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view tool_version();

// ---- run manifest ---------------------------------------------------------

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

/// manifest.json written next to a command's outputs. Inputs are keyed by
/// the path as given on the command line; no timestamps or host details, so
/// identical runs produce identical manifests.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)) {}

  void option(const std::string& key, json value) { options_[key] = std::move(value); }
  void seed(const std::string& key, std::uint64_t value) { seeds_[key] = value; }
  void input(const fs::path& path);
  void warning(std::string text) { warnings_.push_back(std::move(text)); }

  json to_json() const;
  void write(const fs::path& out_dir) const;

 private:
  std::string command_;
  json options_ = json::object();
  json seeds_ = json::object();
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> warnings_;
};

// ---- report writers -------------------------------------------------------

/// Shortest text that reads back to the same double.
std::string format_number(double value);

void write_text(const fs::path& path, std::string_view text);
/// Pretty-printed, newline-terminated.
void write_json(const fs::path& path, const json& value);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& fields);
  const std::string& text() const { return text_; }

 private:
  std::size_t width_;
  std::string text_;
};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Line chart with axes, one polyline per series; x and y ranges fixed by
/// the caller.
std::string line_chart_svg(const std::string& title, const std::vector<Series>& series,
                           std::pair<double, double> x_range, std::pair<double, double> y_range,
                           const std::string& x_label, const std::string& y_label);

/// Square matrix heatmap for values in [-1, 1].
std::string heatmap_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<double>& values);

// ---- inputs ---------------------------------------------------------------

struct RegistryEntry {
  std::string model_id;
  occlusion::ModelDescriptor descriptor;
  fs::path weights_path;  // resolved against the registry's directory
};

std::vector<RegistryEntry> load_registry(const fs::path& path);

/// Mean-subtraction vector for a model: the explicit list if given (length
/// must equal the channel count), otherwise ImageNet RGB means for 3-channel
/// inputs and zeros for anything else.
Tensor channel_means(const std::vector<float>& explicit_means, std::size_t channels);

/// Loads a PGM, checks its size against the model input, replicates it
/// across channels and subtracts the means.
Tensor load_input_image(const fs::path& path, const Shape& input_shape, const Tensor& means);

/// Image paths from a mix of PGM files and `path,label` manifests.
std::vector<std::string> expand_image_args(const std::vector<std::string>& args);

/// `task=manifest.csv` pairs; a bare manifest path applies to every task
/// (stored under the empty key).
std::map<std::string, fs::path> parse_dataset_args(const std::vector<std::string>& args);

occlusion::MaskSchedule parse_schedule(const std::string& text);
lrp::Rule parse_rule(const std::string& text);

// ---- commands -------------------------------------------------------------

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t threads = 1;
};

struct LrpOptions {
  std::string uniform_rule;  // empty: depth-dependent composite
  double conv_epsilon = 0.25;
  double conv_gamma = 0.25;
  double dense_epsilon = 1e-9;
  double lower_fraction = 0.5;
  std::optional<double> zbox_low;
  std::optional<double> zbox_high;

  lrp::CompositeConfig resolve(const Tensor& means) const;
  void record(RunManifest& manifest, const lrp::CompositeConfig& resolved) const;
};

struct ForwardOptions {
  CommonOptions common;
  std::string model;
  std::vector<std::string> images;
  std::vector<float> means;
};

struct RelevanceOptions {
  CommonOptions common;
  std::string model;
  std::vector<std::string> images;
  std::string target;  // class label or index; empty: predicted class
  std::vector<float> means;
  LrpOptions lrp;
  bool render = false;
  bool raw = false;
};

struct FinetuneOptions {
  CommonOptions common;
  std::string model;
  std::string manifest;
  std::string model_id;
  std::size_t epochs = 25;
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  std::optional<std::uint64_t> init_seed;
  std::optional<std::uint64_t> split_seed;
  std::vector<float> means;
  bool no_cache = false;
  bool topology_json = false;
};

struct SweepOptions {
  CommonOptions common;
  std::string registry;
  std::vector<std::string> datasets;
  std::string schedule = "log";
  std::size_t samples_per_bin = 100;
  float fill_value = 0.0f;
  std::vector<float> means;
  LrpOptions lrp;
};

struct SimilarityOptions {
  CommonOptions common;
  std::string registry;
  std::vector<std::string> datasets;
  std::vector<float> means;
  LrpOptions lrp;
};

struct Rank2Options {
  CommonOptions common;
  std::string model_a;
  std::string model_b;
  std::vector<std::string> images;
  std::string human;
  std::vector<float> means;
};

struct StatsOptions {
  CommonOptions common;
  std::string input;
  std::string design = "two-way";
};

void run_forward(const ForwardOptions& o);
void run_relevance(const RelevanceOptions& o);
void run_finetune(const FinetuneOptions& o);
void run_sweep(const SweepOptions& o);
void run_similarity(const SimilarityOptions& o);
void run_rank2(const Rank2Options& o);
void run_stats(const StatsOptions& o);

}  // namespace relprop::cli
