#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relprop/lrp.hpp"
#include "relprop/network.hpp"
#include "relprop/stats.hpp"

namespace relprop::occlusion {

/// Masking levels in percent of pixels, strictly ascending from 0 to 100.
class MaskSchedule {
 public:
  /// 0, 1, 1.78, 3.16, 5.62, 10, 17.8, 31.6, 56.2, 100: roughly
  /// half-decade steps.
  MaskSchedule();
  explicit MaskSchedule(std::vector<double> percentiles);
  /// n + 1 evenly spaced levels 0, 100/n, ..., 100.
  static MaskSchedule linear(std::size_t steps);

  const std::vector<double>& percentiles() const noexcept { return percentiles_; }
  std::size_t size() const noexcept { return percentiles_.size(); }

 private:
  std::vector<double> percentiles_;
};

/// round_half_up(percentile / 100 * pixels).
std::size_t masked_count(double percentile, std::size_t pixels);

/// Pixel indices sorted by descending |relevance|, ties to the lower index.
std::vector<std::size_t> relevance_order(const Tensor& map_values);

/// Replaces the top-|relevance| pixels (in every channel) with fill_value.
Tensor mask_image(const Tensor& image, const lrp::RelevanceMap& map, double percentile,
                  float fill_value = 0.0f);
/// Same, with a precomputed relevance_order.
Tensor mask_image(const Tensor& image, std::span<const std::size_t> order, double percentile,
                  float fill_value = 0.0f);

struct CurvePoint {
  double percentile = 0.0;
  double accuracy = 0.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct MaskingCurve {
  std::vector<CurvePoint> points;
  std::string source_model_id;
  std::string destination_model_id;
  double auc = 0.0;
};

/// Trapezoidal area under accuracy over masked fraction (percentile / 100).
/// Needs 2+ points with strictly increasing percentiles.
double auc(std::span<const CurvePoint> points);

/// Accuracy of `destination` on the images masked by the source maps, one
/// point per schedule level. maps[i] must target labels[i].
MaskingCurve accuracy_curve(const NetworkModel& destination,
                            const std::vector<lrp::RelevanceMap>& source_maps,
                            const std::vector<Tensor>& images,
                            const std::vector<std::size_t>& labels, const MaskSchedule& schedule,
                            float fill_value = 0.0f, std::size_t threads = 1);

/// Baseline map with i.i.d. uniform values, i.e. a random masking order.
lrp::RelevanceMap random_map(std::size_t height, std::size_t width, std::uint64_t seed);

enum class Bin {
  SameInit,
  SameTrainTaskDiffInit,
  SamePretrainDiffTask,
  DiffPretrainSameTask,
  DiffPretrainDiffTask,
};

inline constexpr std::array<Bin, 5> kAllBins = {
    Bin::SameInit, Bin::SameTrainTaskDiffInit, Bin::SamePretrainDiffTask,
    Bin::DiffPretrainSameTask, Bin::DiffPretrainDiffTask};

std::string_view bin_name(Bin bin);

struct ModelDescriptor {
  std::string pretrain;
  std::string task;
  std::uint64_t init_seed = 0;
  friend bool operator==(const ModelDescriptor&, const ModelDescriptor&) = default;
};

Bin classify_pair(const ModelDescriptor& source, const ModelDescriptor& destination);

/// Source draws for every (destination, bin), before any curve is computed.
struct SweepDraw {
  std::size_t destination = 0;
  Bin bin = Bin::SameInit;
  std::size_t source = 0;
};

struct SweepPlan {
  std::vector<SweepDraw> draws;  // (destination, bin, draw) order
  std::vector<std::string> warnings;
};

/// For each destination and bin, samples_per_bin sources drawn uniformly with
/// replacement from the bin-eligible models (the destination itself is its
/// own SameInit source). Empty bins are skipped with a warning.
SweepPlan plan_sweep(const std::vector<std::string>& model_ids,
                     const std::vector<ModelDescriptor>& descriptors,
                     std::size_t samples_per_bin, std::uint64_t seed);

struct RegistryModel {
  std::string model_id;
  ModelDescriptor descriptor;
  NetworkModel model;
};

struct ComparisonRecord {
  Bin bin = Bin::SameInit;
  std::string source_id;
  ModelDescriptor source;
  std::string destination_id;
  ModelDescriptor destination;
  MaskingCurve curve;
};

struct SweepConfig {
  MaskSchedule schedule;
  std::size_t samples_per_bin = 100;
  std::uint64_t seed = 0;
  lrp::CompositeConfig lrp;
  float fill_value = 0.0f;
  std::size_t threads = 1;
};

struct SweepResult {
  std::vector<ComparisonRecord> records;
  std::vector<std::string> warnings;
};

/// Images are shared (preprocessed); labels_for(task) gives the true labels
/// for a task. Source maps target the source task's labels; accuracy is
/// scored against the destination task's labels.
using LabelLookup = std::function<const std::vector<std::size_t>&(const std::string& task)>;

SweepResult cross_model_sweep(const std::vector<RegistryModel>& models,
                              const std::vector<Tensor>& images, const LabelLookup& labels_for,
                              const SweepConfig& config);

/// Largest logit other than `excluded`, ties to the lower index.
std::size_t rank2_choice(std::span<const float> logits, std::size_t excluded);

struct Rank2Disagreement {
  std::size_t image = 0;
  std::size_t rank2_a = 0;
  std::size_t rank2_b = 0;
};

/// Images where the two models' second choices (after their own top class)
/// differ.
std::vector<Rank2Disagreement> rank2_disagreement(const NetworkModel& a, const NetworkModel& b,
                                                  const std::vector<Tensor>& images,
                                                  std::size_t threads = 1);

struct HumanChoice {
  std::string subject;
  std::string image;
  bool chose_a = false;
};

struct PreferenceSummary {
  std::vector<std::string> subjects;  // sorted
  std::vector<double> rates;          // fraction choosing model A, per subject
  double mean_rate = 0.0;
  double sem = 0.0;
  stats::TestResult test;  // one-sample t against 0.5; degenerate on zero variance
};

PreferenceSummary preference_for_a(const std::vector<HumanChoice>& choices);

}  // namespace relprop::occlusion
