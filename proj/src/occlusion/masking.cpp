#include <algorithm>
#include <cmath>
#include <numeric>

#include "curve_internal.hpp"
#include "relprop/error.hpp"
#include "relprop/occlusion.hpp"
#include "relprop/parallel.hpp"
#include "relprop/rng.hpp"

namespace relprop::occlusion {

MaskSchedule::MaskSchedule()
    : MaskSchedule({0.0, 1.0, 1.78, 3.16, 5.62, 10.0, 17.8, 31.6, 56.2, 100.0}) {}

MaskSchedule::MaskSchedule(std::vector<double> percentiles) : percentiles_(std::move(percentiles)) {
  if (percentiles_.size() < 2 || percentiles_.front() != 0.0 || percentiles_.back() != 100.0) {
    throw InvalidInput("mask schedule must start at 0 and end at 100");
  }
  for (std::size_t i = 1; i < percentiles_.size(); ++i) {
    if (!(percentiles_[i] > percentiles_[i - 1])) {
      throw InvalidInput("mask schedule must be strictly ascending");
    }
  }
}

MaskSchedule MaskSchedule::linear(std::size_t steps) {
  if (steps < 1) throw InvalidInput("linear schedule needs at least one step");
  std::vector<double> p(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    p[i] = 100.0 * static_cast<double>(i) / static_cast<double>(steps);
  }
  p.back() = 100.0;
  return MaskSchedule(std::move(p));
}

std::size_t masked_count(double percentile, std::size_t pixels) {
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    throw InvalidInput("masking percentile must lie in [0, 100]");
  }
  const double exact = percentile / 100.0 * static_cast<double>(pixels);
  return std::min(pixels, static_cast<std::size_t>(std::floor(exact + 0.5)));
}

std::vector<std::size_t> relevance_order(const Tensor& map_values) {
  const auto v = map_values.values();
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(v[a]) > std::fabs(v[b]);
  });
  return order;
}

Tensor mask_image(const Tensor& image, std::span<const std::size_t> order, double percentile,
                  float fill_value) {
  if (image.rank() != 3) throw InvalidInput("mask_image expects an H x W x C image");
  const std::size_t pixels = image.dim(0) * image.dim(1);
  const std::size_t channels = image.dim(2);
  if (order.size() != pixels) {
    throw InvalidInput("relevance map covers " + std::to_string(order.size()) +
                       " pixels, image has " + std::to_string(pixels));
  }
  const std::size_t k = masked_count(percentile, pixels);
  std::vector<float> out(image.values().begin(), image.values().end());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t p = order[i];
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(p * channels), channels, fill_value);
  }
  return Tensor(image.shape(), std::move(out));
}

Tensor mask_image(const Tensor& image, const lrp::RelevanceMap& map, double percentile,
                  float fill_value) {
  if (image.rank() != 3 || map.values.rank() != 2 || map.values.dim(0) != image.dim(0) ||
      map.values.dim(1) != image.dim(1)) {
    throw InvalidInput("relevance map " + shape_string(map.values.shape()) +
                       " does not match image " + shape_string(image.shape()));
  }
  return mask_image(image, relevance_order(map.values), percentile, fill_value);
}

double auc(std::span<const CurvePoint> points) {
  if (points.size() < 2) throw InvalidInput("AUC needs at least 2 curve points");
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].percentile > points[i - 1].percentile)) {
      throw InvalidInput("AUC needs strictly increasing percentiles");
    }
    const double dx = (points[i].percentile - points[i - 1].percentile) / 100.0;
    area += 0.5 * dx * (points[i].accuracy + points[i - 1].accuracy);
  }
  return area;
}

MaskingCurve accuracy_curve(const NetworkModel& destination,
                            const std::vector<lrp::RelevanceMap>& source_maps,
                            const std::vector<Tensor>& images,
                            const std::vector<std::size_t>& labels, const MaskSchedule& schedule,
                            float fill_value, std::size_t threads) {
  if (images.empty()) throw InvalidInput("accuracy curve needs at least one image");
  if (labels.size() != images.size()) throw InvalidInput("one label per image is required");
  if (source_maps.size() != images.size()) {
    throw InvalidInput("missing relevance map: " + std::to_string(source_maps.size()) +
                       " maps for " + std::to_string(images.size()) + " images");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (source_maps[i].target_class != labels[i]) {
      throw InvalidInput("map " + std::to_string(i) + " targets class " +
                         std::to_string(source_maps[i].target_class) + ", image label is " +
                         std::to_string(labels[i]));
    }
  }
  std::vector<std::vector<std::size_t>> orders(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    orders[i] = relevance_order(source_maps[i].values);
  }
  return detail::curve_from_orders(destination, orders, images, labels, schedule, fill_value,
                                   threads, source_maps.front().model_id);
}

namespace detail {

MaskingCurve curve_from_orders(const NetworkModel& destination,
                               const std::vector<std::vector<std::size_t>>& orders,
                               const std::vector<Tensor>& images,
                               const std::vector<std::size_t>& labels,
                               const MaskSchedule& schedule, float fill_value,
                               std::size_t threads, std::string source_id) {
  const auto& levels = schedule.percentiles();
  std::vector<std::vector<char>> correct(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    correct[i].resize(levels.size());
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const auto masked = mask_image(images[i], orders[i], levels[l], fill_value);
      correct[i][l] = forward(destination, masked).predicted_class == labels[i];
    }
  });

  MaskingCurve curve;
  curve.source_model_id = std::move(source_id);
  curve.destination_model_id = destination.id();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    std::size_t hits = 0;
    for (const auto& c : correct) hits += c[l] ? 1 : 0;
    curve.points.push_back(
        {levels[l], static_cast<double>(hits) / static_cast<double>(images.size())});
  }
  curve.auc = auc(curve.points);
  return curve;
}

}  // namespace detail

lrp::RelevanceMap random_map(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(height * width);
  for (auto& x : v) x = static_cast<float>(rng.uniform(0.0, 1.0));
  return {Tensor({height, width}, std::move(v)), 0, "random:" + std::to_string(seed), true};
}

}  // namespace relprop::occlusion
