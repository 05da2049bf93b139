#include "relprop/error.hpp"
#include "relprop/stats.hpp"

namespace relprop::stats {
namespace {

double map_similarity(const Tensor& x, const Tensor& y) {
  if (bit_identical(x, y)) return 1.0;
  try {
    return pearson(x.values(), y.values());
  } catch (const UndefinedStatistic&) {
    return 0.0;  // two different constant maps
  }
}

}  // namespace

SimilarityMatrix similarity_matrix(const std::vector<std::string>& model_ids,
                                   const std::vector<std::vector<Tensor>>& maps) {
  const std::size_t n = model_ids.size();
  if (maps.size() != n) throw InvalidInput("one map set per model id is required");
  if (n == 0) throw InvalidInput("similarity matrix needs at least one model");
  const std::size_t images = maps[0].size();
  if (images == 0) throw InvalidInput("similarity matrix needs at least one image");
  for (std::size_t m = 0; m < n; ++m) {
    if (maps[m].size() != images) {
      throw InvalidInput("model '" + model_ids[m] + "' covers " + std::to_string(maps[m].size()) +
                         " images, expected " + std::to_string(images));
    }
    for (std::size_t i = 0; i < images; ++i) {
      if (maps[m][i].shape() != maps[0][i].shape()) {
        throw InvalidInput("map shapes differ for image " + std::to_string(i));
      }
    }
  }

  SimilarityMatrix out{model_ids, std::vector<double>(n * n, 0.0)};
  for (std::size_t a = 0; a < n; ++a) {
    out.values[a * n + a] = 1.0;
    for (std::size_t b = a + 1; b < n; ++b) {
      double total = 0.0;
      for (std::size_t i = 0; i < images; ++i) total += map_similarity(maps[a][i], maps[b][i]);
      const double mean = total / static_cast<double>(images);
      out.values[a * n + b] = out.values[b * n + a] = mean;
    }
  }
  return out;
}

}  // namespace relprop::stats
