#include <algorithm>
#include <numeric>
#include <set>

#include "relprop/csv.hpp"
#include "relprop/error.hpp"
#include "relprop/finetune.hpp"
#include "relprop/rng.hpp"

namespace relprop::finetune {

Dataset load_manifest(const std::filesystem::path& csv_path, std::uint64_t split_seed) {
  const auto table = csv::read(csv_path);
  const auto path_col = table.column("path");
  const auto label_col = table.column("label");

  std::set<std::string> vocab;
  for (const auto& row : table.rows) vocab.insert(row[label_col]);

  Dataset ds;
  ds.class_labels.assign(vocab.begin(), vocab.end());
  ds.split_seed = split_seed;
  const auto base = csv_path.parent_path();
  for (const auto& row : table.rows) {
    std::filesystem::path p = row[path_col];
    if (p.is_relative()) p = base / p;
    const auto pos = std::lower_bound(ds.class_labels.begin(), ds.class_labels.end(), row[label_col]);
    ds.items.push_back({p.string(), static_cast<std::size_t>(pos - ds.class_labels.begin())});
  }
  if (ds.items.empty()) throw InvalidInput("manifest '" + csv_path.string() + "' lists no images");
  return ds;
}

Split split_dataset(const Dataset& dataset) {
  const std::size_t n = dataset.items.size();
  if (n < 5) throw InvalidInput("splitting needs at least 5 items, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(dataset.split_seed);
  rng.shuffle(order);

  const std::size_t n_val = n / 5;
  Split split;
  split.train.class_labels = split.val.class_labels = dataset.class_labels;
  split.train.split_seed = split.val.split_seed = dataset.split_seed;
  for (std::size_t i = 0; i < n; ++i) {
    auto& part = i < n - n_val ? split.train : split.val;
    part.items.push_back(dataset.items[order[i]]);
  }
  return split;
}

}  // namespace relprop::finetune
