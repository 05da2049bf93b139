#include <map>
#include <utility>

#include "curve_internal.hpp"
#include "relprop/error.hpp"
#include "relprop/occlusion.hpp"
#include "relprop/parallel.hpp"

namespace relprop::occlusion {

SweepResult cross_model_sweep(const std::vector<RegistryModel>& models,
                              const std::vector<Tensor>& images, const LabelLookup& labels_for,
                              const SweepConfig& config) {
  if (images.empty()) throw InvalidInput("sweep needs at least one image");
  std::vector<std::string> ids;
  std::vector<ModelDescriptor> descriptors;
  for (const auto& m : models) {
    ids.push_back(m.model_id);
    descriptors.push_back(m.descriptor);
  }
  auto plan = plan_sweep(ids, descriptors, config.samples_per_bin, config.seed);

  auto labels_checked = [&](const std::string& task) -> const std::vector<std::size_t>& {
    const auto& labels = labels_for(task);
    if (labels.size() != images.size()) {
      throw InvalidInput("task '" + task + "' has " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(images.size()) + " images");
    }
    return labels;
  };

  // Sources need masking orders for every image, computed once per model.
  std::vector<char> is_source(models.size(), 0);
  for (const auto& d : plan.draws) is_source[d.source] = 1;
  std::vector<std::size_t> sources;
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (is_source[m]) {
      labels_checked(models[m].descriptor.task);
      sources.push_back(m);
    }
  }
  std::vector<std::vector<std::vector<std::size_t>>> orders(models.size());
  for (std::size_t m : sources) orders[m].resize(images.size());
  const std::size_t jobs = sources.size() * images.size();
  parallel_for(jobs, config.threads, [&](std::size_t job) {
    const std::size_t m = sources[job / images.size()];
    const std::size_t i = job % images.size();
    const auto& labels = labels_for(models[m].descriptor.task);
    const auto map = lrp::compute_relevance(models[m].model, images[i], labels[i], config.lrp);
    orders[m][i] = relevance_order(map.values);
  });

  // A (source, destination) pair drawn several times yields the same curve.
  std::map<std::pair<std::size_t, std::size_t>, MaskingCurve> curves;
  for (const auto& d : plan.draws) curves.try_emplace({d.source, d.destination});
  for (auto& [key, curve] : curves) {
    const auto& dest = models[key.second];
    curve = detail::curve_from_orders(dest.model, orders[key.first], images,
                                      labels_checked(dest.descriptor.task), config.schedule,
                                      config.fill_value, config.threads,
                                      models[key.first].model_id);
    curve.destination_model_id = dest.model_id;
  }

  SweepResult result;
  result.warnings = std::move(plan.warnings);
  result.records.reserve(plan.draws.size());
  for (const auto& d : plan.draws) {
    result.records.push_back({d.bin, models[d.source].model_id, models[d.source].descriptor,
                              models[d.destination].model_id, models[d.destination].descriptor,
                              curves.at({d.source, d.destination})});
  }
  return result;
}

}  // namespace relprop::occlusion
