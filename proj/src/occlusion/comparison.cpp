#include "relprop/error.hpp"
#include "relprop/occlusion.hpp"
#include "relprop/rng.hpp"

namespace relprop::occlusion {

std::string_view bin_name(Bin bin) {
  switch (bin) {
    case Bin::SameInit: return "SameInit";
    case Bin::SameTrainTaskDiffInit: return "SameTrainTaskDiffInit";
    case Bin::SamePretrainDiffTask: return "SamePretrainDiffTask";
    case Bin::DiffPretrainSameTask: return "DiffPretrainSameTask";
    case Bin::DiffPretrainDiffTask: return "DiffPretrainDiffTask";
  }
  throw InvalidInput("unknown comparison bin");
}

Bin classify_pair(const ModelDescriptor& source, const ModelDescriptor& destination) {
  const bool same_pretrain = source.pretrain == destination.pretrain;
  const bool same_task = source.task == destination.task;
  if (same_pretrain && same_task) {
    return source.init_seed == destination.init_seed ? Bin::SameInit : Bin::SameTrainTaskDiffInit;
  }
  if (same_pretrain) return Bin::SamePretrainDiffTask;
  return same_task ? Bin::DiffPretrainSameTask : Bin::DiffPretrainDiffTask;
}

SweepPlan plan_sweep(const std::vector<std::string>& model_ids,
                     const std::vector<ModelDescriptor>& descriptors,
                     std::size_t samples_per_bin, std::uint64_t seed) {
  if (model_ids.size() != descriptors.size()) {
    throw InvalidInput("one descriptor per model id is required");
  }
  if (model_ids.empty()) throw InvalidInput("sweep needs at least one model");
  if (samples_per_bin == 0) throw InvalidInput("samples_per_bin must be positive");

  SweepPlan plan;
  Rng rng(seed);
  for (std::size_t d = 0; d < model_ids.size(); ++d) {
    for (Bin bin : kAllBins) {
      std::vector<std::size_t> eligible;
      for (std::size_t s = 0; s < model_ids.size(); ++s) {
        if (classify_pair(descriptors[s], descriptors[d]) == bin) eligible.push_back(s);
      }
      if (eligible.empty()) {
        plan.warnings.push_back("destination '" + model_ids[d] + "': no source models for bin " +
                                std::string(bin_name(bin)) + ", skipped");
        continue;
      }
      for (std::size_t k = 0; k < samples_per_bin; ++k) {
        plan.draws.push_back({d, bin, eligible[rng.index(eligible.size())]});
      }
    }
  }
  return plan;
}

}  // namespace relprop::occlusion
