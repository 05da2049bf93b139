#pragma once

#include <string>
#include <vector>

#include "relprop/occlusion.hpp"

namespace relprop::occlusion::detail {

/// Accuracy curve from precomputed masking orders; labels are the
/// destination's ground truth, which may differ from the classes the maps
/// were computed for.
MaskingCurve curve_from_orders(const NetworkModel& destination,
                               const std::vector<std::vector<std::size_t>>& orders,
                               const std::vector<Tensor>& images,
                               const std::vector<std::size_t>& labels,
                               const MaskSchedule& schedule, float fill_value,
                               std::size_t threads, std::string source_id);

}  // namespace relprop::occlusion::detail
