#pragma once

// Volumetric overlap metrics (DSC, IoU) over whole masks or an inclusive
// axial slice range. Empty-vs-empty is scored 1 by convention, the same
// convention the reward uses.

#include <optional>

#include "evanchor/mask.hpp"

namespace evanchor {

struct SliceRange {
    int lo = 0;  // inclusive; clamped to [0, D)
    int hi = 0;  // inclusive
};

struct MetricReport {
    double dsc = 1.0;
    double iou = 1.0;
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
};

MetricReport evaluate_masks(const VoxelMask& pred, const VoxelMask& gt,
                            std::optional<SliceRange> restriction = std::nullopt);

double dice(const VoxelMask& pred, const VoxelMask& gt,
            std::optional<SliceRange> restriction = std::nullopt);
double iou_volumetric(const VoxelMask& pred, const VoxelMask& gt,
                      std::optional<SliceRange> restriction = std::nullopt);

}  // namespace evanchor
