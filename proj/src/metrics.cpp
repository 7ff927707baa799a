#include "evanchor/metrics.hpp"

#include <algorithm>

namespace evanchor {

namespace {

// Overlap between two canonical run lists, by two-pointer sweep.
long long run_overlap(const std::vector<Run>& a, const std::vector<Run>& b) {
    long long total = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const std::uint64_t a0 = a[i].start, a1 = a0 + a[i].len;
        const std::uint64_t b0 = b[j].start, b1 = b0 + b[j].len;
        const std::uint64_t lo = std::max(a0, b0);
        const std::uint64_t hi = std::min(a1, b1);
        if (hi > lo) total += static_cast<long long>(hi - lo);
        if (a1 < b1)
            ++i;
        else
            ++j;
    }
    return total;
}

}  // namespace

MetricReport evaluate_masks(const VoxelMask& pred, const VoxelMask& gt,
                            std::optional<SliceRange> restriction) {
    if (pred.dims() != gt.dims())
        throw DimensionMismatchError("prediction and ground truth dims differ");

    int lo = 0;
    int hi = pred.dims().d - 1;
    if (restriction) {
        lo = std::max(restriction->lo, 0);
        hi = std::min(restriction->hi, pred.dims().d - 1);
    }

    MetricReport r;
    for (int t = lo; t <= hi; ++t) {
        const long long tp = run_overlap(pred.runs(t), gt.runs(t));
        r.tp += tp;
        r.fp += pred.foreground_area(t) - tp;
        r.fn += gt.foreground_area(t) - tp;
    }

    const long long dice_den = 2 * r.tp + r.fp + r.fn;
    const long long iou_den = r.tp + r.fp + r.fn;
    r.dsc = dice_den == 0 ? 1.0 : 2.0 * static_cast<double>(r.tp) / static_cast<double>(dice_den);
    r.iou = iou_den == 0 ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(iou_den);
    return r;
}

double dice(const VoxelMask& pred, const VoxelMask& gt, std::optional<SliceRange> restriction) {
    return evaluate_masks(pred, gt, restriction).dsc;
}

double iou_volumetric(const VoxelMask& pred, const VoxelMask& gt,
                      std::optional<SliceRange> restriction) {
    return evaluate_masks(pred, gt, restriction).iou;
}

}  // namespace evanchor
