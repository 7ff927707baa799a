#include "evanchor/reward.hpp"

#include <algorithm>

#include "evanchor/assign.hpp"
#include "evanchor/metrics.hpp"

namespace evanchor {

std::string to_string(RewardFailure f) {
    switch (f) {
        case RewardFailure::none: return "ok";
        case RewardFailure::missing_block: return "missing-block";
        case RewardFailure::duplicate_block: return "duplicate-block";
        case RewardFailure::bad_order: return "bad-order";
        case RewardFailure::schema_error: return "schema-error";
        case RewardFailure::out_of_bounds: return "out-of-bounds";
        case RewardFailure::degenerate_box: return "degenerate-box";
        case RewardFailure::propagation_failed: return "propagation-failed";
    }
    return "?";
}

RewardFailure to_reward_failure(FailureReason r) {
    switch (r) {
        case FailureReason::missing_block: return RewardFailure::missing_block;
        case FailureReason::duplicate_block: return RewardFailure::duplicate_block;
        case FailureReason::bad_order: return RewardFailure::bad_order;
        case FailureReason::schema_error: return RewardFailure::schema_error;
        case FailureReason::out_of_bounds: return RewardFailure::out_of_bounds;
        case FailureReason::degenerate_box: return RewardFailure::degenerate_box;
    }
    return RewardFailure::schema_error;
}

int reward_format(const std::string& response, const Dims& dims) {
    return parse_ok(parse(response, dims)) ? 1 : 0;
}

double reward_axial(int k_hat, const VoxelMask& gt) {
    long long max_area = 0;
    for (int t = 0; t < gt.dims().d; ++t) max_area = std::max(max_area, gt.foreground_area(t));
    if (max_area == 0) throw EmptyMaskError("ground truth has no foreground");
    if (k_hat < 0 || k_hat >= gt.dims().d)
        throw IndexError("slice " + std::to_string(k_hat) + " outside mask");
    return static_cast<double>(gt.foreground_area(k_hat)) / static_cast<double>(max_area);
}

double reward_spatial(std::span<const Box2D> pred, std::span<const Box2D> gt_boxes) {
    if (pred.empty() && gt_boxes.empty()) return 1.0;
    if (pred.empty() || gt_boxes.empty()) return 0.0;
    const Matching m = hungarian(build_cost_matrix(pred, gt_boxes));
    double matched_iou = 0.0;
    for (const auto& [i, j] : m.pairs) matched_iou += iou(pred[i], gt_boxes[j]);
    return matched_iou / static_cast<double>(std::max(pred.size(), gt_boxes.size()));
}

namespace {

std::vector<Box2D> gt_boxes_on_slice(const VoxelMask& gt, int t, const RewardConfig& cfg) {
    return boxes_from_components(connected_components(gt.slice_of(t), cfg.connectivity),
                                 cfg.min_area);
}

// Predicted boxes that received a match under Hungarian matching; these
// are the prompts handed to the propagator.
std::vector<Box2D> matched_prompt_boxes(const std::vector<Box2D>& pred,
                                        const std::vector<Box2D>& gt_boxes,
                                        const RewardConfig& cfg) {
    if (pred.empty() || gt_boxes.empty()) return {};
    const Matching m = hungarian(build_cost_matrix(pred, gt_boxes));
    std::vector<Box2D> prompts;
    for (const auto& [i, j] : m.pairs) {
        if (cfg.drop_zero_iou_matches && iou(pred[i], gt_boxes[j]) == 0.0) continue;
        prompts.push_back(pred[i]);
    }
    return prompts;
}

}  // namespace

VoxelMask propagate_prediction(const Volume& vol, const EvidenceAnchor& anchor,
                               const VoxelMask& gt, const RewardConfig& cfg) {
    if (vol.dims() != gt.dims())
        throw DimensionMismatchError("volume and ground-truth dims differ");
    const std::vector<Box2D> gt_boxes = gt_boxes_on_slice(gt, anchor.key_slice, cfg);
    const std::vector<Box2D> prompts = matched_prompt_boxes(anchor.boxes, gt_boxes, cfg);
    if (prompts.empty()) return VoxelMask(vol.dims());
    return make_propagator(cfg.propagator)->propagate(vol, anchor.key_slice, prompts);
}

double reward_consistency(const Volume& vol, const EvidenceAnchor& anchor, const VoxelMask& gt,
                          const RewardConfig& cfg) {
    if (vol.dims() != gt.dims())
        throw DimensionMismatchError("volume and ground-truth dims differ");
    // No matched prompts (in particular, an anchor on a slice with no
    // ground truth) means nothing was propagated: that scores 0, analogous
    // to the N* = 0 convention of the spatial reward. Without this rule an
    // anchor far from the target would collect a vacuous 0/0 Dice of 1.
    const std::vector<Box2D> gt_boxes = gt_boxes_on_slice(gt, anchor.key_slice, cfg);
    const std::vector<Box2D> prompts = matched_prompt_boxes(anchor.boxes, gt_boxes, cfg);
    if (prompts.empty()) return 0.0;

    const VoxelMask pred =
        make_propagator(cfg.propagator)->propagate(vol, anchor.key_slice, prompts);
    const SliceRange window{anchor.key_slice - cfg.delta, anchor.key_slice + cfg.delta};
    return dice(pred, gt, window);
}

RewardBreakdown reward_total(const std::string& response, const Volume& vol, const VoxelMask& gt,
                             const RewardConfig& cfg) {
    if (gt.empty()) throw EmptyMaskError("ground truth has no foreground");
    if (vol.dims() != gt.dims())
        throw DimensionMismatchError("volume and ground-truth dims differ");
    const RewardWeights& weights = cfg.weights;
    if (weights.f < 0.0 || weights.a < 0.0 || weights.s < 0.0 || weights.c < 0.0)
        throw std::invalid_argument("reward weights must be nonnegative");

    RewardBreakdown out;
    const ParseResult parsed = parse(response, vol.dims());
    if (!parse_ok(parsed)) {
        out.failure = to_reward_failure(std::get<FormatFailure>(parsed).reason);
        return out;  // no anchor exists; every component is zero
    }
    const EvidenceAnchor& anchor = std::get<ParsedResponse>(parsed).anchor;
    const RewardWeights& w = weights;

    out.r_f = 1.0;
    if (w.a > 0.0) out.r_a = reward_axial(anchor.key_slice, gt);
    if (w.s > 0.0)
        out.r_s = reward_spatial(anchor.boxes, gt_boxes_on_slice(gt, anchor.key_slice, cfg));
    if (w.c > 0.0) {
        try {
            out.r_c = reward_consistency(vol, anchor, gt, cfg);
        } catch (const PropagationError&) {
            out.r_c = 0.0;
            out.failure = RewardFailure::propagation_failed;
        }
    }
    out.r_total = w.f * out.r_f + w.a * out.r_a + w.s * out.r_s + w.c * out.r_c;
    return out;
}

}  // namespace evanchor
