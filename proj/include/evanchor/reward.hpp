#pragma once

// The four-component verifiable reward for one sampled response against a
// ground-truth mask, combined as a weighted sum:
//
//   r_f  format compliance: 1 iff the response parses
//   r_a  axial localization: F_khat / max_t F_t
//   r_s  2D localization: Hungarian-matched IoU sum / max(N, N*)
//   r_c  cross-slice consistency: Dice of the propagated mask vs ground
//        truth on the +-delta axial neighborhood of the predicted slice
//
// A parse failure zeroes every component (no anchor exists to score) and
// a zero weight skips its component entirely, which is how single-reward
// ablations are configured.

#include <optional>
#include <span>
#include <string>

#include "evanchor/mask.hpp"
#include "evanchor/propagate.hpp"
#include "evanchor/respparse.hpp"
#include "evanchor/targets.hpp"
#include "evanchor/volume.hpp"

namespace evanchor {

struct RewardWeights {
    double f = 1.0;
    double a = 1.0;
    double s = 1.0;
    double c = 1.0;
};

struct RewardConfig {
    RewardWeights weights;
    int delta = 5;  // axial neighborhood half-width for r_c
    PropagatorSpec propagator;
    Connectivity connectivity = Connectivity::eight;  // for GT boxes on the predicted slice
    int min_area = 1;
    bool drop_zero_iou_matches = false;  // optionally exclude IoU=0 pairs from the prompts
};

enum class RewardFailure {
    none,
    missing_block,
    duplicate_block,
    bad_order,
    schema_error,
    out_of_bounds,
    degenerate_box,
    propagation_failed,
};

std::string to_string(RewardFailure f);
RewardFailure to_reward_failure(FailureReason r);

struct RewardBreakdown {
    double r_f = 0.0;
    double r_a = 0.0;
    double r_s = 0.0;
    double r_c = 0.0;
    double r_total = 0.0;
    RewardFailure failure = RewardFailure::none;
};

int reward_format(const std::string& response, const Dims& dims);

// Throws EmptyMaskError when gt has no foreground anywhere.
double reward_axial(int k_hat, const VoxelMask& gt);

// Both lists empty scores 1 (nothing to predict, nothing predicted); one
// empty list scores 0.
double reward_spatial(std::span<const Box2D> pred, std::span<const Box2D> gt_boxes);

// Propagation runs from the Hungarian-matched predicted boxes; when there
// are none (e.g. the predicted slice carries no ground truth) the score is
// 0, mirroring the N* = 0 convention of reward_spatial.
double reward_consistency(const Volume& vol, const EvidenceAnchor& anchor, const VoxelMask& gt,
                          const RewardConfig& cfg);

// The volumetric prediction behind r_c: ground-truth boxes are re-derived
// on the predicted key slice, Hungarian-matched against the anchor boxes,
// and the matched predicted boxes are used as propagation prompts. With no
// matched prompts the prediction is empty.
VoxelMask propagate_prediction(const Volume& vol, const EvidenceAnchor& anchor,
                               const VoxelMask& gt, const RewardConfig& cfg);

RewardBreakdown reward_total(const std::string& response, const Volume& vol, const VoxelMask& gt,
                             const RewardConfig& cfg);

}  // namespace evanchor
