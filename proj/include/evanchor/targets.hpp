#pragma once

// Supervision-target derivation from a ground-truth mask: slices ranked by
// foreground visibility, one key slice sampled from the top K, and per-slice
// boxes obtained by connected-component decomposition.

#include <cstdint>
#include <random>
#include <vector>

#include "evanchor/box.hpp"
#include "evanchor/mask.hpp"

namespace evanchor {

struct EvidenceAnchor {
    int key_slice = 0;
    std::vector<Box2D> boxes;

    bool operator==(const EvidenceAnchor&) const = default;
};

struct TopKConfig {
    int k = 3;
    std::uint64_t seed = 0;
};

enum class Connectivity { four = 4, eight = 8 };

struct Pixel {
    int x = 0;
    int y = 0;

    bool operator==(const Pixel&) const = default;
};

struct SliceArea {
    int slice = 0;
    long long area = 0;

    bool operator==(const SliceArea&) const = default;
};

// All slices, descending by foreground area, ties by ascending slice index.
// Throws EmptyMaskError when the mask has no foreground at all.
std::vector<SliceArea> rank_slices_by_visibility(const VoxelMask& mask);

// Uniform over the first min(k, #nonzero-area slices) ranking entries.
int sample_key_slice(const std::vector<SliceArea>& ranking, int k, std::mt19937_64& rng);
int sample_key_slice(const std::vector<SliceArea>& ranking, const TopKConfig& cfg);

// Partition of the foreground pixels into maximal connected regions.
// Components are ordered by their first pixel in scan order; pixels within
// a component are sorted by (y, x).
std::vector<std::vector<Pixel>> connected_components(const SliceMask& slice, Connectivity conn);

// Tight bounding box per component, dropping components with fewer than
// min_area pixels; boxes sorted by (y0, x0, y1, x1).
std::vector<Box2D> boxes_from_components(const std::vector<std::vector<Pixel>>& components,
                                         int min_area);

EvidenceAnchor derive_target(const VoxelMask& mask, const TopKConfig& cfg, std::mt19937_64& rng,
                             Connectivity conn = Connectivity::eight, int min_area = 1);
EvidenceAnchor derive_target(const VoxelMask& mask, const TopKConfig& cfg,
                             Connectivity conn = Connectivity::eight, int min_area = 1);

}  // namespace evanchor
