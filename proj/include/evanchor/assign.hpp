#pragma once

// IoU geometry and optimal one-to-one box matching on a 1-IoU cost matrix.

#include <span>
#include <utility>
#include <vector>

#include "evanchor/box.hpp"

namespace evanchor {

// Intersection over union under half-open pixel-area semantics.
// Throws std::invalid_argument for boxes with empty extent.
double iou(const Box2D& a, const Box2D& b);

struct CostMatrix {
    int rows = 0;  // predicted boxes
    int cols = 0;  // ground-truth boxes
    std::vector<double> entries;  // row-major

    double at(int i, int j) const { return entries[static_cast<std::size_t>(i) * cols + j]; }
};

CostMatrix build_cost_matrix(std::span<const Box2D> pred, std::span<const Box2D> gt);

struct Matching {
    std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
    double total_cost = 0.0;                 // summed in ascending row order
};

// Minimum-total-cost maximal one-to-one assignment (Hungarian algorithm).
// Rectangular matrices are padded to square with cost 1.0 and the padded
// pairs dropped, so exactly min(rows, cols) pairs are returned.
Matching hungarian(const CostMatrix& cost);

}  // namespace evanchor
