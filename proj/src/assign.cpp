#include "evanchor/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace evanchor {

double iou(const Box2D& a, const Box2D& b) {
    if (!a.positive_area() || !b.positive_area())
        throw std::invalid_argument("iou requires positive-area boxes");
    const long long iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    const long long ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (iw <= 0 || ih <= 0) return 0.0;
    const long long inter = iw * ih;
    const long long uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

CostMatrix build_cost_matrix(std::span<const Box2D> pred, std::span<const Box2D> gt) {
    CostMatrix m;
    m.rows = static_cast<int>(pred.size());
    m.cols = static_cast<int>(gt.size());
    m.entries.resize(static_cast<std::size_t>(m.rows) * m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j)
            m.entries[static_cast<std::size_t>(i) * m.cols + j] = 1.0 - iou(pred[i], gt[j]);
    return m;
}

namespace {

// Kuhn-Munkres with potentials on a square matrix; returns row assigned to
// each column (1-indexed internally).
std::vector<int> solve_square(const std::vector<double>& a, int n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    return p;
}

}  // namespace

Matching hungarian(const CostMatrix& cost) {
    Matching result;
    if (cost.rows == 0 || cost.cols == 0) return result;
    for (double c : cost.entries)
        if (!std::isfinite(c)) throw std::invalid_argument("cost matrix has non-finite entries");

    const int n = std::max(cost.rows, cost.cols);
    std::vector<double> padded(static_cast<std::size_t>(n) * n, 1.0);
    for (int i = 0; i < cost.rows; ++i)
        for (int j = 0; j < cost.cols; ++j)
            padded[static_cast<std::size_t>(i) * n + j] = cost.at(i, j);

    const std::vector<int> p = solve_square(padded, n);
    for (int j = 1; j <= n; ++j) {
        const int i = p[j];
        if (i >= 1 && i <= cost.rows && j <= cost.cols) result.pairs.emplace_back(i - 1, j - 1);
    }
    std::sort(result.pairs.begin(), result.pairs.end());
    for (const auto& [i, j] : result.pairs) result.total_cost += cost.at(i, j);
    return result;
}

}  // namespace evanchor
