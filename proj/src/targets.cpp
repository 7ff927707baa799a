#include "evanchor/targets.hpp"

#include <algorithm>
#include <stdexcept>

#include "evanchor/rng.hpp"

namespace evanchor {

std::vector<SliceArea> rank_slices_by_visibility(const VoxelMask& mask) {
    std::vector<SliceArea> ranking;
    ranking.reserve(mask.dims().d);
    long long total = 0;
    for (int t = 0; t < mask.dims().d; ++t) {
        const long long a = mask.foreground_area(t);
        total += a;
        ranking.push_back({t, a});
    }
    if (total == 0) throw EmptyMaskError("mask has no foreground; no target can be derived");
    std::stable_sort(ranking.begin(), ranking.end(), [](const SliceArea& a, const SliceArea& b) {
        if (a.area != b.area) return a.area > b.area;
        return a.slice < b.slice;
    });
    return ranking;
}

int sample_key_slice(const std::vector<SliceArea>& ranking, int k, std::mt19937_64& rng) {
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    long long nonzero = 0;
    for (const SliceArea& e : ranking)
        if (e.area > 0) ++nonzero;
    if (nonzero == 0) throw EmptyMaskError("ranking has no slice with foreground");
    const std::uint64_t pool = std::min<std::uint64_t>(k, nonzero);
    return ranking[uniform_index(rng, pool)].slice;
}

int sample_key_slice(const std::vector<SliceArea>& ranking, const TopKConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    return sample_key_slice(ranking, cfg.k, rng);
}

std::vector<std::vector<Pixel>> connected_components(const SliceMask& slice, Connectivity conn) {
    const int h = slice.height();
    const int w = slice.width();
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    std::vector<std::vector<Pixel>> components;

    const bool diag = conn == Connectivity::eight;
    std::vector<std::size_t> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            if (!slice.at_index(p) || label[p] >= 0) continue;

            const int id = static_cast<int>(components.size());
            components.emplace_back();
            stack.assign(1, p);
            label[p] = id;
            while (!stack.empty()) {
                const std::size_t q = stack.back();
                stack.pop_back();
                const int qx = static_cast<int>(q % w);
                const int qy = static_cast<int>(q / w);
                components[id].push_back({qx, qy});
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        if (!diag && dx != 0 && dy != 0) continue;
                        const int nx = qx + dx;
                        const int ny = qy + dy;
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                        const std::size_t np = static_cast<std::size_t>(ny) * w + nx;
                        if (!slice.at_index(np) || label[np] >= 0) continue;
                        label[np] = id;
                        stack.push_back(np);
                    }
                }
            }
            std::sort(components[id].begin(), components[id].end(),
                      [](const Pixel& a, const Pixel& b) {
                          return a.y != b.y ? a.y < b.y : a.x < b.x;
                      });
        }
    }
    return components;
}

std::vector<Box2D> boxes_from_components(const std::vector<std::vector<Pixel>>& components,
                                         int min_area) {
    std::vector<Box2D> boxes;
    for (const std::vector<Pixel>& comp : components) {
        if (comp.empty() || static_cast<long long>(comp.size()) < min_area) continue;
        Box2D b{comp[0].x, comp[0].y, comp[0].x + 1, comp[0].y + 1};
        for (const Pixel& p : comp) {
            b.x0 = std::min(b.x0, p.x);
            b.y0 = std::min(b.y0, p.y);
            b.x1 = std::max(b.x1, p.x + 1);
            b.y1 = std::max(b.y1, p.y + 1);
        }
        boxes.push_back(b);
    }
    std::sort(boxes.begin(), boxes.end(), [](const Box2D& a, const Box2D& b) {
        if (a.y0 != b.y0) return a.y0 < b.y0;
        if (a.x0 != b.x0) return a.x0 < b.x0;
        if (a.y1 != b.y1) return a.y1 < b.y1;
        return a.x1 < b.x1;
    });
    return boxes;
}

EvidenceAnchor derive_target(const VoxelMask& mask, const TopKConfig& cfg, std::mt19937_64& rng,
                             Connectivity conn, int min_area) {
    const std::vector<SliceArea> ranking = rank_slices_by_visibility(mask);
    const int k = sample_key_slice(ranking, cfg.k, rng);
    const std::vector<Box2D> boxes =
        boxes_from_components(connected_components(mask.slice_of(k), conn), min_area);
    if (boxes.empty())
        throw EmptyMaskError("all components on slice " + std::to_string(k) +
                             " fall below min_area");
    return {k, boxes};
}

EvidenceAnchor derive_target(const VoxelMask& mask, const TopKConfig& cfg, Connectivity conn,
                             int min_area) {
    std::mt19937_64 rng(cfg.seed);
    return derive_target(mask, cfg, rng, conn, min_area);
}

}  // namespace evanchor
