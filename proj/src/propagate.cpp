#include "evanchor/propagate.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "evanchor/volume_io.hpp"

namespace evanchor {

std::string to_string(PropagatorSpec::Kind kind) {
    switch (kind) {
        case PropagatorSpec::Kind::reference_region_grow: return "reference-regiongrow";
        case PropagatorSpec::Kind::box_extrude: return "box-extrude";
        case PropagatorSpec::Kind::external_command: return "external-command";
    }
    return "?";
}

PropagatorSpec::Kind propagator_kind_from_string(const std::string& s) {
    if (s == "reference-regiongrow") return PropagatorSpec::Kind::reference_region_grow;
    if (s == "box-extrude") return PropagatorSpec::Kind::box_extrude;
    if (s == "external-command") return PropagatorSpec::Kind::external_command;
    throw std::invalid_argument("unknown propagator kind: " + s);
}

namespace {

void check_prompt(const Volume& vol, int key_slice, std::span<const Box2D> boxes) {
    if (key_slice < 0 || key_slice >= vol.dims().d)
        throw IndexError("key slice " + std::to_string(key_slice) + " outside volume");
    for (const Box2D& b : boxes)
        if (!b.positive_area() || !b.within(vol.dims().w, vol.dims().h))
            throw std::invalid_argument("prompt box invalid on slice: " + to_string(b));
}

class ReferenceRegionGrow final : public Propagator {
public:
    explicit ReferenceRegionGrow(const PropagatorSpec& spec) : spec_(spec) {}

    VoxelMask propagate(const Volume& vol, int key_slice,
                        std::span<const Box2D> boxes) const override {
        check_prompt(vol, key_slice, boxes);
        const Dims dims = vol.dims();
        std::vector<SliceMask> acc(dims.d, SliceMask(dims.h, dims.w));

        for (const Box2D& box : boxes) propagate_box(vol, key_slice, box, acc);

        VoxelMask out(dims);
        for (int t = 0; t < dims.d; ++t) out.set_slice(t, acc[t]);
        return out;
    }

private:
    struct RegionStats {
        int median = 0;
        double sigma = 0.0;
        long long count = 0;
    };

    template <typename Member>
    static RegionStats region_stats(const Volume& vol, int t, const Box2D& extent,
                                    const Member& member) {
        int hist[256] = {0};
        double sum = 0.0, sumsq = 0.0;
        RegionStats s;
        for (int y = extent.y0; y < extent.y1; ++y) {
            for (int x = extent.x0; x < extent.x1; ++x) {
                if (!member(x, y)) continue;
                const std::uint8_t v = vol.at(x, y, t);
                ++hist[v];
                sum += v;
                sumsq += static_cast<double>(v) * v;
                ++s.count;
            }
        }
        if (s.count == 0) return s;
        for (long long seen = 0, target = (s.count - 1) / 2; s.median < 256; ++s.median) {
            seen += hist[s.median];
            if (seen > target) break;
        }
        const double mean = sum / static_cast<double>(s.count);
        s.sigma = std::sqrt(std::max(0.0, sumsq / static_cast<double>(s.count) - mean * mean));
        return s;
    }

    void propagate_box(const Volume& vol, int k, const Box2D& box,
                       std::vector<SliceMask>& acc) const {
        const Dims dims = vol.dims();

        const auto clip = [&](const Box2D& b, int margin) {
            return Box2D{std::max(0, b.x0 - margin), std::max(0, b.y0 - margin),
                         std::min(dims.w, b.x1 + margin), std::min(dims.h, b.y1 + margin)};
        };
        const Box2D fence = clip(box, spec_.dilation);

        // Intensity criterion from the key-slice box statistics.
        const RegionStats inner =
            region_stats(vol, k, box, [](int, int) { return true; });
        const double thr = std::max(spec_.tau * inner.sigma, 1.0);
        const int median = inner.median;

        // Contrast gate: a box whose interior looks like its surroundings
        // marks nothing to segment.
        const Box2D ring_extent = clip(box, spec_.dilation + 4);
        const RegionStats ring = region_stats(vol, k, ring_extent, [&](int x, int y) {
            return x < box.x0 || x >= box.x1 || y < box.y0 || y >= box.y1;
        });
        if (ring.count > 0 &&
            std::abs(inner.median - ring.median) <=
                std::max(spec_.tau * ring.sigma, spec_.contrast_floor))
            return;
        const auto crit = [&](int x, int y, int t) {
            return std::abs(static_cast<int>(vol.at(x, y, t)) - median) <= thr;
        };

        SliceMask key = grow_slice(vol, k, fence, crit, [&](int x, int y) {
            return x >= box.x0 && x < box.x1 && y >= box.y0 && y < box.y1 && crit(x, y, k);
        });
        or_into(acc[k], key);

        for (int dir : {-1, 1}) {
            SliceMask prev = key;
            for (int t = k + dir; t >= 0 && t < dims.d && std::abs(t - k) <= spec_.max_span;
                 t += dir) {
                SliceMask cur = grow_slice(vol, t, fence, crit, [&](int x, int y) {
                    return prev.at(x, y) && crit(x, y, t);
                });
                if (cur.area() == 0) break;
                or_into(acc[t], cur);
                prev = std::move(cur);
            }
        }
    }

    template <typename Crit, typename SeedPred>
    SliceMask grow_slice(const Volume& vol, int t, const Box2D& fence, const Crit& crit,
                         const SeedPred& is_seed) const {
        SliceMask m(vol.dims().h, vol.dims().w);
        std::vector<std::pair<int, int>> stack;
        for (int y = fence.y0; y < fence.y1; ++y)
            for (int x = fence.x0; x < fence.x1; ++x)
                if (is_seed(x, y) && !m.at(x, y)) {
                    m.set(x, y, true);
                    stack.emplace_back(x, y);
                }
        while (!stack.empty()) {
            const auto [x, y] = stack.back();
            stack.pop_back();
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx, ny = y + dy;
                    if (nx < fence.x0 || nx >= fence.x1 || ny < fence.y0 || ny >= fence.y1)
                        continue;
                    if (m.at(nx, ny) || !crit(nx, ny, t)) continue;
                    m.set(nx, ny, true);
                    stack.emplace_back(nx, ny);
                }
            }
        }
        return m;
    }

    static void or_into(SliceMask& dst, const SliceMask& src) {
        for (std::size_t p = 0; p < dst.size(); ++p)
            if (src.at_index(p)) dst.set_index(p, true);
    }

    PropagatorSpec spec_;
};

class BoxExtrude final : public Propagator {
public:
    explicit BoxExtrude(const PropagatorSpec& spec) : spec_(spec) {}

    VoxelMask propagate(const Volume& vol, int key_slice,
                        std::span<const Box2D> boxes) const override {
        check_prompt(vol, key_slice, boxes);
        const Dims dims = vol.dims();
        VoxelMask out(dims);
        SliceMask stencil(dims.h, dims.w);
        for (const Box2D& b : boxes)
            for (int y = b.y0; y < b.y1; ++y)
                for (int x = b.x0; x < b.x1; ++x) stencil.set(x, y, true);
        const int lo = std::max(0, key_slice - spec_.max_span);
        const int hi = std::min(dims.d - 1, key_slice + spec_.max_span);
        for (int t = lo; t <= hi; ++t) out.set_slice(t, stencil);
        return out;
    }

private:
    PropagatorSpec spec_;
};

class ExternalCommand final : public Propagator {
public:
    explicit ExternalCommand(const PropagatorSpec& spec) : spec_(spec) {
        if (spec_.command.empty())
            throw std::invalid_argument("external-command propagator needs a command");
    }

    VoxelMask propagate(const Volume& vol, int key_slice,
                        std::span<const Box2D> boxes) const override {
        check_prompt(vol, key_slice, boxes);

        namespace fs = std::filesystem;
        static std::atomic<std::uint64_t> counter{0};
        const fs::path dir = fs::temp_directory_path() /
                             ("evanchor-prop-" + std::to_string(::getpid()) + "-" +
                              std::to_string(counter.fetch_add(1)));
        fs::create_directories(dir);
        const fs::path vol_path = dir / "volume.evv";
        const fs::path mask_path = dir / "prediction.evm";

        try {
            write_volume(vol, vol_path);
            std::string cmd = spec_.command + " \"" + vol_path.string() + "\" \"" +
                              mask_path.string() + "\" " + std::to_string(key_slice);
            for (const Box2D& b : boxes)
                cmd += " " + std::to_string(b.x0) + " " + std::to_string(b.y0) + " " +
                       std::to_string(b.x1) + " " + std::to_string(b.y1);

            const int rc = std::system(cmd.c_str());
            if (rc != 0)
                throw PropagationError("propagator command exited with status " +
                                       std::to_string(rc));

            VoxelMask out = [&] {
                try {
                    return read_mask(mask_path);
                } catch (const IoError& e) {
                    throw PropagationError(std::string("propagator output unreadable: ") +
                                           e.what());
                }
            }();
            if (out.dims() != vol.dims())
                throw PropagationError("propagator output dims do not match the volume");
            fs::remove_all(dir);
            return out;
        } catch (...) {
            std::error_code ec;
            fs::remove_all(dir, ec);
            throw;
        }
    }

private:
    PropagatorSpec spec_;
};

}  // namespace

std::unique_ptr<Propagator> make_propagator(const PropagatorSpec& spec) {
    if (spec.tau < 0.0 || spec.dilation < 0 || spec.max_span < 0)
        throw std::invalid_argument("propagator parameters out of range");
    switch (spec.kind) {
        case PropagatorSpec::Kind::reference_region_grow:
            return std::make_unique<ReferenceRegionGrow>(spec);
        case PropagatorSpec::Kind::box_extrude: return std::make_unique<BoxExtrude>(spec);
        case PropagatorSpec::Kind::external_command: return std::make_unique<ExternalCommand>(spec);
    }
    throw std::invalid_argument("unknown propagator kind");
}

}  // namespace evanchor
