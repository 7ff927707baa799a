#pragma once

// Binary occupancy grids. A VoxelMask keeps one run-length encoded row of
// runs per axial slice; runs cover linear in-slice pixel indices
// p = y*W + x and are kept canonical (sorted, non-overlapping, maximal),
// so equal masks have bit-identical run lists.

#include <cstdint>
#include <vector>

#include "evanchor/errors.hpp"
#include "evanchor/volume.hpp"

namespace evanchor {

struct Run {
    std::uint32_t start = 0;
    std::uint32_t len = 0;

    bool operator==(const Run&) const = default;
};

class SliceMask {
public:
    SliceMask(int h, int w) : h_(h), w_(w), pix_(static_cast<std::size_t>(h) * w, 0) {
        if (h < 1 || w < 1) throw DimensionMismatchError("slice dims must be positive");
    }

    int height() const { return h_; }
    int width() const { return w_; }

    bool at(int x, int y) const { return pix_[static_cast<std::size_t>(y) * w_ + x] != 0; }
    void set(int x, int y, bool v) { pix_[static_cast<std::size_t>(y) * w_ + x] = v ? 1 : 0; }

    bool at_index(std::size_t p) const { return pix_[p] != 0; }
    void set_index(std::size_t p, bool v) { pix_[p] = v ? 1 : 0; }

    std::size_t size() const { return pix_.size(); }
    long long area() const;

    std::vector<Run> to_runs() const;
    static SliceMask from_runs(int h, int w, const std::vector<Run>& runs);

    bool operator==(const SliceMask&) const = default;

private:
    int h_;
    int w_;
    std::vector<std::uint8_t> pix_;
};

class VoxelMask {
public:
    explicit VoxelMask(Dims dims) : dims_(dims), slices_(check(dims).d) {}

    const Dims& dims() const { return dims_; }

    // Axial restriction to slice t.
    SliceMask slice_of(int t) const;
    void set_slice(int t, const SliceMask& s);

    const std::vector<Run>& runs(int t) const {
        check_slice(t);
        return slices_[t];
    }

    long long foreground_area(int t) const;
    long long total_foreground() const;
    bool empty() const { return total_foreground() == 0; }

    bool operator==(const VoxelMask&) const = default;

private:
    static const Dims& check(const Dims& d) {
        if (d.h < 1 || d.w < 1 || d.d < 1)
            throw DimensionMismatchError("mask dims must be positive");
        return d;
    }

    void check_slice(int t) const {
        if (t < 0 || t >= dims_.d)
            throw IndexError("slice " + std::to_string(t) + " outside [0, " +
                             std::to_string(dims_.d) + ")");
    }

    Dims dims_;
    std::vector<std::vector<Run>> slices_;
};

}  // namespace evanchor
