#pragma once

// Dense 3D scalar grid. Storage order: row-major within each axial slice
// (x fastest, then y), slices outermost. Voxel (x, y, t) lives at
// t*H*W + y*W + x. Intensities are 8-bit unsigned.

#include <cstdint>
#include <string>
#include <vector>

#include "evanchor/errors.hpp"

namespace evanchor {

struct Dims {
    int h = 0;  // rows per slice (y)
    int w = 0;  // columns per slice (x)
    int d = 0;  // number of axial slices (t)

    bool operator==(const Dims&) const = default;

    std::size_t slice_voxels() const { return static_cast<std::size_t>(h) * w; }
    std::size_t total_voxels() const { return slice_voxels() * d; }
};

struct Spacing {
    float sx = 1.0f;
    float sy = 1.0f;
    float sz = 1.0f;

    bool operator==(const Spacing&) const = default;
};

class Volume {
public:
    Volume(Dims dims, std::uint8_t fill = 0, Spacing spacing = {})
        : dims_(dims), spacing_(spacing), voxels_(check_dims(dims).total_voxels(), fill) {}

    Volume(Dims dims, std::vector<std::uint8_t> voxels, Spacing spacing = {})
        : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
        check_dims(dims);
        if (voxels_.size() != dims_.total_voxels())
            throw DimensionMismatchError("volume payload size does not match dims");
    }

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    const std::vector<std::uint8_t>& voxels() const { return voxels_; }

    std::uint8_t at(int x, int y, int t) const {
        check_bounds(x, y, t);
        return voxels_[index(x, y, t)];
    }

    void set(int x, int y, int t, std::uint8_t v) {
        check_bounds(x, y, t);
        voxels_[index(x, y, t)] = v;
    }

    std::size_t index(int x, int y, int t) const {
        return (static_cast<std::size_t>(t) * dims_.h + y) * dims_.w + x;
    }

    bool operator==(const Volume&) const = default;

private:
    static const Dims& check_dims(const Dims& d) {
        if (d.h < 1 || d.w < 1 || d.d < 1)
            throw DimensionMismatchError("volume dims must be positive");
        return d;
    }

    void check_bounds(int x, int y, int t) const {
        if (x < 0 || x >= dims_.w || y < 0 || y >= dims_.h || t < 0 || t >= dims_.d)
            throw IndexError("voxel (" + std::to_string(x) + "," + std::to_string(y) + "," +
                             std::to_string(t) + ") outside volume");
    }

    Dims dims_;
    Spacing spacing_;
    std::vector<std::uint8_t> voxels_;
};

}  // namespace evanchor
