#pragma once

// Synthetic labelled volumes for desk-scale experiments: analytic shapes
// rasterized by a voxel-center-in-shape test, with two-level intensity
// contrast plus Gaussian noise. Deterministic for a fixed spec.

#include <cstdint>
#include <string>
#include <vector>

#include "evanchor/mask.hpp"
#include "evanchor/volume.hpp"

namespace evanchor {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Point3&) const = default;
};

enum class ShapeKind { sphere, ellipsoid, two_blob };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& s);

struct PhantomSpec {
    ShapeKind kind = ShapeKind::sphere;
    Dims dims{64, 64, 64};
    Point3 center{32.0, 32.0, 32.0};
    Point3 radii{8.0, 8.0, 8.0};  // sphere uses radii.x on all axes
    Point3 second_center{};       // two_blob only; same radii as the first blob
    std::uint8_t fg = 200;
    std::uint8_t bg = 50;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct Phantom {
    Volume vol;
    VoxelMask mask;
};

Phantom generate_phantom(const PhantomSpec& spec);

// Randomized corpus of fully interior shapes, deterministic per seed.
// Shape kinds cycle through `kinds`; two-blob phantoms share one axial
// plane so the equatorial slice shows both components.
struct CorpusConfig {
    int count = 32;
    Dims dims{48, 48, 48};
    std::vector<ShapeKind> kinds{ShapeKind::sphere, ShapeKind::two_blob};
    std::uint8_t fg = 160;
    std::uint8_t bg = 60;
    double noise_lo = 8.0;
    double noise_hi = 12.0;
    double sphere_radius_lo = 6.0;
    double sphere_radius_hi = 10.0;
    double blob_radius_lo = 4.0;
    double blob_radius_hi = 6.0;
    std::uint64_t seed = 0;
};

std::vector<PhantomSpec> sample_corpus_specs(const CorpusConfig& cfg);

}  // namespace evanchor
