#include "evanchor/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "evanchor/rng.hpp"

namespace evanchor {

std::string to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::sphere: return "sphere";
        case ShapeKind::ellipsoid: return "ellipsoid";
        case ShapeKind::two_blob: return "two-blob";
    }
    return "?";
}

ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "sphere") return ShapeKind::sphere;
    if (s == "ellipsoid") return ShapeKind::ellipsoid;
    if (s == "two-blob") return ShapeKind::two_blob;
    throw std::invalid_argument("unknown shape kind: " + s);
}

namespace {

bool inside_ellipsoid(double x, double y, double z, const Point3& c, const Point3& r) {
    const double dx = (x - c.x) / r.x;
    const double dy = (y - c.y) / r.y;
    const double dz = (z - c.z) / r.z;
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

}  // namespace

std::vector<PhantomSpec> sample_corpus_specs(const CorpusConfig& cfg) {
    if (cfg.count < 0) throw std::invalid_argument("corpus count must be nonnegative");
    if (cfg.kinds.empty()) throw std::invalid_argument("corpus needs at least one shape kind");

    std::vector<PhantomSpec> specs;
    std::mt19937_64 rng(cfg.seed);
    const auto span = [&](double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); };
    const double w = cfg.dims.w, h = cfg.dims.h, d = cfg.dims.d;

    for (int i = 0; i < cfg.count; ++i) {
        PhantomSpec spec;
        spec.kind = cfg.kinds[i % cfg.kinds.size()];
        spec.dims = cfg.dims;
        spec.fg = cfg.fg;
        spec.bg = cfg.bg;
        spec.noise_sigma = span(cfg.noise_lo, cfg.noise_hi);
        spec.seed = rng();
        if (spec.kind == ShapeKind::two_blob) {
            const double r = span(cfg.blob_radius_lo, cfg.blob_radius_hi);
            spec.radii = {r, r, r};
            const double m = r + 2.0;
            const double cy = span(m, h - m);
            const double cz = span(m, d - m);
            const double cx1 = span(m, w * 0.4);
            const double cx2 = span(cx1 + 2.0 * r + 4.0, w - m);
            spec.center = {cx1, cy, cz};
            spec.second_center = {cx2, cy, cz};
        } else {
            const double lo = spec.kind == ShapeKind::sphere ? cfg.sphere_radius_lo
                                                             : cfg.blob_radius_lo;
            const double hi = spec.kind == ShapeKind::sphere ? cfg.sphere_radius_hi
                                                             : cfg.blob_radius_hi;
            const double r = span(lo, hi);
            spec.radii = {r, r, r};
            const double m = r + 3.0;
            spec.center = {span(m, w - m), span(m, h - m), span(m, d - m)};
        }
        specs.push_back(spec);
    }
    return specs;
}

Phantom generate_phantom(const PhantomSpec& spec) {
    if (spec.radii.x <= 0.0 || spec.radii.y <= 0.0 || spec.radii.z <= 0.0)
        throw std::invalid_argument("phantom radii must be positive");
    if (spec.noise_sigma < 0.0)
        throw std::invalid_argument("noise sigma must be nonnegative");

    const Dims dims = spec.dims;
    Point3 radii = spec.radii;
    if (spec.kind == ShapeKind::sphere) radii = {spec.radii.x, spec.radii.x, spec.radii.x};

    Volume vol(dims, spec.bg);
    VoxelMask mask(dims);

    std::mt19937_64 rng(spec.seed);
    const double sigma = spec.noise_sigma;

    SliceMask slice(dims.h, dims.w);
    for (int t = 0; t < dims.d; ++t) {
        for (int y = 0; y < dims.h; ++y) {
            for (int x = 0; x < dims.w; ++x) {
                // Voxel (x, y, t) has its center at integer coordinates.
                bool in = inside_ellipsoid(x, y, t, spec.center, radii);
                if (spec.kind == ShapeKind::two_blob)
                    in = in || inside_ellipsoid(x, y, t, spec.second_center, radii);
                slice.set(x, y, in);

                double v = in ? spec.fg : spec.bg;
                if (sigma > 0.0) v += sigma * normal_unit(rng);
                vol.set(x, y, t, static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
            }
        }
        mask.set_slice(t, slice);
    }
    return {std::move(vol), std::move(mask)};
}

}  // namespace evanchor
