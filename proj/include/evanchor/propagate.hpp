#pragma once

// Lifts 2D box prompts on one axial slice into a full volumetric mask.
// The interface is pluggable so a learned propagator can be dropped in
// behind the external-command protocol without code changes; the
// reference implementation is a deterministic intensity region-grower.
//
// Reference algorithm: per box, take the median intensity and population
// std-dev of the box's pixels on the key slice; a voxel passes the
// intensity criterion when |I - median| <= max(tau * std, 1). Seeds are
// the criterion pixels inside the box; each slice is grown 2D
// (8-connected) confined to the box dilated by `dilation`. Propagation
// advances one slice at a time in both axial directions, re-seeding from
// the previous slice's mask intersected with the criterion, and a
// direction stops when its slice mask empties or `max_span` slices have
// been covered. Multiple boxes are propagated independently and unioned.
//
// A box only contributes at all when its interior contrasts with its
// surroundings: the box median must differ from the median of the ring
// around the dilated box by more than max(tau * ring std, contrast_floor).
// A box on featureless background therefore yields an empty mask instead
// of flooding the extruded column.
//
// External-command protocol:
//   <command> <volume.evv> <out.evm> <key-slice> <x0> <y0> <x1> <y1> [...]
// must exit 0 and write the mask to <out.evm>.

#include <memory>
#include <span>
#include <string>

#include "evanchor/box.hpp"
#include "evanchor/mask.hpp"
#include "evanchor/volume.hpp"

namespace evanchor {

struct PropagatorSpec {
    enum class Kind { reference_region_grow, box_extrude, external_command };

    Kind kind = Kind::reference_region_grow;
    double tau = 1.5;            // intensity tolerance in units of the box std-dev
    int dilation = 2;            // growth confinement margin in pixels
    int max_span = 18;           // slices covered per axial direction (2*delta+8 for delta=5)
    double contrast_floor = 4.0; // minimum box-vs-surroundings median gap
    std::string command;         // external_command only
};

std::string to_string(PropagatorSpec::Kind kind);
PropagatorSpec::Kind propagator_kind_from_string(const std::string& s);

class Propagator {
public:
    virtual ~Propagator() = default;

    // Throws IndexError for an out-of-range key slice, std::invalid_argument
    // for boxes not valid on the slice, PropagationError when an external
    // propagator fails.
    virtual VoxelMask propagate(const Volume& vol, int key_slice,
                                std::span<const Box2D> boxes) const = 0;
};

std::unique_ptr<Propagator> make_propagator(const PropagatorSpec& spec);

}  // namespace evanchor
