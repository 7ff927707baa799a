// Minimal external propagator speaking the command protocol:
//   extrude_propagator <volume.evv> <out.evm> <key-slice> <x0> <y0> <x1> <y1> [...]
// Extrudes the prompt boxes across every slice and writes the mask. Serves
// as the protocol reference client; a real propagator wraps its model the
// same way.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "evanchor/box.hpp"
#include "evanchor/volume_io.hpp"

using namespace evanchor;

int main(int argc, char** argv) {
    if (argc < 4 || (argc - 4) % 4 != 0) {
        std::fprintf(stderr,
                     "usage: %s <volume.evv> <out.evm> <key-slice> [<x0> <y0> <x1> <y1> ...]\n",
                     argv[0]);
        return 2;
    }
    try {
        const Volume vol = read_volume(argv[1]);
        const int key_slice = std::atoi(argv[3]);
        if (key_slice < 0 || key_slice >= vol.dims().d) {
            std::fprintf(stderr, "key slice out of range\n");
            return 1;
        }

        std::vector<Box2D> boxes;
        for (int i = 4; i + 3 < argc; i += 4)
            boxes.push_back({std::atoi(argv[i]), std::atoi(argv[i + 1]), std::atoi(argv[i + 2]),
                             std::atoi(argv[i + 3])});

        const Dims dims = vol.dims();
        SliceMask stencil(dims.h, dims.w);
        for (const Box2D& b : boxes) {
            if (!b.positive_area() || !b.within(dims.w, dims.h)) {
                std::fprintf(stderr, "invalid box %s\n", to_string(b).c_str());
                return 1;
            }
            for (int y = b.y0; y < b.y1; ++y)
                for (int x = b.x0; x < b.x1; ++x) stencil.set(x, y, true);
        }

        VoxelMask out(dims);
        for (int t = 0; t < dims.d; ++t) out.set_slice(t, stencil);
        write_mask(out, argv[2]);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
}
