#pragma once

// Axis-aligned pixel rectangle on one axial slice, half-open:
// [x0, x1) x [y0, y1). Width is x1 - x0, area is width * height.

#include <string>

#include "evanchor/errors.hpp"

namespace evanchor {

struct Box2D {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    bool operator==(const Box2D&) const = default;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long long area() const { return static_cast<long long>(width()) * height(); }

    bool positive_area() const { return x0 < x1 && y0 < y1; }
    bool within(int w, int h) const { return x0 >= 0 && y0 >= 0 && x1 <= w && y1 <= h; }
};

inline std::string to_string(const Box2D& b) {
    return "[" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) +
           "," + std::to_string(b.y1) + "]";
}

}  // namespace evanchor
