#include "evanchor/mask.hpp"

namespace evanchor {

long long SliceMask::area() const {
    long long n = 0;
    for (std::uint8_t v : pix_) n += v;
    return n;
}

std::vector<Run> SliceMask::to_runs() const {
    std::vector<Run> runs;
    const std::size_t n = pix_.size();
    std::size_t p = 0;
    while (p < n) {
        if (pix_[p]) {
            std::size_t start = p;
            while (p < n && pix_[p]) ++p;
            runs.push_back({static_cast<std::uint32_t>(start), static_cast<std::uint32_t>(p - start)});
        } else {
            ++p;
        }
    }
    return runs;
}

SliceMask SliceMask::from_runs(int h, int w, const std::vector<Run>& runs) {
    SliceMask s(h, w);
    const std::size_t n = s.size();
    for (const Run& r : runs) {
        if (r.len == 0 || static_cast<std::size_t>(r.start) + r.len > n)
            throw DimensionMismatchError("run exceeds slice extent");
        for (std::uint32_t i = 0; i < r.len; ++i) s.set_index(r.start + i, true);
    }
    return s;
}

SliceMask VoxelMask::slice_of(int t) const {
    check_slice(t);
    return SliceMask::from_runs(dims_.h, dims_.w, slices_[t]);
}

void VoxelMask::set_slice(int t, const SliceMask& s) {
    check_slice(t);
    if (s.height() != dims_.h || s.width() != dims_.w)
        throw DimensionMismatchError("slice dims do not match mask dims");
    slices_[t] = s.to_runs();
}

long long VoxelMask::foreground_area(int t) const {
    check_slice(t);
    long long n = 0;
    for (const Run& r : slices_[t]) n += r.len;
    return n;
}

long long VoxelMask::total_foreground() const {
    long long n = 0;
    for (int t = 0; t < dims_.d; ++t) n += foreground_area(t);
    return n;
}

}  // namespace evanchor
