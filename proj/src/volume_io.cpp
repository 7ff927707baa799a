#include "evanchor/volume_io.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace evanchor {

namespace {

std::string read_header_line(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    char c;
    while (in.get(c)) {
        if (c == '\n') return line;
        if (line.size() > 256)
            throw MalformedHeaderError(path.string() + ": header line too long");
        line.push_back(c);
    }
    throw MalformedHeaderError(path.string() + ": missing header line");
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    return in;
}

}  // namespace

void write_volume(const Volume& vol, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    const Dims& d = vol.dims();
    const Spacing& s = vol.spacing();
    char header[128];
    std::snprintf(header, sizeof(header), "EVV1 %d %d %d %.6g %.6g %.6g u8\n", d.h, d.w, d.d,
                  s.sx, s.sy, s.sz);
    out << header;
    out.write(reinterpret_cast<const char*>(vol.voxels().data()),
              static_cast<std::streamsize>(vol.voxels().size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::istringstream hdr(read_header_line(in, path));

    std::string magic, dtype;
    Dims d;
    Spacing s;
    if (!(hdr >> magic >> d.h >> d.w >> d.d >> s.sx >> s.sy >> s.sz >> dtype) || magic != "EVV1")
        throw MalformedHeaderError(path.string() + ": bad volume header");
    std::string extra;
    if (hdr >> extra) throw MalformedHeaderError(path.string() + ": trailing header tokens");
    if (d.h < 1 || d.w < 1 || d.d < 1)
        throw MalformedHeaderError(path.string() + ": nonpositive dims");
    if (dtype != "u8") throw MalformedHeaderError(path.string() + ": unsupported dtype " + dtype);

    std::vector<std::uint8_t> voxels(d.total_voxels());
    in.read(reinterpret_cast<char*>(voxels.data()), static_cast<std::streamsize>(voxels.size()));
    if (static_cast<std::size_t>(in.gcount()) != voxels.size())
        throw TruncatedPayloadError(path.string() + ": payload shorter than H*W*D");
    if (in.get() != std::ifstream::traits_type::eof())
        throw MalformedHeaderError(path.string() + ": trailing bytes after payload");
    return Volume(d, std::move(voxels), s);
}

void write_mask(const VoxelMask& mask, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    const Dims& d = mask.dims();
    out << "EVM1 " << d.h << ' ' << d.w << ' ' << d.d << '\n';
    for (int t = 0; t < d.d; ++t) {
        const std::vector<Run>& runs = mask.runs(t);
        put_u32(out, static_cast<std::uint32_t>(runs.size()));
        for (const Run& r : runs) {
            put_u32(out, r.start);
            put_u32(out, r.len);
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

VoxelMask read_mask(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::istringstream hdr(read_header_line(in, path));

    std::string magic;
    Dims d;
    if (!(hdr >> magic >> d.h >> d.w >> d.d) || magic != "EVM1")
        throw MalformedHeaderError(path.string() + ": bad mask header");
    std::string extra;
    if (hdr >> extra) throw MalformedHeaderError(path.string() + ": trailing header tokens");
    if (d.h < 1 || d.w < 1 || d.d < 1)
        throw MalformedHeaderError(path.string() + ": nonpositive dims");

    VoxelMask mask(d);
    const std::size_t slice_extent = d.slice_voxels();
    for (int t = 0; t < d.d; ++t) {
        std::uint32_t count = 0;
        if (!get_u32(in, count))
            throw TruncatedPayloadError(path.string() + ": missing run count for slice " +
                                        std::to_string(t));
        SliceMask slice(d.h, d.w);
        for (std::uint32_t i = 0; i < count; ++i) {
            std::uint32_t start = 0, len = 0;
            if (!get_u32(in, start) || !get_u32(in, len))
                throw TruncatedPayloadError(path.string() + ": truncated run list on slice " +
                                            std::to_string(t));
            if (len == 0 || static_cast<std::size_t>(start) + len > slice_extent)
                throw DimensionMismatchError(path.string() + ": run outside slice " +
                                             std::to_string(t));
            for (std::uint32_t p = start; p < start + len; ++p) slice.set_index(p, true);
        }
        mask.set_slice(t, slice);
    }
    if (in.get() != std::ifstream::traits_type::eof())
        throw MalformedHeaderError(path.string() + ": trailing bytes after payload");
    return mask;
}

}  // namespace evanchor
