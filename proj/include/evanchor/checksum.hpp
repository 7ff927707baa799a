#pragma once

// FNV-1a 64-bit digests for manifest records and reproducibility checks.

#include <cstdint>
#include <filesystem>
#include <string>

namespace evanchor {

inline std::uint64_t fnv1a64(const void* data, std::size_t size,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const unsigned char* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path);

std::string to_hex(std::uint64_t v);

}  // namespace evanchor
