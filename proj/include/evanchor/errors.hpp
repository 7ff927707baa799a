#pragma once

#include <stdexcept>
#include <string>

namespace evanchor {

struct IndexError : std::out_of_range {
    explicit IndexError(const std::string& what) : std::out_of_range(what) {}
};

struct DimensionMismatchError : std::invalid_argument {
    explicit DimensionMismatchError(const std::string& what) : std::invalid_argument(what) {}
};

// A ground-truth mask with no foreground voxels cannot yield a supervision
// target or be scored against.
struct EmptyMaskError : std::invalid_argument {
    explicit EmptyMaskError(const std::string& what) : std::invalid_argument(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct MalformedHeaderError : IoError {
    explicit MalformedHeaderError(const std::string& what) : IoError(what) {}
};

struct TruncatedPayloadError : IoError {
    explicit TruncatedPayloadError(const std::string& what) : IoError(what) {}
};

struct PropagationError : std::runtime_error {
    explicit PropagationError(const std::string& what) : std::runtime_error(what) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace evanchor
