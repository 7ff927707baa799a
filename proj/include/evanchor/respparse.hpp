#pragma once

// Strict parser/serializer for the tagged response format
//
//   <think>free text</think><answer>{"slice": K, "bbox_2d_list":
//   [[x0,y0,x1,y1], ...]}</answer>
//
// This grammar is normative for every surface that carries an evidence
// anchor (scoring input files, trainer rollouts, target records).
// Structure rules: exactly one think block and one answer block, think
// first, nothing but whitespace outside the blocks, and no literal tag
// text anywhere else. The answer body is an object with exactly the two
// fields above. "slice" is a 0-based integer; the 1-based prompt-facing
// form "<slice N>" is also accepted and converted. Boxes are half-open
// pixel rectangles and must be in-bounds with positive area.
//
// Parsing never throws on malformed input; failures are values carrying a
// machine-readable reason.

#include <string>
#include <variant>

#include "evanchor/targets.hpp"
#include "evanchor/volume.hpp"

namespace evanchor {

enum class FailureReason {
    missing_block,
    duplicate_block,
    bad_order,
    schema_error,
    out_of_bounds,
    degenerate_box,
};

std::string to_string(FailureReason reason);

struct FormatFailure {
    FailureReason reason;
    std::string detail;
};

struct ParsedResponse {
    std::string think;
    EvidenceAnchor anchor;
};

using ParseResult = std::variant<ParsedResponse, FormatFailure>;

inline bool parse_ok(const ParseResult& r) { return std::holds_alternative<ParsedResponse>(r); }

ParseResult parse(const std::string& text, const Dims& dims);

// Inverse of parse on valid inputs: parse(serialize(t, a)) == (t, a).
// Throws std::invalid_argument when the think text contains literal tag
// text or the anchor is malformed (negative coordinates, empty-area box).
std::string serialize(const std::string& think, const EvidenceAnchor& anchor);

}  // namespace evanchor
