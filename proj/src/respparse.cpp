#include "evanchor/respparse.hpp"

#include <cctype>
#include <cstdint>
#include <limits>
#include <vector>

#include <json.hpp>

namespace evanchor {

namespace {

using nlohmann::json;

constexpr const char* kTags[4] = {"<think>", "</think>", "<answer>", "</answer>"};

std::vector<std::size_t> find_all(const std::string& text, const std::string& needle) {
    std::vector<std::size_t> hits;
    std::size_t pos = text.find(needle);
    while (pos != std::string::npos) {
        hits.push_back(pos);
        pos = text.find(needle, pos + 1);
    }
    return hits;
}

bool whitespace_only(const std::string& text, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
        if (!std::isspace(static_cast<unsigned char>(text[i]))) return false;
    return true;
}

// Integer extraction tolerant of unsigned overflow: saturates so that the
// value still fails the bounds check rather than the schema check.
bool get_int(const json& j, long long& out) {
    if (!j.is_number_integer()) return false;
    if (j.is_number_unsigned() &&
        j.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<long long>::max())) {
        out = std::numeric_limits<long long>::max();
        return true;
    }
    out = j.get<long long>();
    return true;
}

// The 1-based prompt-facing slice identifier "<slice N>".
bool parse_slice_token(const std::string& s, long long& n) {
    const std::string prefix = "<slice ";
    if (s.size() < prefix.size() + 2 || s.compare(0, prefix.size(), prefix) != 0 ||
        s.back() != '>')
        return false;
    long long value = 0;
    for (std::size_t i = prefix.size(); i + 1 < s.size(); ++i) {
        const char c = s[i];
        if (c < '0' || c > '9') return false;
        if (value > (std::numeric_limits<long long>::max() - 9) / 10)
            value = std::numeric_limits<long long>::max() / 10;
        value = value * 10 + (c - '0');
    }
    n = value;
    return true;
}

}  // namespace

std::string to_string(FailureReason reason) {
    switch (reason) {
        case FailureReason::missing_block: return "missing-block";
        case FailureReason::duplicate_block: return "duplicate-block";
        case FailureReason::bad_order: return "bad-order";
        case FailureReason::schema_error: return "schema-error";
        case FailureReason::out_of_bounds: return "out-of-bounds";
        case FailureReason::degenerate_box: return "degenerate-box";
    }
    return "?";
}

ParseResult parse(const std::string& text, const Dims& dims) {
    std::vector<std::size_t> pos[4];
    for (int i = 0; i < 4; ++i) {
        pos[i] = find_all(text, kTags[i]);
        if (pos[i].empty())
            return FormatFailure{FailureReason::missing_block,
                                 std::string(kTags[i]) + " not found"};
    }
    for (int i = 0; i < 4; ++i) {
        if (pos[i].size() > 1)
            return FormatFailure{FailureReason::duplicate_block,
                                 std::string(kTags[i]) + " appears more than once"};
    }

    const std::size_t t0 = pos[0][0], t1 = pos[1][0], a0 = pos[2][0], a1 = pos[3][0];
    if (!(t0 < t1 && t1 < a0 && a0 < a1))
        return FormatFailure{FailureReason::bad_order, "blocks out of order"};

    const std::size_t t0e = t0 + 7;   // len("<think>")
    const std::size_t t1e = t1 + 8;   // len("</think>")
    const std::size_t a0e = a0 + 8;   // len("<answer>")
    const std::size_t a1e = a1 + 9;   // len("</answer>")
    if (!whitespace_only(text, 0, t0) || !whitespace_only(text, t1e, a0) ||
        !whitespace_only(text, a1e, text.size()))
        return FormatFailure{FailureReason::bad_order, "content outside blocks"};

    const std::string body = text.substr(a0e, a1 - a0e);
    const json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object())
        return FormatFailure{FailureReason::schema_error, "answer body is not a valid object"};
    if (j.size() != 2 || !j.contains("slice") || !j.contains("bbox_2d_list"))
        return FormatFailure{FailureReason::schema_error,
                             "answer object must have exactly slice and bbox_2d_list"};

    long long k = -1;
    const json& js = j.at("slice");
    if (js.is_string()) {
        long long one_based = 0;
        if (!parse_slice_token(js.get<std::string>(), one_based))
            return FormatFailure{FailureReason::schema_error, "bad slice token"};
        if (one_based < 1)
            return FormatFailure{FailureReason::out_of_bounds, "slice token below 1"};
        k = one_based - 1;
    } else if (!get_int(js, k)) {
        return FormatFailure{FailureReason::schema_error, "slice is not an integer"};
    }
    if (k < 0 || k >= dims.d)
        return FormatFailure{FailureReason::out_of_bounds,
                             "slice " + std::to_string(k) + " outside [0, " +
                                 std::to_string(dims.d) + ")"};

    const json& jb = j.at("bbox_2d_list");
    if (!jb.is_array())
        return FormatFailure{FailureReason::schema_error, "bbox_2d_list is not an array"};

    EvidenceAnchor anchor{static_cast<int>(k), {}};
    for (const json& e : jb) {
        if (!e.is_array() || e.size() != 4)
            return FormatFailure{FailureReason::schema_error, "box is not a 4-integer array"};
        long long c[4];
        for (int i = 0; i < 4; ++i)
            if (!get_int(e.at(i), c[i]))
                return FormatFailure{FailureReason::schema_error, "box coordinate not integer"};
        if (c[0] >= c[2] || c[1] >= c[3])
            return FormatFailure{FailureReason::degenerate_box,
                                 "box has empty extent: " + e.dump()};
        if (c[0] < 0 || c[1] < 0 || c[2] > dims.w || c[3] > dims.h)
            return FormatFailure{FailureReason::out_of_bounds, "box outside slice: " + e.dump()};
        anchor.boxes.push_back({static_cast<int>(c[0]), static_cast<int>(c[1]),
                                static_cast<int>(c[2]), static_cast<int>(c[3])});
    }

    return ParsedResponse{text.substr(t0e, t1 - t0e), std::move(anchor)};
}

std::string serialize(const std::string& think, const EvidenceAnchor& anchor) {
    for (const char* tag : kTags)
        if (think.find(tag) != std::string::npos)
            throw std::invalid_argument("think text contains literal tag " + std::string(tag));
    if (anchor.key_slice < 0) throw std::invalid_argument("key slice must be nonnegative");
    for (const Box2D& b : anchor.boxes) {
        if (!b.positive_area() || b.x0 < 0 || b.y0 < 0)
            throw std::invalid_argument("invalid box " + to_string(b));
    }

    json boxes = json::array();
    for (const Box2D& b : anchor.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    json body;
    body["slice"] = anchor.key_slice;
    body["bbox_2d_list"] = std::move(boxes);
    // No newline of our own: a serialized response with newline-free think
    // text is exactly one record in the one-response-per-line scoring format.
    return "<think>" + think + "</think><answer>" + body.dump() + "</answer>";
}

}  // namespace evanchor
