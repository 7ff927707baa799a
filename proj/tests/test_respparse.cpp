#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "evanchor/respparse.hpp"
#include "evanchor/rng.hpp"
#include "oracles.hpp"

using namespace evanchor;

namespace {

const Dims kDims{64, 64, 64};

FailureReason reason_of(const ParseResult& r) {
    REQUIRE_FALSE(parse_ok(r));
    return std::get<FormatFailure>(r).reason;
}

std::string random_think(std::mt19937_64& rng) {
    static const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,:;!?()";
    std::string s;
    const std::size_t len = uniform_index(rng, 60);
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    return s;
}

}  // namespace

TEST_CASE("a well-formed response parses into its anchor") {
    const std::string text =
        "<think>the largest cross-section is slice 32</think>"
        "<answer>{\"slice\": 32, \"bbox_2d_list\": [[24,24,40,40]]}</answer>";
    const ParseResult r = parse(text, kDims);
    REQUIRE(parse_ok(r));
    const ParsedResponse& p = std::get<ParsedResponse>(r);
    CHECK(p.think == "the largest cross-section is slice 32");
    CHECK(p.anchor.key_slice == 32);
    REQUIRE(p.anchor.boxes.size() == 1);
    CHECK(p.anchor.boxes[0] == Box2D{24, 24, 40, 40});
}

TEST_CASE("missing closing answer tag") {
    const std::string text =
        "<think>t</think><answer>{\"slice\": 1, \"bbox_2d_list\": [[0,0,1,1]]}";
    CHECK(reason_of(parse(text, kDims)) == FailureReason::missing_block);
}

TEST_CASE("duplicate blocks are rejected") {
    const std::string text =
        "<think>a</think><think>b</think>"
        "<answer>{\"slice\": 1, \"bbox_2d_list\": [[0,0,1,1]]}</answer>";
    CHECK(reason_of(parse(text, kDims)) == FailureReason::duplicate_block);
}

TEST_CASE("answer before think is a bad order") {
    const std::string text =
        "<answer>{\"slice\": 1, \"bbox_2d_list\": [[0,0,1,1]]}</answer><think>t</think>";
    CHECK(reason_of(parse(text, kDims)) == FailureReason::bad_order);
}

TEST_CASE("non-whitespace content outside the blocks is rejected") {
    const std::string text =
        "preamble <think>t</think><answer>{\"slice\": 1, \"bbox_2d_list\": [[0,0,1,1]]}</answer>";
    CHECK(reason_of(parse(text, kDims)) == FailureReason::bad_order);
}

TEST_CASE("slice index at D is out of bounds") {
    const std::string text =
        "<think>t</think><answer>{\"slice\": 64, \"bbox_2d_list\": [[0,0,1,1]]}</answer>";
    CHECK(reason_of(parse(text, kDims)) == FailureReason::out_of_bounds);
}

TEST_CASE("zero-width box is degenerate") {
    const std::string text =
        "<think>t</think><answer>{\"slice\": 3, \"bbox_2d_list\": [[10,10,10,20]]}</answer>";
    CHECK(reason_of(parse(text, kDims)) == FailureReason::degenerate_box);
}

TEST_CASE("box reaching past the slice is out of bounds") {
    const std::string text =
        "<think>t</think><answer>{\"slice\": 3, \"bbox_2d_list\": [[0,0,65,10]]}</answer>";
    CHECK(reason_of(parse(text, kDims)) == FailureReason::out_of_bounds);
}

TEST_CASE("schema violations: floats, missing fields, extra fields, non-object") {
    CHECK(reason_of(parse("<think>t</think><answer>{\"slice\": 1.5, \"bbox_2d_list\": []}"
                          "</answer>",
                          kDims)) == FailureReason::schema_error);
    CHECK(reason_of(parse("<think>t</think><answer>{\"slice\": 1}</answer>", kDims)) ==
          FailureReason::schema_error);
    CHECK(reason_of(parse("<think>t</think><answer>{\"slice\": 1, \"bbox_2d_list\": [],"
                          "\"extra\": 0}</answer>",
                          kDims)) == FailureReason::schema_error);
    CHECK(reason_of(parse("<think>t</think><answer>[1,2]</answer>", kDims)) ==
          FailureReason::schema_error);
    CHECK(reason_of(parse("<think>t</think><answer>{\"slice\": 1, \"bbox_2d_list\":"
                          " [[0,0,1]]}</answer>",
                          kDims)) == FailureReason::schema_error);
}

TEST_CASE("whitespace around blocks and inside the object is tolerated") {
    const std::string text =
        "  \n<think>t</think>\n\t<answer>\n  {\"slice\": 2,\n   \"bbox_2d_list\": "
        "[[1, 2, 3, 4]]}\n</answer>\n ";
    REQUIRE(parse_ok(parse(text, kDims)));
}

TEST_CASE("the 1-based slice token form converts to a 0-based index") {
    const std::string text =
        "<think>t</think><answer>{\"slice\": \"<slice 33>\", \"bbox_2d_list\": [[0,0,4,4]]}"
        "</answer>";
    const ParseResult r = parse(text, kDims);
    REQUIRE(parse_ok(r));
    CHECK(std::get<ParsedResponse>(r).anchor.key_slice == 32);

    // Token value D maps to index D-1 (valid); token 0 has no 0-based peer.
    const std::string at_d =
        "<think>t</think><answer>{\"slice\": \"<slice 64>\", \"bbox_2d_list\": [[0,0,4,4]]}"
        "</answer>";
    REQUIRE(parse_ok(parse(at_d, kDims)));
    CHECK(std::get<ParsedResponse>(parse(at_d, kDims)).anchor.key_slice == 63);
    const std::string at_zero =
        "<think>t</think><answer>{\"slice\": \"<slice 0>\", \"bbox_2d_list\": [[0,0,4,4]]}"
        "</answer>";
    CHECK(reason_of(parse(at_zero, kDims)) == FailureReason::out_of_bounds);
}

TEST_CASE("empty think text is valid") {
    const std::string text = serialize("", {5, {{1, 1, 3, 3}}});
    const ParseResult r = parse(text, kDims);
    REQUIRE(parse_ok(r));
    CHECK(std::get<ParsedResponse>(r).think.empty());
}

TEST_CASE("serialize emits a single line for newline-free think text") {
    const std::string text = serialize("one line of reasoning", {5, {{1, 1, 3, 3}}});
    CHECK(text.find('\n') == std::string::npos);
}

TEST_CASE("serialize rejects literal tag text in the think block") {
    CHECK_THROWS_AS(serialize("sneaky <answer> inside", {0, {{0, 0, 1, 1}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(serialize("sneaky </think> inside", {0, {{0, 0, 1, 1}}}),
                    std::invalid_argument);
}

TEST_CASE("serialize rejects invalid anchors") {
    CHECK_THROWS_AS(serialize("t", {-1, {{0, 0, 1, 1}}}), std::invalid_argument);
    CHECK_THROWS_AS(serialize("t", {0, {{4, 4, 4, 9}}}), std::invalid_argument);
}

TEST_CASE("parse . serialize is the identity on random valid anchors") {
    std::mt19937_64 rng(9001);
    for (int trial = 0; trial < 1000; ++trial) {
        EvidenceAnchor anchor;
        anchor.key_slice = static_cast<int>(uniform_index(rng, kDims.d));
        const std::size_t nboxes = uniform_index(rng, 5);  // 0..4 boxes
        for (std::size_t b = 0; b < nboxes; ++b)
            anchor.boxes.push_back(oracles::random_box(rng, kDims.w, kDims.h));
        const std::string think = random_think(rng);

        const ParseResult r = parse(serialize(think, anchor), kDims);
        REQUIRE(parse_ok(r));
        const ParsedResponse& p = std::get<ParsedResponse>(r);
        CHECK(p.think == think);
        CHECK(p.anchor == anchor);
    }
}

TEST_CASE("fuzz: arbitrary byte noise never crashes the parser") {
    std::mt19937_64 rng(0xfadedbee);
    int successes = 0;
    for (int trial = 0; trial < 100000; ++trial) {
        std::string s;
        const std::size_t len = uniform_index(rng, 200);
        for (std::size_t i = 0; i < len; ++i)
            s.push_back(static_cast<char>(uniform_index(rng, 256)));
        const ParseResult r = parse(s, kDims);
        if (parse_ok(r)) {
            // Any accidental success must still satisfy the anchor contract.
            const EvidenceAnchor& a = std::get<ParsedResponse>(r).anchor;
            CHECK(a.key_slice >= 0);
            CHECK(a.key_slice < kDims.d);
            for (const Box2D& b : a.boxes) {
                CHECK(b.positive_area());
                CHECK(b.within(kDims.w, kDims.h));
            }
            ++successes;
        }
    }
    CHECK(successes == 0);  // 200 random bytes essentially never conform
}

TEST_CASE("fuzz: tag fragments recombined at random never crash") {
    std::mt19937_64 rng(0x5eed);
    const std::vector<std::string> parts = {
        "<think>", "</think>", "<answer>", "</answer>", "{\"slice\": 3",
        ", \"bbox_2d_list\": [[1,2,3,4]]}", "}", "[", "]", "text", " ", "\n", "42", "\"",
    };
    for (int trial = 0; trial < 20000; ++trial) {
        std::string s;
        const std::size_t n = uniform_index(rng, 10);
        for (std::size_t i = 0; i < n; ++i) s += parts[uniform_index(rng, parts.size())];
        (void)parse(s, kDims);  // must neither crash nor throw
    }
}
