#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rewardkit::judge {

inline constexpr int kCoordMax = 1000;
inline constexpr double kScoreMax = 25.0;

// Box in the judge's normalized [0, 1000] coordinate space.
struct BoundingBox {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    bool valid() const noexcept {
        return 0 <= x1 && x1 < x2 && x2 <= kCoordMax && 0 <= y1 && y1 < y2 && y2 <= kCoordMax;
    }
    bool operator==(const BoundingBox&) const = default;
};

struct EditRegion {
    std::int64_t id = 0;
    std::string label;
    BoundingBox bbox;

    bool operator==(const EditRegion&) const = default;
};

struct ScorePair {
    double first = 0.0;
    double second = 0.0;

    bool operator==(const ScorePair&) const = default;
};

// Semantic-consistency stream output: regions, grounded reasoning, and
// scores = [instruction following, source consistency].
struct ScOutput {
    std::vector<EditRegion> regions;
    std::string reasoning;
    ScorePair scores;
    bool scores_clamped = false;

    bool operator==(const ScOutput&) const = default;
};

// Perceptual-quality stream output: scores = [naturalness, artifacts].
struct PqOutput {
    std::string reasoning;
    ScorePair scores;
    bool scores_clamped = false;

    bool operator==(const PqOutput&) const = default;
};

enum class ParseMode { Strict, Clamp };

struct ParseOptions {
    ParseMode mode = ParseMode::Strict;
    // Only affects prompt assembly for the multi-image SC variant.
    std::optional<int> multi_image_input_count;
};

// Reasoning token stream. Rendering each token and concatenating reproduces
// the source text exactly.
struct TextSpan {
    std::string text;
    bool operator==(const TextSpan&) const = default;
};
struct BboxRef {
    std::int64_t id = 0;
    // Digits as written, so "<|bbox_007|>" renders back unchanged.
    std::string digits;
    bool operator==(const BboxRef&) const = default;
};
struct GlobalMark {
    bool operator==(const GlobalMark&) const = default;
};
using ReasoningToken = std::variant<TextSpan, BboxRef, GlobalMark>;

std::vector<ReasoningToken> tokenize_reasoning(std::string_view reasoning);
std::string render(const ReasoningToken& token);
std::string render(const std::vector<ReasoningToken>& tokens);

// Returns the first balanced top-level JSON object in `raw` that parses, or
// nothing. Brace matching skips over JSON string literals.
std::optional<std::string> extract_payload(std::string_view raw);

ScOutput parse_sc_output(std::string_view raw, const ParseOptions& opts = {});
PqOutput parse_pq_output(std::string_view raw, const ParseOptions& opts = {});

enum class ReasoningRule {
    GlobalTokenCount,    // exactly one <|global|>
    UncoveredRegion,     // every region id cited at least once
    DanglingBboxRef,     // every cited id is a declared region
    BboxWithoutRegions,  // no bbox tokens when the region list is empty
};

std::string_view to_string(ReasoningRule rule) noexcept;

struct RuleViolation {
    ReasoningRule rule;
    std::string detail;
};

struct ValidationReport {
    std::vector<RuleViolation> violations;

    bool passed() const noexcept { return violations.empty(); }
    bool has(ReasoningRule rule) const noexcept;
};

ValidationReport validate_refined_reasoning(std::string_view reasoning,
                                            const std::vector<EditRegion>& regions);

std::string serialize_sc(const ScOutput& out);
std::string serialize_pq(const PqOutput& out);

}  // namespace rewardkit::judge
