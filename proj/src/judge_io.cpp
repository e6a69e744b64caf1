#include "rewardkit/judge_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/json_text.hpp"

namespace rewardkit::judge {

using nlohmann::json;

namespace {

constexpr std::string_view kBboxOpen = "<|bbox_";
constexpr std::string_view kTokenClose = "|>";
constexpr std::string_view kGlobal = "<|global|>";
// Longest digit run that always fits in int64.
constexpr std::size_t kMaxIdDigits = 18;

[[noreturn]] void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

// Position just past the balanced object starting at `open`, or npos.
std::size_t match_object(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

json load_payload(std::string_view raw) {
    auto payload = extract_payload(raw);
    if (!payload) fail(ErrorCode::MalformedPayload, "no balanced JSON object found in judge output");
    return json::parse(*payload);
}

const json& require(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(ErrorCode::MissingField, std::string("missing field '") + key + "'");
    return *it;
}

std::int64_t parse_region_id(const json& v) {
    if (v.is_number_unsigned()) {
        const auto id = v.get<std::uint64_t>();
        if (id > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            fail(ErrorCode::MalformedPayload, "region id too large");
        return static_cast<std::int64_t>(id);
    }
    if (v.is_number_integer()) {
        const auto id = v.get<std::int64_t>();
        if (id < 0) fail(ErrorCode::MalformedPayload, "region id must be non-negative");
        return id;
    }
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (!s.empty() && s.size() <= kMaxIdDigits &&
            std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
            return std::stoll(s);
    }
    fail(ErrorCode::MalformedPayload, "region id must be a non-negative integer");
}

int parse_coord(const json& v) {
    if (v.is_number_integer()) {
        const auto c = v.get<std::int64_t>();
        if (c < 0 || c > kCoordMax) fail(ErrorCode::InvalidBbox, "coordinate outside [0, 1000]");
        return static_cast<int>(c);
    }
    if (v.is_number_float()) {
        const double c = v.get<double>();
        if (c != std::floor(c)) fail(ErrorCode::InvalidBbox, "coordinate is not an integer");
        if (c < 0 || c > kCoordMax) fail(ErrorCode::InvalidBbox, "coordinate outside [0, 1000]");
        return static_cast<int>(c);
    }
    fail(ErrorCode::InvalidBbox, "coordinate is not a number");
}

BoundingBox parse_bbox(const json& v) {
    if (!v.is_array() || v.size() != 4) fail(ErrorCode::InvalidBbox, "bbox_2d must be a 4-array");
    BoundingBox b{parse_coord(v[0]), parse_coord(v[1]), parse_coord(v[2]), parse_coord(v[3])};
    if (b.x1 >= b.x2 || b.y1 >= b.y2)
        fail(ErrorCode::InvalidBbox, "bbox_2d needs x1 < x2 and y1 < y2, got [" + std::to_string(b.x1) +
                                         ", " + std::to_string(b.y1) + ", " + std::to_string(b.x2) + ", " +
                                         std::to_string(b.y2) + "]");
    return b;
}

std::vector<EditRegion> parse_regions(const json& v) {
    if (!v.is_array()) fail(ErrorCode::MalformedPayload, "edit_region must be an array");
    std::vector<EditRegion> regions;
    regions.reserve(v.size());
    std::set<std::int64_t> seen;
    for (const auto& r : v) {
        if (!r.is_object()) fail(ErrorCode::MalformedPayload, "edit_region entries must be objects");
        EditRegion region;
        region.id = parse_region_id(require(r, "id"));
        const auto& label = require(r, "label");
        if (!label.is_string() || label.get_ref<const std::string&>().empty())
            fail(ErrorCode::MalformedPayload, "region label must be a non-empty string");
        region.label = label.get<std::string>();
        region.bbox = parse_bbox(require(r, "bbox_2d"));
        if (!seen.insert(region.id).second)
            fail(ErrorCode::DuplicateRegionId, "region id " + std::to_string(region.id) + " repeated");
        regions.push_back(std::move(region));
    }
    return regions;
}

std::string parse_reasoning(const json& v) {
    if (!v.is_string()) fail(ErrorCode::MalformedPayload, "reasoning must be a string");
    return v.get<std::string>();
}

ScorePair parse_scores(const json& v, ParseMode mode, bool& clamped) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        fail(ErrorCode::MalformedPayload, "score must be an array of two numbers");
    double s[2] = {v[0].get<double>(), v[1].get<double>()};
    clamped = false;
    for (double& x : s) {
        if (std::isfinite(x) && x >= 0.0 && x <= kScoreMax) continue;
        if (mode == ParseMode::Strict)
            fail(ErrorCode::ScoreOutOfRange, "score " + json(x).dump() + " outside [0, 25]");
        x = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, kScoreMax);
        clamped = true;
    }
    return {s[0], s[1]};
}

ordered_json_t region_json(const EditRegion& r) {
    ordered_json_t j;
    j["id"] = r.id;
    j["label"] = r.label;
    j["bbox_2d"] = {r.bbox.x1, r.bbox.y1, r.bbox.x2, r.bbox.y2};
    return j;
}

ordered_json_t score_json(const ScorePair& s) {
    return ordered_json_t::array({score_number(s.first), score_number(s.second)});
}

}  // namespace

std::vector<ReasoningToken> tokenize_reasoning(std::string_view text) {
    std::vector<ReasoningToken> tokens;
    std::string pending;
    auto flush = [&] {
        if (!pending.empty()) tokens.emplace_back(TextSpan{std::move(pending)});
        pending.clear();
    };

    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '<') {
            const auto rest = text.substr(i);
            if (rest.starts_with(kGlobal)) {
                flush();
                tokens.emplace_back(GlobalMark{});
                i += kGlobal.size();
                continue;
            }
            if (rest.starts_with(kBboxOpen)) {
                std::size_t j = kBboxOpen.size();
                while (j < rest.size() && rest[j] >= '0' && rest[j] <= '9') ++j;
                const std::size_t ndigits = j - kBboxOpen.size();
                if (ndigits > 0 && ndigits <= kMaxIdDigits && rest.substr(j).starts_with(kTokenClose)) {
                    flush();
                    std::string digits(rest.substr(kBboxOpen.size(), ndigits));
                    const std::int64_t id = std::stoll(digits);
                    tokens.emplace_back(BboxRef{id, std::move(digits)});
                    i += j + kTokenClose.size();
                    continue;
                }
            }
        }
        pending.push_back(text[i]);
        ++i;
    }
    flush();
    return tokens;
}

std::string render(const ReasoningToken& token) {
    struct Visitor {
        std::string operator()(const TextSpan& t) const { return t.text; }
        std::string operator()(const BboxRef& b) const {
            return std::string(kBboxOpen) + b.digits + std::string(kTokenClose);
        }
        std::string operator()(const GlobalMark&) const { return std::string(kGlobal); }
    };
    return std::visit(Visitor{}, token);
}

std::string render(const std::vector<ReasoningToken>& tokens) {
    std::string out;
    for (const auto& t : tokens) out += render(t);
    return out;
}

std::optional<std::string> extract_payload(std::string_view raw) {
    for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
        const std::size_t end = match_object(raw, open);
        if (end == std::string_view::npos) continue;
        const auto candidate = raw.substr(open, end - open);
        auto parsed = json::parse(candidate, nullptr, /*allow_exceptions=*/false);
        if (!parsed.is_discarded() && parsed.is_object()) return std::string(candidate);
    }
    return std::nullopt;
}

ScOutput parse_sc_output(std::string_view raw, const ParseOptions& opts) {
    const json payload = load_payload(raw);
    const auto& regions_json = require(payload, "edit_region");
    const auto& reasoning_json = require(payload, "reasoning");
    const auto& score_json = require(payload, "score");

    ScOutput out;
    out.regions = parse_regions(regions_json);
    out.reasoning = parse_reasoning(reasoning_json);
    out.scores = parse_scores(score_json, opts.mode, out.scores_clamped);

    std::set<std::int64_t> ids;
    for (const auto& r : out.regions) ids.insert(r.id);
    for (const auto& tok : tokenize_reasoning(out.reasoning)) {
        if (const auto* ref = std::get_if<BboxRef>(&tok); ref && !ids.contains(ref->id))
            fail(ErrorCode::DanglingBboxRef, "reasoning cites <|bbox_" + ref->digits + "|> with no such region");
    }
    return out;
}

PqOutput parse_pq_output(std::string_view raw, const ParseOptions& opts) {
    const json payload = load_payload(raw);
    const auto& reasoning_json = require(payload, "reasoning");
    const auto& score_json = require(payload, "score");

    PqOutput out;
    out.reasoning = parse_reasoning(reasoning_json);
    for (const auto& tok : tokenize_reasoning(out.reasoning)) {
        if (!std::holds_alternative<TextSpan>(tok))
            fail(ErrorCode::MalformedPayload, "perceptual-quality reasoning must not contain spatial tokens");
    }
    out.scores = parse_scores(score_json, opts.mode, out.scores_clamped);
    return out;
}

std::string_view to_string(ReasoningRule rule) noexcept {
    switch (rule) {
        case ReasoningRule::GlobalTokenCount: return "GlobalTokenCount";
        case ReasoningRule::UncoveredRegion: return "UncoveredRegion";
        case ReasoningRule::DanglingBboxRef: return "DanglingBboxRef";
        case ReasoningRule::BboxWithoutRegions: return "BboxWithoutRegions";
    }
    return "Unknown";
}

bool ValidationReport::has(ReasoningRule rule) const noexcept {
    return std::any_of(violations.begin(), violations.end(),
                       [rule](const RuleViolation& v) { return v.rule == rule; });
}

ValidationReport validate_refined_reasoning(std::string_view reasoning, const std::vector<EditRegion>& regions) {
    ValidationReport report;
    std::size_t globals = 0;
    std::set<std::int64_t> cited;
    std::vector<std::int64_t> cited_in_order;
    for (const auto& tok : tokenize_reasoning(reasoning)) {
        if (std::holds_alternative<GlobalMark>(tok)) {
            ++globals;
        } else if (const auto* ref = std::get_if<BboxRef>(&tok)) {
            if (cited.insert(ref->id).second) cited_in_order.push_back(ref->id);
        }
    }

    if (globals != 1)
        report.violations.push_back({ReasoningRule::GlobalTokenCount,
                                     "expected exactly one <|global|>, found " + std::to_string(globals)});

    if (regions.empty()) {
        if (!cited.empty())
            report.violations.push_back({ReasoningRule::BboxWithoutRegions,
                                         std::to_string(cited.size()) + " bbox token id(s) with an empty region list"});
        return report;
    }

    std::set<std::int64_t> declared;
    for (const auto& r : regions) {
        declared.insert(r.id);
        if (!cited.contains(r.id))
            report.violations.push_back(
                {ReasoningRule::UncoveredRegion, "region " + std::to_string(r.id) + " has no <|bbox_id|> token"});
    }
    for (auto id : cited_in_order) {
        if (!declared.contains(id))
            report.violations.push_back(
                {ReasoningRule::DanglingBboxRef, "token <|bbox_" + std::to_string(id) + "|> has no region"});
    }
    return report;
}

std::string serialize_sc(const ScOutput& out) {
    ordered_json_t j;
    j["edit_region"] = ordered_json_t::array();
    for (const auto& r : out.regions) j["edit_region"].push_back(region_json(r));
    j["reasoning"] = out.reasoning;
    j["score"] = score_json(out.scores);
    return dump_spaced(j);
}

std::string serialize_pq(const PqOutput& out) {
    ordered_json_t j;
    j["reasoning"] = out.reasoning;
    j["score"] = score_json(out.scores);
    return dump_spaced(j);
}

}  // namespace rewardkit::judge
