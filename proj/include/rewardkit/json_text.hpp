#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rewardkit {

using ordered_json_t = nlohmann::ordered_json;

// Integral scores are written without a fractional part ("22", not "22.0")
// so emitted transcripts look like what a judge would print.
inline ordered_json_t score_number(double x) {
    if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 9.0e15)
        return static_cast<std::int64_t>(x);
    return x;
}

// Single-line JSON with ": " and ", " separators, insertion order preserved.
inline void dump_spaced(const ordered_json_t& j, std::string& out) {
    if (j.is_object()) {
        out += '{';
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) out += ", ";
            first = false;
            out += ordered_json_t(it.key()).dump();
            out += ": ";
            dump_spaced(it.value(), out);
        }
        out += '}';
    } else if (j.is_array()) {
        out += '[';
        bool first = true;
        for (const auto& v : j) {
            if (!first) out += ", ";
            first = false;
            dump_spaced(v, out);
        }
        out += ']';
    } else {
        out += j.dump();
    }
}

inline std::string dump_spaced(const ordered_json_t& j) {
    std::string out;
    dump_spaced(j, out);
    return out;
}

// Non-blank lines of a JSON Lines document, with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string_view>> jsonl_lines(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string_view>> lines;
    std::size_t lineno = 0;
    while (!text.empty()) {
        ++lineno;
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) lines.emplace_back(lineno, line);
    }
    return lines;
}

}  // namespace rewardkit
