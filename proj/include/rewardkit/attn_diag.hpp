#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rewardkit::attn {

inline constexpr std::size_t kGridSide = 24;
inline constexpr std::size_t kGridCells = kGridSide * kGridSide;
// ceil(0.10 * 576)
inline constexpr std::size_t kTopCells = (kGridCells + 9) / 10;
// Population std below this marks a grid as constant for correlation.
inline constexpr double kConstantGridStd = 1e-12;

// One exported attention map (a layer or head), row-major.
struct AttentionMapRaw {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> weights;
};

// 24x24 probability distribution, row-major.
using AttentionGrid = std::array<double, kGridCells>;

struct SamplePair {
    std::string sample_id;
    AttentionGrid source{};
    AttentionGrid edited{};
};

// Normalize each map, area-pool it onto the 24x24 grid, average the pooled
// maps, and renormalize.
AttentionGrid pool_to_grid(std::span<const AttentionMapRaw> maps);

// Throws InvalidInput unless cells are non-negative, finite, and sum to 1.
void check_grid(const AttentionGrid& grid);

double shannon_entropy(const AttentionGrid& grid);
double entropy_gap(const SamplePair& pair);
double concentration_index(const AttentionGrid& grid);
double pearson(const AttentionGrid& a, const AttentionGrid& b);

struct CorrelationSummary {
    double mean = 0.0;
    double std = 0.0;
    std::size_t pairs = 0;
    std::size_t excluded = 0;
};

// Mean and population std of pairwise correlation over all unordered pairs.
// Constant grids are skipped and counted. Parallel over rows; the reduction
// runs in row order so the result does not depend on thread count.
CorrelationSummary inter_sample_correlation(std::span<const AttentionGrid> grids);

namespace serial {
CorrelationSummary inter_sample_correlation(std::span<const AttentionGrid> grids);
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct DiagnosticsReport {
    std::size_t n = 0;
    MeanStd gap;
    MeanStd source_entropy;
    MeanStd concentration;
    std::optional<MeanStd> stability;  // empty when every pair was excluded
    std::size_t stability_pairs = 0;
    std::size_t excluded_pairs = 0;
};

DiagnosticsReport diagnose_corpus(std::span<const SamplePair> pairs);

// Corpus file: one sample per line, raw maps or pre-pooled grids.
SamplePair sample_from_json(const nlohmann::json& j);
std::vector<SamplePair> read_corpus_jsonl(std::string_view text);

nlohmann::json to_json(const DiagnosticsReport& r);
std::string format_table(const DiagnosticsReport& r);

}  // namespace rewardkit::attn
