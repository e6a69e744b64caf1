#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rewardkit::agg {

// Four VIEScore-style sub-scores on [0, scale_max].
struct SubScores {
    double s_if = 0.0;   // instruction following
    double s_con = 0.0;  // source consistency
    double s_nat = 0.0;  // naturalness
    double s_art = 0.0;  // artifact absence

    bool operator==(const SubScores&) const = default;
};

enum class Coordinate { If, Con, Nat, Art };
inline constexpr Coordinate kAllCoordinates[] = {Coordinate::If, Coordinate::Con, Coordinate::Nat, Coordinate::Art};

double& at(SubScores& s, Coordinate c) noexcept;
double at(const SubScores& s, Coordinate c) noexcept;
std::string_view to_string(Coordinate c) noexcept;
Coordinate coordinate_from_string(std::string_view name);

enum class Strategy { WeightedGeometric, BucketMin, ArithmeticMean };

std::string_view to_string(Strategy s) noexcept;
Strategy strategy_from_string(std::string_view name);

// Defaults are the calibrated values: alpha 0.80, source consistency carries
// 0.6 of the SC dimension, PQ split evenly, VIEScore range [0, 25].
struct AggregationConfig {
    double alpha = 0.80;
    double w_if = 0.4;
    double w_con = 0.6;
    double w_nat = 0.5;
    double w_art = 0.5;
    Strategy strategy = Strategy::WeightedGeometric;
    double scale_max = 25.0;
    // Adds reward / scale_max to reported breakdowns for RL consumers.
    bool normalize = false;

    // Throws ConfigInvalid on any broken invariant.
    void validate() const;
    bool operator==(const AggregationConfig&) const = default;
};

struct RewardBreakdown {
    double s_sc = 0.0;
    double s_pq = 0.0;
    double reward = 0.0;
    Strategy strategy = Strategy::WeightedGeometric;
};

double aggregate_sc(double s_if, double s_con, const AggregationConfig& cfg);
double aggregate_pq(double s_nat, double s_art, const AggregationConfig& cfg);
RewardBreakdown aggregate(const SubScores& scores, const AggregationConfig& cfg);

// Central finite difference of the reward along one sub-score.
double sensitivity(const SubScores& scores, const AggregationConfig& cfg, Coordinate coordinate, double h);

nlohmann::json to_json(const AggregationConfig& cfg);
AggregationConfig config_from_json(const nlohmann::json& j);
// Shipped default configuration file contents (two-space indent, trailing newline).
std::string default_config_text();

nlohmann::json to_json(const RewardBreakdown& b, const AggregationConfig& cfg);

nlohmann::json to_json(const SubScores& s);
SubScores subscores_from_json(const nlohmann::json& j);

struct PreferencePair {
    SubScores better;
    SubScores worse;
};

// One pair per line: {"better": {s_if, s_con, s_nat, s_art}, "worse": {...}}.
std::vector<PreferencePair> read_preferences_jsonl(std::string_view text);

struct GridSearchSpec {
    double alpha_min = 0.60;
    double alpha_max = 0.95;
    double w_min = 0.40;  // w_con range; w_if = 1 - w_con
    double w_max = 0.75;
    double step = 0.05;
    std::vector<PreferencePair> validation;
};

struct GridCell {
    double alpha = 0.0;
    double w_con = 0.0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct GridSearchResult {
    AggregationConfig best;
    double best_accuracy = 0.0;
    std::size_t alpha_steps = 0;  // lattice points along alpha
    std::size_t w_steps = 0;      // lattice points along w_con
    std::vector<GridCell> surface;  // row-major: alpha outer, w_con inner
};

// Lattice values min + k*step for k = 0..n; throws ConfigInvalid when the
// range is not an integer number of steps (to 1e-9).
std::vector<double> lattice(double lo, double hi, double step);

// OpenMP over cells; argmax is a serial scan so ties resolve to the smallest
// alpha, then the smallest w_con, whatever the thread count.
GridSearchResult grid_search(const GridSearchSpec& spec);

nlohmann::json to_json(const GridSearchResult& r);

namespace serial {
GridSearchResult grid_search(const GridSearchSpec& spec);
}

}  // namespace rewardkit::agg
