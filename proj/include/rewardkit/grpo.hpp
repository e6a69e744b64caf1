#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rewardkit/reward_agg.hpp"

namespace rewardkit::grpo {

struct GrpoConfig {
    std::size_t group_size = 4;
    double beta = 0.02;           // KL coefficient
    double epsilon_std = 1e-8;    // below this spread the group is degenerate
    // Symmetric clip applied after standardization. Off unless set; 5.0 is
    // the usual value for diffusion-policy training.
    std::optional<double> advantage_clip;

    void validate() const;
};

struct AdvantageVector {
    std::vector<double> advantages;
    bool degenerate = false;
};

// Standardize within the group using the population standard deviation.
// A group whose spread is below epsilon_std yields all-zero advantages.
AdvantageVector group_advantages(std::span<const double> rewards, const GrpoConfig& cfg);

struct SurrogateInputs {
    std::vector<double> ratios;  // pi_theta / pi_old per group member
    AdvantageVector advantages;
    double kl_value = 0.0;       // externally estimated KL(pi_theta || pi_ref)
};

// (1/G) * sum(ratio_i * A_i) - beta * KL, without clipping.
double surrogate_objective(const SurrogateInputs& inp, const GrpoConfig& cfg);

using Quality = std::array<double, 4>;  // s_if, s_con, s_nat, s_art

// Toy evolution-strategy loop: not policy training, just a way to watch how
// each aggregation strategy shapes the advantage signal.
struct SimSpec {
    Quality initial{12.0, 12.0, 12.0, 12.0};
    double sigma = 1.0;   // exploration noise
    double eta = 0.5;     // step size
    std::size_t steps = 500;
    agg::Strategy strategy = agg::Strategy::WeightedGeometric;
    std::uint64_t seed = 0;
    GrpoConfig grpo = [] { GrpoConfig g; g.group_size = 12; return g; }();
    agg::AggregationConfig agg;

    void validate() const;
};

struct TrajectoryPoint {
    std::size_t step = 0;
    double mean_reward = 0.0;  // mean of this step's sampled group
    Quality quality{};         // theta after this step's update
    bool degenerate = false;
    // Largest advantage change when every candidate coordinate strictly above
    // its dimension minimum is pulled halfway toward that minimum. Zero means
    // those coordinates contributed nothing to the step's advantages.
    double dead_coordinate_influence = 0.0;
};

std::vector<TrajectoryPoint> simulate_dynamics(const SimSpec& spec);

nlohmann::json to_json(const TrajectoryPoint& p);
// One JSON record per line.
std::string to_jsonl(const std::vector<TrajectoryPoint>& trajectory);

}  // namespace rewardkit::grpo
