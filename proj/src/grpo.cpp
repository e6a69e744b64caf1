#include "rewardkit/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "rewardkit/error.hpp"
#include "rewardkit/rng.hpp"

namespace rewardkit::grpo {

using nlohmann::json;

namespace {

agg::SubScores to_scores(const Quality& q) { return {q[0], q[1], q[2], q[3]}; }

std::vector<double> group_rewards(const std::vector<Quality>& candidates, const agg::AggregationConfig& cfg) {
    std::vector<double> rewards;
    rewards.reserve(candidates.size());
    for (const auto& c : candidates) rewards.push_back(agg::aggregate(to_scores(c), cfg).reward);
    return rewards;
}

// Pull every coordinate strictly above its dimension minimum halfway toward
// it. The minimum of each (if, con) and (nat, art) pair is left alone.
Quality squeeze_toward_minimum(const Quality& c) {
    Quality out = c;
    for (std::size_t d = 0; d < 4; d += 2) {
        const double lo = std::min(c[d], c[d + 1]);
        for (std::size_t k = d; k < d + 2; ++k)
            if (c[k] > lo) out[k] = lo + 0.5 * (c[k] - lo);
    }
    return out;
}

}  // namespace

void GrpoConfig::validate() const {
    if (group_size < 2) throw Error(ErrorCode::GroupTooSmall, "group_size must be at least 2");
    if (!std::isfinite(beta) || beta < 0.0) throw Error(ErrorCode::ConfigInvalid, "beta must be non-negative");
    if (!std::isfinite(epsilon_std) || epsilon_std <= 0.0)
        throw Error(ErrorCode::ConfigInvalid, "epsilon_std must be positive");
    if (advantage_clip && !(*advantage_clip > 0.0))
        throw Error(ErrorCode::ConfigInvalid, "advantage_clip must be positive");
}

AdvantageVector group_advantages(std::span<const double> rewards, const GrpoConfig& cfg) {
    if (rewards.size() < 2) throw Error(ErrorCode::GroupTooSmall, "a group needs at least two rewards");
    for (double r : rewards)
        if (!std::isfinite(r)) throw Error(ErrorCode::DomainError, "group rewards must be finite");

    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;
    const double sd = std::sqrt(var);

    AdvantageVector out;
    out.advantages.assign(rewards.size(), 0.0);
    if (sd < cfg.epsilon_std) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        double a = (rewards[i] - mean) / sd;
        if (cfg.advantage_clip) a = std::clamp(a, -*cfg.advantage_clip, *cfg.advantage_clip);
        out.advantages[i] = a;
    }
    return out;
}

double surrogate_objective(const SurrogateInputs& inp, const GrpoConfig& cfg) {
    const auto& adv = inp.advantages.advantages;
    if (inp.ratios.size() != adv.size())
        throw Error(ErrorCode::LengthMismatch, "ratios and advantages differ in length");
    if (inp.ratios.empty()) throw Error(ErrorCode::GroupTooSmall, "empty group");
    for (double r : inp.ratios)
        if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorCode::NonPositiveRatio, "likelihood ratios must be positive");
    if (!std::isfinite(inp.kl_value) || inp.kl_value < 0.0)
        throw Error(ErrorCode::DomainError, "kl_value must be non-negative");

    double sum = 0.0;
    for (std::size_t i = 0; i < adv.size(); ++i) sum += inp.ratios[i] * adv[i];
    return sum / static_cast<double>(adv.size()) - cfg.beta * inp.kl_value;
}

void SimSpec::validate() const {
    grpo.validate();
    agg.validate();
    for (double q : initial)
        if (!std::isfinite(q) || q < 0.0 || q > agg.scale_max)
            throw Error(ErrorCode::DomainError, "initial quality outside the score range");
    if (!std::isfinite(sigma) || sigma < 0.0) throw Error(ErrorCode::ConfigInvalid, "sigma must be non-negative");
    if (!std::isfinite(eta) || eta <= 0.0) throw Error(ErrorCode::ConfigInvalid, "eta must be positive");
    if (steps == 0) throw Error(ErrorCode::ConfigInvalid, "steps must be positive");
}

std::vector<TrajectoryPoint> simulate_dynamics(const SimSpec& spec) {
    spec.validate();
    agg::AggregationConfig cfg = spec.agg;
    cfg.strategy = spec.strategy;
    const double hi = cfg.scale_max;
    const std::size_t g = spec.grpo.group_size;

    Rng rng(spec.seed);
    Quality theta = spec.initial;
    std::vector<TrajectoryPoint> trajectory;
    trajectory.reserve(spec.steps);
    std::vector<Quality> candidates(g);
    std::vector<Quality> squeezed(g);

    for (std::size_t step = 0; step < spec.steps; ++step) {
        for (auto& c : candidates)
            for (std::size_t k = 0; k < 4; ++k) c[k] = std::clamp(theta[k] + spec.sigma * rng.gaussian(), 0.0, hi);

        const auto rewards = group_rewards(candidates, cfg);
        const auto adv = group_advantages(rewards, spec.grpo);

        for (std::size_t i = 0; i < g; ++i) squeezed[i] = squeeze_toward_minimum(candidates[i]);
        const auto adv_squeezed = group_advantages(group_rewards(squeezed, cfg), spec.grpo);
        double influence = 0.0;
        for (std::size_t i = 0; i < g; ++i)
            influence = std::max(influence, std::fabs(adv.advantages[i] - adv_squeezed.advantages[i]));

        Quality delta{};
        for (std::size_t i = 0; i < g; ++i)
            for (std::size_t k = 0; k < 4; ++k) delta[k] += adv.advantages[i] * (candidates[i][k] - theta[k]);
        for (std::size_t k = 0; k < 4; ++k)
            theta[k] = std::clamp(theta[k] + spec.eta * delta[k] / static_cast<double>(g), 0.0, hi);

        double mean = 0.0;
        for (double r : rewards) mean += r;
        mean /= static_cast<double>(g);
        trajectory.push_back(TrajectoryPoint{step, mean, theta, adv.degenerate, influence});
    }
    return trajectory;
}

json to_json(const TrajectoryPoint& p) {
    json j;
    j["step"] = p.step;
    j["mean_reward"] = p.mean_reward;
    j["quality"] = p.quality;
    j["degenerate"] = p.degenerate;
    j["dead_coordinate_influence"] = p.dead_coordinate_influence;
    return j;
}

std::string to_jsonl(const std::vector<TrajectoryPoint>& trajectory) {
    std::string out;
    for (const auto& p : trajectory) {
        out += to_json(p).dump();
        out += '\n';
    }
    return out;
}

}  // namespace rewardkit::grpo
