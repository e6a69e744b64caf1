// Synthetic fixtures shared by the unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rewardkit/attn_diag.hpp"
#include "rewardkit/bench_eval.hpp"
#include "rewardkit/judge_io.hpp"
#include "rewardkit/rng.hpp"

namespace fixtures {

using namespace rewardkit;

// One source set per instruction. Six candidates cover every overall tier and
// give each tier a second member that differs only in the sub-dimensions.
inline std::vector<std::vector<bench::BenchSample>> bench_pool(std::size_t sets) {
    using bench::Tier;
    const bench::TierTriple triples[] = {
        {Tier::Good, Tier::Good, Tier::Good},       {Tier::Medium, Tier::Good, Tier::Good},
        {Tier::Medium, Tier::Medium, Tier::Medium}, {Tier::Good, Tier::Bad, Tier::Medium},
        {Tier::Bad, Tier::Bad, Tier::Bad},          {Tier::Medium, Tier::Bad, Tier::Bad},
    };
    // categories in a 2:1:1 ratio
    const bench::Category cats[] = {bench::Category::General, bench::Category::General, bench::Category::HumanBasic,
                                    bench::Category::HumanFine};
    std::vector<std::vector<bench::BenchSample>> pool;
    for (std::size_t s = 0; s < sets; ++s) {
        std::vector<bench::BenchSample> set;
        for (std::size_t k = 0; k < std::size(triples); ++k) {
            bench::BenchSample b;
            b.sample_id = "s" + std::to_string(s) + "-" + std::to_string(k);
            b.model_id = "model-" + std::to_string(k % 11);
            b.instruction = "instruction " + std::to_string(s);
            b.source_ref = "src/" + std::to_string(s) + ".png";
            b.edited_ref = "out/" + b.sample_id + ".png";
            b.tiers = triples[k];
            b.category = cats[s % 4];
            b.subtask = "task" + std::to_string(s % 5);
            set.push_back(b);
        }
        pool.push_back(std::move(set));
    }
    return pool;
}

// Negated gold rank of each sample within its whole source set. A sample can
// sit in several groups, and every group's gold order is the restriction of
// this set-level order, so the scorer is a perfect oracle for all of them.
inline bench::PredictedScores oracle_scores(const std::vector<std::vector<bench::BenchSample>>& pool) {
    bench::PredictedScores p;
    for (const auto& set : pool) {
        const auto ranked = bench::hierarchical_rank(set);
        for (std::size_t i = 0; i < ranked.size(); ++i) p[ranked[i].sample_id] = -static_cast<double>(i + 1);
    }
    return p;
}

inline bench::PredictedScores constant_scores(const std::vector<bench::EvalGroup>& groups, double c = 12.5) {
    bench::PredictedScores p;
    for (const auto& g : groups)
        for (const auto& m : g.members) p[m.sample.sample_id] = c;
    return p;
}

inline attn::AttentionGrid uniform_grid() {
    attn::AttentionGrid g;
    g.fill(1.0 / static_cast<double>(attn::kGridCells));
    return g;
}

inline attn::AttentionGrid one_hot(std::size_t cell) {
    attn::AttentionGrid g{};
    g[cell] = 1.0;
    return g;
}

// Mass spread evenly over one 12x12 quadrant (q = 0..3, row-major quadrants).
// Two different quadrants give grids that are block-wise one-hot vectors over
// four equal blocks.
inline attn::AttentionGrid quadrant_grid(int q) {
    attn::AttentionGrid g{};
    const std::size_t r0 = (q / 2) * 12, c0 = (q % 2) * 12;
    for (std::size_t r = r0; r < r0 + 12; ++r)
        for (std::size_t c = c0; c < c0 + 12; ++c) g[r * attn::kGridSide + c] = 1.0 / 144.0;
    return g;
}

inline void normalize(attn::AttentionGrid& g) {
    double s = 0.0;
    for (double v : g) s += v;
    for (double& v : g) v /= s;
}

// Source attention piles into three sink cells; edited attention is spread out.
inline std::vector<attn::SamplePair> collapsed_corpus(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<attn::SamplePair> out;
    for (std::size_t i = 0; i < n; ++i) {
        attn::SamplePair p;
        p.sample_id = "c" + std::to_string(i);
        const double sink_mass = 0.85 + 0.1 * rng.uniform01();
        for (double& v : p.source) v = rng.uniform01();
        normalize(p.source);
        for (double& v : p.source) v *= (1.0 - sink_mass);
        const std::size_t sinks[] = {rng.below(attn::kGridCells), rng.below(attn::kGridCells), rng.below(attn::kGridCells)};
        for (std::size_t s : sinks) p.source[s] += sink_mass / 3.0;
        for (double& v : p.edited) v = 0.5 + rng.uniform01();
        normalize(p.edited);
        out.push_back(p);
    }
    return out;
}

// Both grids broadly spread with mild structure.
inline std::vector<attn::SamplePair> balanced_corpus(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<attn::SamplePair> out;
    for (std::size_t i = 0; i < n; ++i) {
        attn::SamplePair p;
        p.sample_id = "b" + std::to_string(i);
        for (double& v : p.source) v = 0.5 + rng.uniform01();
        for (double& v : p.edited) v = 0.5 + rng.uniform01();
        normalize(p.source);
        normalize(p.edited);
        out.push_back(p);
    }
    return out;
}

// A valid SC output: distinct (not necessarily contiguous) ids, in-range
// boxes, labels with characters that need JSON escaping, reasoning that cites
// every region and holds exactly one global token, and scores that are a mix
// of integers, quarter steps and arbitrary doubles.
inline judge::ScOutput random_sc_output(Rng& rng) {
    static const std::string pieces[] = {"red ", "car", "\"quoted\"", "back\\slash", "caf\u00e9 ", "\u732b", "tab\t", "line\n", "{brace}", "<|not a token|>"};
    auto text = [&](std::size_t n) {
        std::string t;
        for (std::size_t i = 0; i < n; ++i) t += pieces[rng.below(std::size(pieces))];
        return t;
    };
    auto score = [&] {
        switch (rng.below(3)) {
            case 0: return static_cast<double>(rng.below(26));
            case 1: return static_cast<double>(rng.below(101)) / 4.0;
            default: return 25.0 * rng.uniform01();
        }
    };
    judge::ScOutput out;
    const std::size_t n = rng.below(6);
    std::vector<std::int64_t> ids;
    while (ids.size() < n) {
        const auto id = static_cast<std::int64_t>(rng.below(40));
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
    std::vector<std::string> parts;
    for (auto id : ids) {
        judge::EditRegion r;
        r.id = id;
        r.label = text(1 + rng.below(3));
        r.bbox.x1 = static_cast<int>(rng.below(judge::kCoordMax));
        r.bbox.y1 = static_cast<int>(rng.below(judge::kCoordMax));
        r.bbox.x2 = r.bbox.x1 + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(judge::kCoordMax - r.bbox.x1)));
        r.bbox.y2 = r.bbox.y1 + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(judge::kCoordMax - r.bbox.y1)));
        out.regions.push_back(r);
        parts.push_back(text(rng.below(3)) + "<|bbox_" + std::to_string(id) + "|>" + r.label + " " + text(rng.below(3)));
    }
    parts.insert(parts.begin() + static_cast<std::ptrdiff_t>(rng.below(parts.size() + 1)), "<|global|> " + text(1 + rng.below(3)));
    for (const auto& p : parts) out.reasoning += p;
    out.scores = {score(), score()};
    return out;
}

}  // namespace fixtures
