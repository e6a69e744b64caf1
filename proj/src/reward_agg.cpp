#include "rewardkit/reward_agg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "rewardkit/error.hpp"
#include "rewardkit/json_text.hpp"

namespace rewardkit::agg {

using nlohmann::json;

namespace {

constexpr double kWeightSumTol = 1e-12;
constexpr double kLatticeTol = 1e-9;

void check_score(double x, double scale_max, const char* what) {
    if (!std::isfinite(x) || x < 0.0 || x > scale_max)
        throw Error(ErrorCode::DomainError,
                    std::string(what) + " = " + json(x).dump() + " outside [0, " + json(scale_max).dump() + "]");
}

void check_scores(const SubScores& s, double scale_max) {
    check_score(s.s_if, scale_max, "s_if");
    check_score(s.s_con, scale_max, "s_con");
    check_score(s.s_nat, scale_max, "s_nat");
    check_score(s.s_art, scale_max, "s_art");
}

// Convex combination, pinned inside [min, max] of its inputs so equal inputs
// return themselves exactly and rounding never escapes the scale.
double convex2(double a, double wa, double b, double wb) {
    const double v = wa * a + wb * b;
    return std::clamp(v, std::min(a, b), std::max(a, b));
}

// base^exponent with 0^0 := 1 (limit as the exponent vanishes first).
double power_factor(double base, double exponent) {
    if (exponent == 0.0) return 1.0;
    if (base == 0.0) return 0.0;
    return std::pow(base, exponent);
}

double weighted_geometric(double sc, double pq, double alpha) {
    if (sc == pq) return sc;
    const double r = power_factor(sc, alpha) * power_factor(pq, 1.0 - alpha);
    return std::clamp(r, std::min(sc, pq), std::max(sc, pq));
}

double bucket_min(const SubScores& s) {
    const double sc_min = std::min(s.s_if, s.s_con);
    const double pq_min = std::min(s.s_nat, s.s_art);
    if (sc_min == pq_min) return sc_min;
    return std::clamp(std::sqrt(sc_min * pq_min), std::min(sc_min, pq_min), std::max(sc_min, pq_min));
}

double arithmetic_mean(const SubScores& s) {
    const double lo = std::min({s.s_if, s.s_con, s.s_nat, s.s_art});
    const double hi = std::max({s.s_if, s.s_con, s.s_nat, s.s_art});
    return std::clamp((s.s_if + s.s_con + s.s_nat + s.s_art) / 4.0, lo, hi);
}

double get_number(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number()) throw Error(ErrorCode::ConfigInvalid, std::string("config key '") + key + "' must be a number");
    return v.get<double>();
}

AggregationConfig cell_config(double alpha, double w_con) {
    AggregationConfig cfg;
    cfg.alpha = alpha;
    cfg.w_con = w_con;
    cfg.w_if = 1.0 - w_con;
    cfg.w_nat = 0.5;
    cfg.w_art = 0.5;
    cfg.strategy = Strategy::WeightedGeometric;
    cfg.scale_max = 25.0;
    return cfg;
}

struct Lattices {
    std::vector<double> alphas;
    std::vector<double> ws;
};

Lattices prepare(const GridSearchSpec& spec) {
    if (spec.validation.empty()) throw Error(ErrorCode::EmptyValidationSet, "grid search needs preference pairs");
    Lattices l{lattice(spec.alpha_min, spec.alpha_max, spec.step), lattice(spec.w_min, spec.w_max, spec.step)};
    if (l.alphas.front() < 0.0 || l.alphas.back() > 1.0)
        throw Error(ErrorCode::ConfigInvalid, "alpha range must lie in [0, 1]");
    if (l.ws.front() < 0.0 || l.ws.back() > 1.0) throw Error(ErrorCode::ConfigInvalid, "w_con range must lie in [0, 1]");
    for (const auto& p : spec.validation) {
        check_scores(p.better, 25.0);
        check_scores(p.worse, 25.0);
    }
    return l;
}

GridSearchResult finish(const Lattices& l, std::vector<GridCell> surface) {
    GridSearchResult result;
    result.alpha_steps = l.alphas.size();
    result.w_steps = l.ws.size();
    // Row-major scan with strict improvement: first maximum wins, which is
    // the smallest alpha and then the smallest w_con.
    std::size_t best = 0;
    for (std::size_t i = 1; i < surface.size(); ++i)
        if (surface[i].correct > surface[best].correct) best = i;
    result.best = cell_config(surface[best].alpha, surface[best].w_con);
    result.best_accuracy = surface[best].accuracy;
    result.surface = std::move(surface);
    return result;
}

}  // namespace

double& at(SubScores& s, Coordinate c) noexcept {
    switch (c) {
        case Coordinate::If: return s.s_if;
        case Coordinate::Con: return s.s_con;
        case Coordinate::Nat: return s.s_nat;
        case Coordinate::Art: break;
    }
    return s.s_art;
}

double at(const SubScores& s, Coordinate c) noexcept { return at(const_cast<SubScores&>(s), c); }

std::string_view to_string(Coordinate c) noexcept {
    switch (c) {
        case Coordinate::If: return "s_if";
        case Coordinate::Con: return "s_con";
        case Coordinate::Nat: return "s_nat";
        case Coordinate::Art: break;
    }
    return "s_art";
}

Coordinate coordinate_from_string(std::string_view name) {
    for (auto c : kAllCoordinates)
        if (to_string(c) == name) return c;
    throw Error(ErrorCode::DomainError, "unknown sub-score coordinate '" + std::string(name) + "'");
}

std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::WeightedGeometric: return "WeightedGeometric";
        case Strategy::BucketMin: return "BucketMin";
        case Strategy::ArithmeticMean: break;
    }
    return "ArithmeticMean";
}

Strategy strategy_from_string(std::string_view name) {
    std::string n;
    for (char c : name)
        if (c != '-' && c != '_') n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (n == "weightedgeometric" || n == "geometric") return Strategy::WeightedGeometric;
    if (n == "bucketmin" || n == "min" || n == "bucket") return Strategy::BucketMin;
    if (n == "arithmeticmean" || n == "arithmetic" || n == "mean") return Strategy::ArithmeticMean;
    throw Error(ErrorCode::ConfigInvalid, "unknown aggregation strategy '" + std::string(name) + "'");
}

void AggregationConfig::validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::ConfigInvalid, m); };
    if (!std::isfinite(alpha) || alpha < 0.0 || alpha > 1.0) bad("alpha must lie in [0, 1]");
    for (double w : {w_if, w_con, w_nat, w_art})
        if (!std::isfinite(w) || w < 0.0) bad("weights must be non-negative");
    if (std::fabs(w_if + w_con - 1.0) > kWeightSumTol) bad("w_if + w_con must equal 1");
    if (std::fabs(w_nat + w_art - 1.0) > kWeightSumTol) bad("w_nat + w_art must equal 1");
    if (!std::isfinite(scale_max) || scale_max <= 0.0) bad("scale_max must be positive");
}

double aggregate_sc(double s_if, double s_con, const AggregationConfig& cfg) {
    check_score(s_if, cfg.scale_max, "s_if");
    check_score(s_con, cfg.scale_max, "s_con");
    return convex2(s_if, cfg.w_if, s_con, cfg.w_con);
}

double aggregate_pq(double s_nat, double s_art, const AggregationConfig& cfg) {
    check_score(s_nat, cfg.scale_max, "s_nat");
    check_score(s_art, cfg.scale_max, "s_art");
    return convex2(s_nat, cfg.w_nat, s_art, cfg.w_art);
}

RewardBreakdown aggregate(const SubScores& scores, const AggregationConfig& cfg) {
    check_scores(scores, cfg.scale_max);
    RewardBreakdown b;
    b.s_sc = aggregate_sc(scores.s_if, scores.s_con, cfg);
    b.s_pq = aggregate_pq(scores.s_nat, scores.s_art, cfg);
    b.strategy = cfg.strategy;
    switch (cfg.strategy) {
        case Strategy::WeightedGeometric: b.reward = weighted_geometric(b.s_sc, b.s_pq, cfg.alpha); break;
        case Strategy::BucketMin: b.reward = bucket_min(scores); break;
        case Strategy::ArithmeticMean: b.reward = arithmetic_mean(scores); break;
    }
    return b;
}

double sensitivity(const SubScores& scores, const AggregationConfig& cfg, Coordinate coordinate, double h) {
    if (!std::isfinite(h) || h <= 0.0) throw Error(ErrorCode::DomainError, "step h must be positive");
    check_scores(scores, cfg.scale_max);
    SubScores up = scores;
    SubScores down = scores;
    at(up, coordinate) += h;
    at(down, coordinate) -= h;
    if (at(up, coordinate) > cfg.scale_max || at(down, coordinate) < 0.0)
        throw Error(ErrorCode::DomainError, "finite-difference probe leaves the score range");
    return (aggregate(up, cfg).reward - aggregate(down, cfg).reward) / (2.0 * h);
}

json to_json(const AggregationConfig& cfg) {
    ordered_json_t j;
    j["alpha"] = cfg.alpha;
    j["w_if"] = cfg.w_if;
    j["w_con"] = cfg.w_con;
    j["w_nat"] = cfg.w_nat;
    j["w_art"] = cfg.w_art;
    j["strategy"] = std::string(to_string(cfg.strategy));
    j["scale_max"] = cfg.scale_max;
    if (cfg.normalize) j["normalize"] = true;
    return json::parse(j.dump());
}

AggregationConfig config_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "aggregation config must be a JSON object");
    static const std::set<std::string> known = {"alpha", "w_if",     "w_con",    "w_nat",
                                                "w_art", "strategy", "scale_max", "normalize"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key())) throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + it.key() + "'");

    AggregationConfig cfg;
    if (j.contains("alpha")) cfg.alpha = get_number(j, "alpha");
    if (j.contains("w_if")) cfg.w_if = get_number(j, "w_if");
    if (j.contains("w_con")) cfg.w_con = get_number(j, "w_con");
    if (j.contains("w_nat")) cfg.w_nat = get_number(j, "w_nat");
    if (j.contains("w_art")) cfg.w_art = get_number(j, "w_art");
    if (j.contains("scale_max")) cfg.scale_max = get_number(j, "scale_max");
    if (j.contains("strategy")) {
        if (!j["strategy"].is_string()) throw Error(ErrorCode::ConfigInvalid, "strategy must be a string");
        cfg.strategy = strategy_from_string(j["strategy"].get<std::string>());
    }
    if (j.contains("normalize")) {
        if (!j["normalize"].is_boolean()) throw Error(ErrorCode::ConfigInvalid, "normalize must be a boolean");
        cfg.normalize = j["normalize"].get<bool>();
    }
    cfg.validate();
    return cfg;
}

std::string default_config_text() {
    const AggregationConfig cfg;
    ordered_json_t j;
    j["alpha"] = cfg.alpha;
    j["w_if"] = cfg.w_if;
    j["w_con"] = cfg.w_con;
    j["w_nat"] = cfg.w_nat;
    j["w_art"] = cfg.w_art;
    j["strategy"] = std::string(to_string(cfg.strategy));
    j["scale_max"] = cfg.scale_max;
    return j.dump(2) + "\n";
}

json to_json(const RewardBreakdown& b, const AggregationConfig& cfg) {
    json j;
    j["s_sc"] = b.s_sc;
    j["s_pq"] = b.s_pq;
    j["reward"] = b.reward;
    j["strategy"] = std::string(to_string(b.strategy));
    if (cfg.normalize) j["reward_normalized"] = b.reward / cfg.scale_max;
    return j;
}

json to_json(const SubScores& s) {
    return json{{"s_if", s.s_if}, {"s_con", s.s_con}, {"s_nat", s.s_nat}, {"s_art", s.s_art}};
}

SubScores subscores_from_json(const json& j) {
    auto num = [&](const char* key) {
        if (!j.is_object() || !j.contains(key) || !j[key].is_number())
            throw Error(ErrorCode::DomainError, std::string("sub-scores need numeric '") + key + "'");
        return j[key].get<double>();
    };
    return SubScores{num("s_if"), num("s_con"), num("s_nat"), num("s_art")};
}

std::vector<PreferencePair> read_preferences_jsonl(std::string_view text) {
    std::vector<PreferencePair> pairs;
    for (const auto& [lineno, line] : jsonl_lines(text)) {
        const auto j = json::parse(line, nullptr, false);
        try {
            if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidInput, "invalid JSON");
            pairs.push_back(PreferencePair{subscores_from_json(j.at("better")), subscores_from_json(j.at("worse"))});
        } catch (const std::exception& e) {
            throw Error(ErrorCode::InvalidInput, "preference line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pairs;
}

std::vector<double> lattice(double lo, double hi, double step) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !std::isfinite(step) || step <= 0.0 || hi < lo)
        throw Error(ErrorCode::ConfigInvalid, "grid range must satisfy lo <= hi with a positive step");
    const double span = (hi - lo) / step;
    const auto n = static_cast<long long>(std::llround(span));
    if (std::fabs(static_cast<double>(n) * step - (hi - lo)) > kLatticeTol)
        throw Error(ErrorCode::ConfigInvalid, "step does not divide the grid range");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n) + 1);
    for (long long k = 0; k <= n; ++k) values.push_back(lo + static_cast<double>(k) * step);
    return values;
}

GridSearchResult grid_search(const GridSearchSpec& spec) {
    const Lattices l = prepare(spec);
    const std::size_t np = spec.validation.size();
    const std::size_t na = l.alphas.size();
    const std::size_t nw = l.ws.size();

    // Dimension scores do not depend on alpha; hoist them out of the cell loop.
    const AggregationConfig pq_cfg = cell_config(l.alphas.front(), l.ws.front());
    std::vector<double> pq_better(np), pq_worse(np);
    for (std::size_t p = 0; p < np; ++p) {
        const auto& pair = spec.validation[p];
        pq_better[p] = aggregate_pq(pair.better.s_nat, pair.better.s_art, pq_cfg);
        pq_worse[p] = aggregate_pq(pair.worse.s_nat, pair.worse.s_art, pq_cfg);
    }
    std::vector<double> sc_better(nw * np), sc_worse(nw * np);
    for (std::size_t w = 0; w < nw; ++w) {
        const AggregationConfig cfg = cell_config(l.alphas.front(), l.ws[w]);
        for (std::size_t p = 0; p < np; ++p) {
            const auto& pair = spec.validation[p];
            sc_better[w * np + p] = aggregate_sc(pair.better.s_if, pair.better.s_con, cfg);
            sc_worse[w * np + p] = aggregate_sc(pair.worse.s_if, pair.worse.s_con, cfg);
        }
    }

    std::vector<GridCell> surface(na * nw);
    const auto ncells = static_cast<long long>(na * nw);
#pragma omp parallel for schedule(static)
    for (long long cell = 0; cell < ncells; ++cell) {
        const std::size_t a = static_cast<std::size_t>(cell) / nw;
        const std::size_t w = static_cast<std::size_t>(cell) % nw;
        const double alpha = l.alphas[a];
        const double* scb = &sc_better[w * np];
        const double* scw = &sc_worse[w * np];
        std::size_t correct = 0;
        for (std::size_t p = 0; p < np; ++p) {
            const double rb = weighted_geometric(scb[p], pq_better[p], alpha);
            const double rw = weighted_geometric(scw[p], pq_worse[p], alpha);
            correct += rb > rw ? 1 : 0;
        }
        surface[static_cast<std::size_t>(cell)] =
            GridCell{alpha, l.ws[w], correct, static_cast<double>(correct) / static_cast<double>(np)};
    }
    return finish(l, std::move(surface));
}

namespace serial {

GridSearchResult grid_search(const GridSearchSpec& spec) {
    const Lattices l = prepare(spec);
    std::vector<GridCell> surface;
    surface.reserve(l.alphas.size() * l.ws.size());
    for (double alpha : l.alphas) {
        for (double w_con : l.ws) {
            const AggregationConfig cfg = cell_config(alpha, w_con);
            std::size_t correct = 0;
            for (const auto& pair : spec.validation)
                if (aggregate(pair.better, cfg).reward > aggregate(pair.worse, cfg).reward) ++correct;
            surface.push_back(
                GridCell{alpha, w_con, correct, static_cast<double>(correct) / static_cast<double>(spec.validation.size())});
        }
    }
    return finish(l, std::move(surface));
}

}  // namespace serial

json to_json(const GridSearchResult& r) {
    json j;
    j["best"] = to_json(r.best);
    j["best_accuracy"] = r.best_accuracy;
    j["cells"] = r.surface.size();
    json alphas = json::array(), ws = json::array(), rows = json::array();
    for (std::size_t a = 0; a < r.alpha_steps; ++a) alphas.push_back(r.surface[a * r.w_steps].alpha);
    for (std::size_t w = 0; w < r.w_steps; ++w) ws.push_back(r.surface[w].w_con);
    for (std::size_t a = 0; a < r.alpha_steps; ++a) {
        json row = json::array();
        for (std::size_t w = 0; w < r.w_steps; ++w) row.push_back(r.surface[a * r.w_steps + w].accuracy);
        rows.push_back(std::move(row));
    }
    j["alpha_values"] = std::move(alphas);
    j["w_con_values"] = std::move(ws);
    j["accuracy"] = std::move(rows);
    return j;
}

}  // namespace rewardkit::agg
