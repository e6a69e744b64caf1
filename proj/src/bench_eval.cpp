#include "rewardkit/bench_eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "rewardkit/error.hpp"
#include "rewardkit/json_text.hpp"
#include "rewardkit/rng.hpp"

namespace rewardkit::bench {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out;
    for (char c : s) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

DimensionConsensus tally(std::span<const AnnotationBallot> ballots, Tier TierTriple::*dim) {
    DimensionConsensus d;
    for (const auto& b : ballots) ++d.votes[static_cast<int>(b.tiers.*dim)];
    for (int t = 0; t < 3; ++t)
        if (d.votes[t] >= kConsensusVotes) d.tier = static_cast<Tier>(t);
    return d;
}

using RankKey = std::tuple<int, int, int>;

RankKey rank_key(const TierTriple& t, TieBreak order) {
    const int o = static_cast<int>(t.overall);
    const int pf = static_cast<int>(t.prompt_following);
    const int q = static_cast<int>(t.quality);
    return order == TieBreak::PromptFollowingFirst ? RankKey{o, pf, q} : RankKey{o, q, pf};
}

EvalGroup make_group(std::string id, const std::vector<const BenchSample*>& picked, TieBreak order, Rng& rng) {
    std::vector<BenchSample> samples;
    for (const auto* s : picked) samples.push_back(*s);
    auto ranked = hierarchical_rank(samples, order);

    EvalGroup g;
    g.group_id = std::move(id);
    g.size = static_cast<int>(ranked.size());
    g.category = ranked.front().category;
    g.instruction = ranked.front().instruction;
    for (std::size_t r = 0; r < ranked.size(); ++r)
        g.members.push_back(GroupMember{std::move(ranked[r]), static_cast<int>(r) + 1});
    for (std::size_t i = g.members.size() - 1; i > 0; --i) std::swap(g.members[i], g.members[rng.below(i + 1)]);
    return g;
}

// All index combinations within one source set that form a valid group.
using Combo = std::vector<std::size_t>;

std::vector<Combo> pair_combos(const std::vector<BenchSample>& set) {
    std::vector<Combo> out;
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t j = i + 1; j < set.size(); ++j)
            if (!(set[i].tiers == set[j].tiers)) out.push_back({i, j});
    return out;
}

std::vector<Combo> triple_combos(const std::vector<BenchSample>& set) {
    std::vector<std::size_t> by_tier[3];
    for (std::size_t i = 0; i < set.size(); ++i) by_tier[static_cast<int>(set[i].tiers.overall)].push_back(i);
    std::vector<Combo> out;
    for (auto g : by_tier[2])
        for (auto m : by_tier[1])
            for (auto b : by_tier[0]) out.push_back({g, m, b});
    return out;
}

std::vector<Combo> quad_combos(const std::vector<BenchSample>& set) {
    std::vector<Combo> out;
    for (const auto& base : triple_combos(set)) {
        for (std::size_t extra = 0; extra < set.size(); ++extra) {
            if (std::find(base.begin(), base.end(), extra) != base.end()) continue;
            // The fourth shares its overall tier with exactly one base member
            // and must differ from it in a sub-dimension.
            for (auto member : base) {
                if (set[member].tiers.overall == set[extra].tiers.overall && !(set[member].tiers == set[extra].tiers)) {
                    Combo c = base;
                    c.push_back(extra);
                    out.push_back(std::move(c));
                }
            }
        }
    }
    return out;
}

template <class ComboFn>
void draw_groups(const std::vector<std::vector<BenchSample>>& pool, std::size_t count, int size, ComboFn combos_of,
                 TieBreak order, Rng& rng, std::vector<EvalGroup>& out) {
    if (count == 0) return;
    std::vector<std::vector<Combo>> combos;
    std::vector<std::size_t> eligible;
    for (std::size_t s = 0; s < pool.size(); ++s) {
        combos.push_back(combos_of(pool[s]));
        if (!combos.back().empty()) eligible.push_back(s);
    }
    if (eligible.empty())
        throw Error(ErrorCode::InsufficientPool, "no source set can form a " + std::to_string(size) + "-pair group");
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t s = eligible[rng.below(eligible.size())];
        const auto& combo = combos[s][rng.below(combos[s].size())];
        std::vector<const BenchSample*> picked;
        for (auto i : combo) picked.push_back(&pool[s][i]);
        char id[32];
        std::snprintf(id, sizeof id, "g%dp-%05zu", size, k);
        out.push_back(make_group(id, picked, order, rng));
    }
}

json tiers_json(const TierTriple& t) {
    return json{{"prompt_following", to_string(t.prompt_following)},
                {"quality", to_string(t.quality)},
                {"overall", to_string(t.overall)}};
}

TierTriple tiers_from_json(const json& j) {
    return TierTriple{tier_from_string(j.at("prompt_following").get<std::string>()),
                      tier_from_string(j.at("quality").get<std::string>()),
                      tier_from_string(j.at("overall").get<std::string>())};
}

std::string optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return {};
    if (j[key].is_string()) return j[key].get<std::string>();
    return j[key].dump();
}

int size_index(int size) { return size - 2; }

BenchReport reduce(const std::vector<EvalGroup>& groups, const std::vector<GroupResult>& results) {
    BenchReport r;
    struct Tally {
        std::array<std::size_t, 3> groups{}, correct{};
    };
    std::map<Category, Tally> per_cat;
    double tau_sum = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const int s = size_index(groups[i].size);
        ++r.group_counts[s];
        auto& cat = per_cat[groups[i].category];
        ++cat.groups[s];
        if (results[i].correct) {
            ++r.correct_counts[s];
            ++cat.correct[s];
        }
        if (results[i].tau_defined) {
            tau_sum += results[i].tau;
            ++r.tau_groups;
        } else {
            ++r.tau_excluded;
        }
    }

    auto size_mean = [](const std::array<std::size_t, 3>& n, const std::array<std::size_t, 3>& c,
                        std::array<std::optional<double>, 3>* per_size) -> std::optional<double> {
        double sum = 0.0;
        int present = 0;
        for (int s = 0; s < 3; ++s) {
            if (n[s] == 0) continue;
            const double acc = static_cast<double>(c[s]) / static_cast<double>(n[s]);
            if (per_size) (*per_size)[s] = acc;
            sum += acc;
            ++present;
        }
        if (present == 0) return std::nullopt;
        return sum / present;
    };

    std::array<std::optional<double>, 3> per_size;
    r.overall = size_mean(r.group_counts, r.correct_counts, &per_size);
    r.accuracy_2p = per_size[0];
    r.accuracy_3p = per_size[1];
    r.accuracy_4p = per_size[2];
    if (r.tau_groups > 0) r.mean_tau = tau_sum / static_cast<double>(r.tau_groups);

    for (const auto& [cat, t] : per_cat) {
        CategoryStats cs;
        cs.groups = t.groups[0] + t.groups[1] + t.groups[2];
        cs.correct = t.correct[0] + t.correct[1] + t.correct[2];
        cs.accuracy = cs.groups ? static_cast<double>(cs.correct) / static_cast<double>(cs.groups) : 0.0;
        cs.size_mean_accuracy = size_mean(t.groups, t.correct, nullptr);
        r.categories[cat] = cs;
    }
    return r;
}

void check_groups(const std::vector<EvalGroup>& groups) {
    for (const auto& g : groups)
        if (g.size < 2 || g.size > 4 || g.members.size() != static_cast<std::size_t>(g.size))
            throw Error(ErrorCode::InvalidInput, "group " + g.group_id + " must hold 2, 3 or 4 members");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Field order follows the documented line layout.
ordered_json_t group_json(const EvalGroup& g) {
    ordered_json_t j;
    j["group_id"] = g.group_id;
    j["size"] = g.size;
    j["category"] = std::string(to_string(g.category));
    j["instruction"] = g.instruction;
    j["samples"] = ordered_json_t::array();
    for (const auto& m : g.members) {
        ordered_json_t s;
        s["sample_id"] = m.sample.sample_id;
        s["model_id"] = m.sample.model_id;
        s["tiers"] = ordered_json_t::parse(tiers_json(m.sample.tiers).dump());
        s["gold_rank"] = m.gold_rank;
        s["source_ref"] = m.sample.source_ref;
        s["edited_ref"] = m.sample.edited_ref;
        if (!m.sample.subtask.empty()) s["subtask"] = m.sample.subtask;
        j["samples"].push_back(std::move(s));
    }
    return j;
}

}  // namespace

std::string_view to_string(Tier t) noexcept {
    switch (t) {
        case Tier::Good: return "good";
        case Tier::Medium: return "medium";
        case Tier::Bad: break;
    }
    return "bad";
}

Tier tier_from_string(std::string_view s) {
    const auto l = lower(s);
    if (l == "good") return Tier::Good;
    if (l == "medium") return Tier::Medium;
    if (l == "bad" || l == "poor") return Tier::Bad;
    throw Error(ErrorCode::InvalidInput, "unknown tier '" + std::string(s) + "'");
}

std::optional<TierTriple> ConsensusResult::labels() const {
    if (prompt_following.needs_review() || quality.needs_review() || overall.needs_review()) return std::nullopt;
    return TierTriple{*prompt_following.tier, *quality.tier, *overall.tier};
}

ConsensusResult consensus_vote(std::span<const AnnotationBallot> ballots) {
    if (ballots.size() != kAnnotatorsPerSample)
        throw Error(ErrorCode::WrongBallotCount,
                    "expected " + std::to_string(kAnnotatorsPerSample) + " ballots, got " + std::to_string(ballots.size()));
    std::set<std::string> ids;
    for (const auto& b : ballots)
        if (!ids.insert(b.annotator_id).second)
            throw Error(ErrorCode::DuplicateAnnotator, "annotator '" + b.annotator_id + "' voted twice");
    return ConsensusResult{tally(ballots, &TierTriple::prompt_following), tally(ballots, &TierTriple::quality),
                           tally(ballots, &TierTriple::overall)};
}

std::string_view to_string(Category c) noexcept {
    switch (c) {
        case Category::General: return "General";
        case Category::HumanBasic: return "Human-Basic";
        case Category::HumanFine: break;
    }
    return "Human-Fine";
}

Category category_from_string(std::string_view s) {
    std::string l;
    for (char c : s)
        if (c != '-' && c != '_' && c != ' ') l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (l == "general") return Category::General;
    if (l == "humanbasic") return Category::HumanBasic;
    if (l == "humanfine") return Category::HumanFine;
    throw Error(ErrorCode::InvalidInput, "unknown category '" + std::string(s) + "'");
}

std::vector<BenchSample> hierarchical_rank(std::vector<BenchSample> samples, TieBreak order) {
    if (samples.size() < 2) throw Error(ErrorCode::InsufficientPool, "ranking needs at least two samples");
    std::stable_sort(samples.begin(), samples.end(), [order](const BenchSample& a, const BenchSample& b) {
        return rank_key(a.tiers, order) > rank_key(b.tiers, order);
    });
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i - 1].tiers == samples[i].tiers)
            throw Error(ErrorCode::StrictOrderUnavailable,
                        "samples '" + samples[i - 1].sample_id + "' and '" + samples[i].sample_id + "' share every tier");
    return samples;
}

std::vector<EvalGroup> compose_groups(const std::vector<std::vector<BenchSample>>& pool, GroupCounts counts,
                                      std::uint64_t seed, TieBreak order) {
    Rng rng(seed);
    std::vector<EvalGroup> out;
    out.reserve(counts.two + counts.three + counts.four);
    draw_groups(pool, counts.two, 2, pair_combos, order, rng, out);
    draw_groups(pool, counts.three, 3, triple_combos, order, rng, out);
    draw_groups(pool, counts.four, 4, quad_combos, order, rng, out);
    return out;
}

GroupResult score_group(const EvalGroup& group, const PredictedScores& scores) {
    const std::size_t n = group.members.size();
    std::vector<double> predicted(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = group.members[i];
        auto it = scores.find(m.sample.sample_id);
        if (it == scores.end())
            throw Error(ErrorCode::MissingScore, "no prediction for sample '" + m.sample.sample_id + "'");
        if (!std::isfinite(it->second))
            throw Error(ErrorCode::InvalidInput, "non-finite prediction for '" + m.sample.sample_id + "'");
        predicted[i] = it->second;
        gold[i] = -static_cast<double>(m.gold_rank);
    }

    GroupResult r;
    r.correct = true;
    for (std::size_t i = 0; i < n && r.correct; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (group.members[i].gold_rank < group.members[j].gold_rank && !(predicted[i] > predicted[j])) {
                r.correct = false;
                break;
            }

    if (std::all_of(predicted.begin(), predicted.end(), [&](double p) { return p == predicted.front(); })) {
        r.tau = 0.0;
        r.tau_defined = false;
    } else {
        r.tau = kendall_tau(predicted, gold);
    }
    return r;
}

// Knight's O(n log n) tau-b: sort by (a, b), count the inversions of b with a
// merge sort, and correct for ties in a, in b, and in both.
double kendall_tau(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "rankings differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw Error(ErrorCode::LengthMismatch, "need at least two ranked items");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
        return a[i] != a[j] ? a[i] < a[j] : b[i] < b[j];
    });

    auto pairs = [](std::int64_t t) { return t * (t - 1) / 2; };
    std::int64_t ties_a = 0, ties_joint = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && a[idx[j]] == a[idx[i]]) ++j;
        ties_a += pairs(static_cast<std::int64_t>(j - i));
        for (std::size_t k = i; k < j;) {
            std::size_t l = k + 1;
            while (l < j && b[idx[l]] == b[idx[k]]) ++l;
            ties_joint += pairs(static_cast<std::int64_t>(l - k));
            k = l;
        }
        i = j;
    }

    std::vector<double> ys(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = b[idx[i]];
    std::int64_t swaps = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo < n; lo += 2 * width) {
            const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (ys[j] < ys[i]) {
                    swaps += static_cast<std::int64_t>(mid - i);
                    buf[k++] = ys[j++];
                } else {
                    buf[k++] = ys[i++];
                }
            }
            while (i < mid) buf[k++] = ys[i++];
            while (j < hi) buf[k++] = ys[j++];
        }
        ys.swap(buf);
    }

    std::int64_t ties_b = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && ys[j] == ys[i]) ++j;
        ties_b += pairs(static_cast<std::int64_t>(j - i));
        i = j;
    }

    const std::int64_t total = pairs(static_cast<std::int64_t>(n));
    const std::int64_t numerator = total - ties_a - ties_b + ties_joint - 2 * swaps;
    // One sqrt of the product keeps perfect squares (no ties) exact.
    const double denom = std::sqrt(static_cast<double>(total - ties_a) * static_cast<double>(total - ties_b));
    if (denom == 0.0) throw Error(ErrorCode::AllTied, "tau-b undefined: one ranking is all ties");
    return std::clamp(static_cast<double>(numerator) / denom, -1.0, 1.0);
}

BenchReport evaluate_benchmark(const std::vector<EvalGroup>& groups, const PredictedScores& scores) {
    check_groups(groups);
    const auto n = static_cast<long long>(groups.size());
    std::vector<GroupResult> results(groups.size());
    // Exceptions cannot cross the parallel region; keep the lowest-index one.
    std::vector<std::optional<Error>> errors(groups.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        try {
            results[static_cast<std::size_t>(i)] = score_group(groups[static_cast<std::size_t>(i)], scores);
        } catch (const Error& e) {
            errors[static_cast<std::size_t>(i)] = e;
        }
    }
    for (const auto& e : errors)
        if (e) throw *e;
    return reduce(groups, results);
}

namespace serial {

BenchReport evaluate_benchmark(const std::vector<EvalGroup>& groups, const PredictedScores& scores) {
    check_groups(groups);
    std::vector<GroupResult> results;
    results.reserve(groups.size());
    for (const auto& g : groups) results.push_back(score_group(g, scores));
    return reduce(groups, results);
}

}  // namespace serial

EvalGroup group_from_json(const json& j) {
    try {
        EvalGroup g;
        g.group_id = optional_string(j, "group_id");
        g.size = j.at("size").get<int>();
        g.category = category_from_string(j.at("category").get<std::string>());
        g.instruction = j.value("instruction", std::string{});
        for (const auto& s : j.at("samples")) {
            GroupMember m;
            m.sample.sample_id = optional_string(s, "sample_id");
            if (m.sample.sample_id.empty()) throw Error(ErrorCode::InvalidInput, "sample without sample_id");
            m.sample.model_id = optional_string(s, "model_id");
            m.sample.instruction = g.instruction;
            m.sample.source_ref = optional_string(s, "source_ref");
            m.sample.edited_ref = optional_string(s, "edited_ref");
            m.sample.subtask = optional_string(s, "subtask");
            m.sample.category = g.category;
            m.sample.tiers = tiers_from_json(s.at("tiers"));
            m.gold_rank = s.at("gold_rank").get<int>();
            g.members.push_back(std::move(m));
        }
        if (g.size < 2 || g.size > 4 || g.members.size() != static_cast<std::size_t>(g.size))
            throw Error(ErrorCode::InvalidInput, "group '" + g.group_id + "' size must be 2, 3 or 4 and match samples");
        std::vector<int> ranks;
        for (const auto& m : g.members) ranks.push_back(m.gold_rank);
        std::sort(ranks.begin(), ranks.end());
        for (int r = 0; r < g.size; ++r)
            if (ranks[static_cast<std::size_t>(r)] != r + 1)
                throw Error(ErrorCode::InvalidInput, "group '" + g.group_id + "' gold ranks must be a permutation of 1..size");
        return g;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("bad benchmark group: ") + e.what());
    }
}

json to_json(const EvalGroup& g) { return json::parse(group_json(g).dump()); }

std::vector<EvalGroup> read_groups_jsonl(std::string_view text) {
    std::vector<EvalGroup> groups;
    for (const auto& [lineno, line] : jsonl_lines(text)) {
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorCode::InvalidInput, "line " + std::to_string(lineno) + ": invalid JSON");
        groups.push_back(group_from_json(j));
    }
    return groups;
}

std::string to_jsonl(const std::vector<EvalGroup>& groups) {
    std::string out;
    for (const auto& g : groups) {
        out += group_json(g).dump();
        out += '\n';
    }
    return out;
}

PredictedScores read_predictions_jsonl(std::string_view text) {
    PredictedScores scores;
    for (const auto& [lineno, line] : jsonl_lines(text)) {
        auto j = json::parse(line, nullptr, false);
        const std::string where = "predictions line " + std::to_string(lineno);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidInput, where + ": invalid JSON");
        if (!j.contains("reward") || !j["reward"].is_number())
            throw Error(ErrorCode::InvalidInput, where + ": numeric 'reward' required");
        const auto id = optional_string(j, "sample_id");
        if (id.empty()) throw Error(ErrorCode::InvalidInput, where + ": 'sample_id' required");
        if (!scores.emplace(id, j["reward"].get<double>()).second)
            throw Error(ErrorCode::InvalidInput, where + ": duplicate prediction for '" + id + "'");
    }
    return scores;
}

json to_json(const BenchReport& r) {
    json j;
    j["accuracy_2p"] = optional_number(r.accuracy_2p);
    j["accuracy_3p"] = optional_number(r.accuracy_3p);
    j["accuracy_4p"] = optional_number(r.accuracy_4p);
    j["overall"] = optional_number(r.overall);
    j["mean_tau"] = optional_number(r.mean_tau);
    j["tau_groups"] = r.tau_groups;
    j["tau_excluded"] = r.tau_excluded;
    j["group_counts"] = {{"2", r.group_counts[0]}, {"3", r.group_counts[1]}, {"4", r.group_counts[2]}};
    j["correct_counts"] = {{"2", r.correct_counts[0]}, {"3", r.correct_counts[1]}, {"4", r.correct_counts[2]}};
    json cats = json::object();
    for (const auto& [cat, cs] : r.categories) {
        cats[std::string(to_string(cat))] = {{"groups", cs.groups},
                                             {"correct", cs.correct},
                                             {"accuracy", cs.accuracy},
                                             {"size_mean_accuracy", optional_number(cs.size_mean_accuracy)}};
    }
    j["categories"] = std::move(cats);
    return j;
}

std::string format_table(const BenchReport& r) {
    auto cell = [](const std::optional<double>& v) {
        char buf[32];
        if (!v) return std::string("    -");
        std::snprintf(buf, sizeof buf, "%5.3f", *v);
        return std::string(buf);
    };
    std::ostringstream os;
    os << "  2-P    3-P    4-P    Ovrl.  tau\n";
    os << cell(r.accuracy_2p) << "  " << cell(r.accuracy_3p) << "  " << cell(r.accuracy_4p) << "  "
       << cell(r.overall) << "  " << cell(r.mean_tau) << "\n";
    os << "groups: " << r.group_counts[0] << " / " << r.group_counts[1] << " / " << r.group_counts[2]
       << "  (tau excluded: " << r.tau_excluded << ")\n";
    for (const auto& [cat, cs] : r.categories) {
        char line[128];
        std::snprintf(line, sizeof line, "%-12s %5.3f  (%zu groups)\n", std::string(to_string(cat)).c_str(),
                      cs.accuracy, cs.groups);
        os << line;
    }
    return os.str();
}

}  // namespace rewardkit::bench
