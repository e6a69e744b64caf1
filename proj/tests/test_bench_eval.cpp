#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "rewardkit/bench_eval.hpp"
#include "rewardkit/error.hpp"
#include "rewardkit/rng.hpp"
#include "support.hpp"

using namespace rewardkit;
using namespace rewardkit::bench;

namespace {

ErrorCode error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidInput;
}

std::vector<AnnotationBallot> ballots_overall(std::initializer_list<Tier> overall) {
    std::vector<AnnotationBallot> b;
    int k = 0;
    for (Tier t : overall) b.push_back({"a" + std::to_string(k++), TierTriple{Tier::Good, Tier::Good, t}});
    return b;
}

// O(n^2) tau-b by pair enumeration.
double brute_tau(const std::vector<double>& a, const std::vector<double>& b) {
    long long conc = 0, disc = 0, ties_a = 0, ties_b = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const double da = a[i] - a[j], db = b[i] - b[j];
            if (da == 0 && db == 0) continue;
            if (da == 0) ++ties_a;
            else if (db == 0) ++ties_b;
            else if ((da > 0) == (db > 0)) ++conc;
            else ++disc;
        }
    return static_cast<double>(conc - disc) /
           std::sqrt(static_cast<double>(conc + disc + ties_a) * static_cast<double>(conc + disc + ties_b));
}

EvalGroup simple_group(std::vector<int> gold) {
    EvalGroup g;
    g.group_id = "g";
    g.size = static_cast<int>(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
        GroupMember m;
        m.sample.sample_id = std::string(1, static_cast<char>('A' + i));
        m.gold_rank = gold[i];
        g.members.push_back(m);
    }
    return g;
}

}  // namespace

TEST_CASE("tiers") {
    CHECK(tier_from_string("Poor") == Tier::Bad);
    CHECK(tier_from_string("GOOD") == Tier::Good);
    CHECK(to_string(Tier::Medium) == "medium");
    CHECK(error_of([] { tier_from_string("ok"); }) == ErrorCode::InvalidInput);
}

TEST_CASE("consensus examples") {
    CHECK(consensus_vote(ballots_overall({Tier::Good, Tier::Good, Tier::Good, Tier::Medium, Tier::Bad})).overall.tier ==
          Tier::Good);
    CHECK(consensus_vote(ballots_overall({Tier::Good, Tier::Good, Tier::Medium, Tier::Medium, Tier::Bad}))
              .overall.needs_review());
    const auto all = consensus_vote(ballots_overall({Tier::Good, Tier::Good, Tier::Good, Tier::Good, Tier::Good}));
    CHECK(all.overall.tier == Tier::Good);
    CHECK(all.overall.votes[static_cast<int>(Tier::Good)] == 5);
    CHECK(all.labels().has_value());

    CHECK(error_of([] { consensus_vote(ballots_overall({Tier::Good, Tier::Good})); }) == ErrorCode::WrongBallotCount);
    auto dup = ballots_overall({Tier::Good, Tier::Good, Tier::Good, Tier::Good, Tier::Good});
    dup[4].annotator_id = dup[0].annotator_id;
    CHECK(error_of([&] { consensus_vote(dup); }) == ErrorCode::DuplicateAnnotator);
}

TEST_CASE("consensus is order independent") {
    Rng rng(4);
    for (int i = 0; i < 300; ++i) {
        std::vector<AnnotationBallot> b;
        for (int k = 0; k < 5; ++k)
            b.push_back({"a" + std::to_string(k), TierTriple{static_cast<Tier>(rng.below(3)), static_cast<Tier>(rng.below(3)),
                                                             static_cast<Tier>(rng.below(3))}});
        const auto ref = consensus_vote(b);
        std::sort(b.begin(), b.end(), [](auto& x, auto& y) { return x.annotator_id > y.annotator_id; });
        const auto perm = consensus_vote(b);
        CHECK(ref.overall.tier == perm.overall.tier);
        CHECK(ref.prompt_following.tier == perm.prompt_following.tier);
        CHECK(ref.quality.tier == perm.quality.tier);
    }
}

TEST_CASE("hierarchical rank") {
    BenchSample a, b;
    a.sample_id = "A";
    a.tiers = {Tier::Good, Tier::Medium, Tier::Good};  // pf Good, q Medium, overall Good
    b.sample_id = "B";
    b.tiers = {Tier::Medium, Tier::Good, Tier::Good};
    auto r = hierarchical_rank({b, a});
    CHECK(r[0].sample_id == "A");
    r = hierarchical_rank({a, b}, TieBreak::QualityFirst);
    CHECK(r[0].sample_id == "B");

    BenchSample c = a;
    c.sample_id = "C";
    c.tiers.overall = Tier::Bad;
    CHECK(hierarchical_rank({c, a})[0].sample_id == "A");

    BenchSample d = a;
    d.sample_id = "D";
    CHECK(error_of([&] { hierarchical_rank({a, d}); }) == ErrorCode::StrictOrderUnavailable);
    CHECK(error_of([&] { hierarchical_rank({a}); }) == ErrorCode::InsufficientPool);
}

TEST_CASE("hierarchical rank agrees with a lexicographic sort") {
    std::vector<BenchSample> all;
    for (int o = 0; o < 3; ++o)
        for (int p = 0; p < 3; ++p)
            for (int q = 0; q < 3; ++q) {
                BenchSample s;
                s.sample_id = std::to_string(o) + std::to_string(p) + std::to_string(q);
                s.tiers = {static_cast<Tier>(p), static_cast<Tier>(q), static_cast<Tier>(o)};
                all.push_back(s);
            }
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<BenchSample> pick;
        for (const auto& s : all)
            if (rng.below(3) == 0) pick.push_back(s);
        if (pick.size() < 2) continue;
        auto expect = pick;
        std::sort(expect.begin(), expect.end(), [](const BenchSample& x, const BenchSample& y) {
            auto key = [](const BenchSample& s) {
                return std::tuple{static_cast<int>(s.tiers.overall), static_cast<int>(s.tiers.prompt_following),
                                  static_cast<int>(s.tiers.quality)};
            };
            return key(x) > key(y);
        });
        const auto got = hierarchical_rank(pick);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].sample_id == expect[i].sample_id);
    }
}

TEST_CASE("group composition") {
    const auto pool = fixtures::bench_pool(40);
    const auto groups = compose_groups(pool, {200, 200, 200}, 7);
    REQUIRE(groups.size() == 600);
    std::size_t slots = 0;
    std::set<std::string> ids;
    for (const auto& g : groups) {
        slots += g.members.size();
        CHECK(ids.insert(g.group_id).second);
        CHECK(static_cast<int>(g.members.size()) == g.size);
        std::vector<int> ranks;
        std::set<std::string> members;
        for (const auto& m : g.members) {
            ranks.push_back(m.gold_rank);
            members.insert(m.sample.sample_id);
            CHECK(m.sample.instruction == g.instruction);
            CHECK(m.sample.source_ref == g.members[0].sample.source_ref);
        }
        CHECK(members.size() == g.members.size());
        std::sort(ranks.begin(), ranks.end());
        for (int k = 0; k < g.size; ++k) CHECK(ranks[k] == k + 1);

        // gold order is the hierarchical order
        std::vector<BenchSample> samples;
        for (const auto& m : g.members) samples.push_back(m.sample);
        const auto ranked = hierarchical_rank(samples);
        for (const auto& m : g.members) CHECK(ranked[m.gold_rank - 1].sample_id == m.sample.sample_id);

        std::multiset<int> overall;
        for (const auto& m : g.members) overall.insert(static_cast<int>(m.sample.tiers.overall));
        if (g.size == 3) CHECK(std::set<int>(overall.begin(), overall.end()).size() == 3);
        if (g.size == 4) {
            const std::set<int> distinct(overall.begin(), overall.end());
            CHECK(distinct.size() == 3);
        }
    }
    CHECK(slots == 1800);

    const auto again = compose_groups(pool, {200, 200, 200}, 7);
    CHECK(to_jsonl(again) == to_jsonl(groups));
    CHECK(to_jsonl(compose_groups(pool, {200, 200, 200}, 8)) != to_jsonl(groups));

    const auto one = compose_groups(pool, {1, 0, 0}, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].size == 2);

    // a set with a single overall tier cannot supply a 3-pair group
    auto thin = fixtures::bench_pool(1);
    thin[0].resize(2);
    CHECK(error_of([&] { compose_groups(thin, {0, 1, 0}, 1); }) == ErrorCode::InsufficientPool);
}

TEST_CASE("score_group") {
    const auto g2 = simple_group({1, 2});
    auto r = score_group(g2, {{"A", 18.2}, {"B", 12.0}});
    CHECK(r.correct);
    CHECK(r.tau == 1.0);

    r = score_group(g2, {{"A", 15}, {"B", 15}});
    CHECK_FALSE(r.correct);
    CHECK(r.tau == 0.0);
    CHECK_FALSE(r.tau_defined);

    const auto g3 = simple_group({1, 2, 3});
    r = score_group(g3, {{"A", 3}, {"B", 1}, {"C", 2}});
    CHECK_FALSE(r.correct);
    CHECK(r.tau == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    CHECK(error_of([&] { score_group(g3, {{"A", 3}, {"B", 1}}); }) == ErrorCode::MissingScore);
}

TEST_CASE("score_group is invariant under increasing transforms") {
    Rng rng(12);
    for (int i = 0; i < 500; ++i) {
        const auto g = simple_group({2, 4, 1, 3});
        PredictedScores p, q;
        for (const auto& m : g.members) {
            const double v = std::floor(rng.uniform01() * 6.0);  // ties happen
            p[m.sample.sample_id] = v;
            q[m.sample.sample_id] = std::exp(v / 3.0) * 7.0 + 2.0;
        }
        const auto a = score_group(g, p), b = score_group(g, q);
        CHECK(a.correct == b.correct);
        CHECK(a.tau == doctest::Approx(b.tau).epsilon(1e-12));
    }
}

TEST_CASE("kendall tau") {
    const std::vector<double> id = {1, 2, 3, 4, 5};
    const std::vector<double> rev = {5, 4, 3, 2, 1};
    CHECK(kendall_tau(id, id) == 1.0);
    CHECK(kendall_tau(id, rev) == -1.0);
    const std::vector<double> a = {1, 2, 3}, b = {1, 3, 2};
    CHECK(kendall_tau(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    const std::vector<double> flat = {2, 2, 2};
    CHECK(error_of([&] { kendall_tau(flat, a); }) == ErrorCode::AllTied);
    const std::vector<double> shorter = {1, 2};
    CHECK(error_of([&] { kendall_tau(shorter, a); }) == ErrorCode::LengthMismatch);

    Rng rng(31);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<double> x(n), y(n);
        for (std::size_t k = 0; k < n; ++k) {
            x[k] = static_cast<double>(rng.below(n / 2 + 2));
            y[k] = static_cast<double>(rng.below(n / 2 + 2));
        }
        const bool x_flat = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
        const bool y_flat = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
        if (x_flat || y_flat) continue;
        CHECK(std::fabs(kendall_tau(x, y) - brute_tau(x, y)) < 1e-12);
    }
}

TEST_CASE("benchmark report") {
    const auto pool = fixtures::bench_pool(40);
    const auto groups = compose_groups(pool, {200, 200, 200}, 3);
    auto rep = evaluate_benchmark(groups, fixtures::oracle_scores(pool));
    CHECK(*rep.accuracy_2p == 1.0);
    CHECK(*rep.accuracy_3p == 1.0);
    CHECK(*rep.accuracy_4p == 1.0);
    CHECK(*rep.overall == 1.0);
    CHECK(*rep.mean_tau == 1.0);
    CHECK(rep.group_counts == std::array<std::size_t, 3>{200, 200, 200});
    std::size_t cat_groups = 0;
    for (const auto& [cat, st] : rep.categories) {
        cat_groups += st.groups;
        CHECK(st.accuracy == 1.0);
    }
    CHECK(cat_groups == 600);

    rep = evaluate_benchmark(groups, fixtures::constant_scores(groups));
    CHECK(*rep.accuracy_2p == 0.0);
    CHECK(*rep.overall == 0.0);
    CHECK_FALSE(rep.mean_tau.has_value());
    CHECK(rep.tau_excluded == 600);

    // missing sizes stay absent and drop out of the overall mean
    const auto partial = compose_groups(pool, {200, 200, 0}, 3);
    rep = evaluate_benchmark(partial, fixtures::oracle_scores(pool));
    CHECK_FALSE(rep.accuracy_4p.has_value());
    CHECK(*rep.overall == 1.0);
    const auto j = to_json(rep);
    CHECK(j["accuracy_4p"].is_null());
}

TEST_CASE("overall is the mean of per-size accuracies") {
    Rng rng(5);
    const auto groups = compose_groups(fixtures::bench_pool(30), {50, 40, 30}, 9);
    PredictedScores noisy;
    for (const auto& g : groups)
        for (const auto& m : g.members) noisy[m.sample.sample_id] = -m.gold_rank + 2.5 * rng.uniform01();
    const auto rep = evaluate_benchmark(groups, noisy);
    CHECK(std::fabs(*rep.overall - (*rep.accuracy_2p + *rep.accuracy_3p + *rep.accuracy_4p) / 3.0) < 1e-12);

    const auto ref = serial::evaluate_benchmark(groups, noisy);
    CHECK(to_json(rep) == to_json(ref));
}

TEST_CASE("JSONL round trip and readers") {
    const auto groups = compose_groups(fixtures::bench_pool(5), {3, 3, 3}, 1);
    const auto text = to_jsonl(groups);
    CHECK(to_jsonl(read_groups_jsonl(text)) == text);

    CHECK(error_of([] { read_groups_jsonl(R"({"group_id":"x","size":2,"samples":[]})"); }) == ErrorCode::InvalidInput);
    const auto preds = read_predictions_jsonl("{\"sample_id\":\"a\",\"reward\":3}\n{\"sample_id\":\"b\",\"reward\":4.5}\n");
    CHECK(preds.at("b") == 4.5);
    CHECK(error_of([] { read_predictions_jsonl("{\"sample_id\":\"a\",\"reward\":3}\n{\"sample_id\":\"a\",\"reward\":3}"); }) ==
          ErrorCode::InvalidInput);
}
