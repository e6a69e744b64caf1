#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace rewardkit::bench {

// Three-level label; numeric order matches quality order (Good > Medium > Bad).
enum class Tier : int { Bad = 0, Medium = 1, Good = 2 };

std::string_view to_string(Tier t) noexcept;
// Case-insensitive; "poor" is accepted as an alias of Bad.
Tier tier_from_string(std::string_view s);

struct TierTriple {
    Tier prompt_following = Tier::Bad;
    Tier quality = Tier::Bad;
    Tier overall = Tier::Bad;

    bool operator==(const TierTriple&) const = default;
};

struct AnnotationBallot {
    std::string annotator_id;
    TierTriple tiers;
};

inline constexpr std::size_t kAnnotatorsPerSample = 5;
inline constexpr int kConsensusVotes = 3;

struct DimensionConsensus {
    std::optional<Tier> tier;  // empty: needs expert review
    std::array<int, 3> votes{};  // indexed by Tier value

    bool needs_review() const noexcept { return !tier.has_value(); }
};

struct ConsensusResult {
    DimensionConsensus prompt_following;
    DimensionConsensus quality;
    DimensionConsensus overall;

    // Consensus triple when every dimension reached agreement.
    std::optional<TierTriple> labels() const;
};

ConsensusResult consensus_vote(std::span<const AnnotationBallot> ballots);

enum class Category { General, HumanBasic, HumanFine };
inline constexpr Category kAllCategories[] = {Category::General, Category::HumanBasic, Category::HumanFine};

std::string_view to_string(Category c) noexcept;
Category category_from_string(std::string_view s);

struct BenchSample {
    std::string sample_id;
    std::string model_id;
    std::string instruction;
    std::string source_ref;
    std::string edited_ref;
    TierTriple tiers;
    Category category = Category::General;
    std::string subtask;
};

// Which sub-dimension breaks ties on the overall tier first.
enum class TieBreak { PromptFollowingFirst, QualityFirst };

// Best first. Throws StrictOrderUnavailable if two samples share every key.
std::vector<BenchSample> hierarchical_rank(std::vector<BenchSample> samples,
                                           TieBreak order = TieBreak::PromptFollowingFirst);

struct GroupMember {
    BenchSample sample;
    int gold_rank = 0;  // 1 = best
};

struct EvalGroup {
    std::string group_id;
    int size = 0;
    Category category = Category::General;
    std::string instruction;
    std::vector<GroupMember> members;
};

struct GroupCounts {
    std::size_t two = 0;
    std::size_t three = 0;
    std::size_t four = 0;
};

// Each source set holds the candidates generated for one instruction/source.
// Groups are drawn with replacement across sets; members are distinct within
// a group and presented in shuffled order.
std::vector<EvalGroup> compose_groups(const std::vector<std::vector<BenchSample>>& pool, GroupCounts counts,
                                      std::uint64_t seed, TieBreak order = TieBreak::PromptFollowingFirst);

using PredictedScores = std::unordered_map<std::string, double>;

struct GroupResult {
    bool correct = false;
    double tau = 0.0;
    // False when every prediction in the group ties; tau is then reported as 0
    // and left out of the benchmark mean.
    bool tau_defined = true;
};

GroupResult score_group(const EvalGroup& group, const PredictedScores& scores);

// Kendall tau-b. Larger values rank higher in both inputs.
double kendall_tau(std::span<const double> a, std::span<const double> b);

struct CategoryStats {
    std::size_t groups = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;                     // correct / groups
    std::optional<double> size_mean_accuracy;  // mean of per-size accuracies
};

struct BenchReport {
    std::optional<double> accuracy_2p;
    std::optional<double> accuracy_3p;
    std::optional<double> accuracy_4p;
    std::optional<double> overall;  // mean of the per-size accuracies present
    std::optional<double> mean_tau;
    std::size_t tau_groups = 0;
    std::size_t tau_excluded = 0;
    std::array<std::size_t, 3> group_counts{};  // sizes 2, 3, 4
    std::array<std::size_t, 3> correct_counts{};
    std::map<Category, CategoryStats> categories;
};

// Groups are scored in parallel; the reduction runs serially in input order.
BenchReport evaluate_benchmark(const std::vector<EvalGroup>& groups, const PredictedScores& scores);

namespace serial {
BenchReport evaluate_benchmark(const std::vector<EvalGroup>& groups, const PredictedScores& scores);
}

// File formats (JSON Lines).
EvalGroup group_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalGroup& g);
std::vector<EvalGroup> read_groups_jsonl(std::string_view text);
std::string to_jsonl(const std::vector<EvalGroup>& groups);
PredictedScores read_predictions_jsonl(std::string_view text);

nlohmann::json to_json(const BenchReport& r);
std::string format_table(const BenchReport& r);

}  // namespace rewardkit::bench
