/**
 * @file scorer_ranker.hpp
 * @brief Patient-trial match scores, rankings and ranking metrics.
 *
 * Three aggregations of criterion verdicts are provided:
 *   - Simple:        met / total
 *   - IterativeTier: met criteria before the first violation, walking tiers
 *                    from most to least important, over total
 *   - WeightedTier:  mean over non-empty tiers of w_tier * mean criterion score
 */

#pragma once

#include "trialmatch/criteria_logic.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch::scoring {

/// Criterion outcome encoded as Met -> 1, NotMet -> 0, NA -> -1.
struct CriterionResult {
    std::string criterion_id;
    int tier = 4;
    int x = -1;
};

int encode(logic::Verdict verdict);

struct TierWeights {
    double w1 = 2.0;
    double w2 = 1.5;
    double w3 = 1.0;
    double w4 = 0.5;

    double for_tier(int tier) const;
    /// Throws InputError unless every weight is positive.
    void validate() const;
};

enum class Method { Simple, IterativeTier, WeightedTier };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view text);
inline constexpr Method kAllMethods[] = {Method::Simple, Method::IterativeTier, Method::WeightedTier};

/// Throws InputError on empty input.
double score_simple(const std::vector<CriterionResult>& results);

/// Walks tier 1 first (criterion id within a tier), counts Met, skips NA and
/// stops at the first NotMet. Normalised by the total number of criteria.
double score_iterative(const std::vector<CriterionResult>& results);

/// 1 for Met, 0.5 for NA, -0.5 for NotMet in tier 1, 0 for NotMet elsewhere.
double tier_criterion_score(int x, int tier);

/// 0 when there are no criteria. Not confined to [0, 1].
double score_weighted(const std::vector<CriterionResult>& results, const TierWeights& weights = {});

double score(Method method, const std::vector<CriterionResult>& results, const TierWeights& weights = {});

struct MatchScore {
    std::string patient_id;
    std::string trial_id;
    Method method = Method::Simple;
    double score = 0.0;

    bool operator==(const MatchScore&) const = default;
};

enum class Direction { TrialsForPatient, PatientsForTrial };

std::string_view to_string(Direction direction);
std::optional<Direction> parse_direction(std::string_view text);

struct RankedCandidate {
    std::string candidate_id;
    double score = 0.0;

    bool operator==(const RankedCandidate&) const = default;
};

struct Ranking {
    std::string subject_id;
    Method method = Method::Simple;
    std::vector<RankedCandidate> candidates;

    /// 1-based rank of `candidate_id`, or nullopt.
    std::optional<std::size_t> rank_of(std::string_view candidate_id) const;
    bool operator==(const Ranking&) const = default;
};

/// Sorts one subject's candidates by score descending, id ascending on ties.
/// All scores must share the subject (per `direction`) and the method.
Ranking rank_candidates(const std::vector<MatchScore>& scores,
                        Direction direction = Direction::TrialsForPatient);

/// One ranking per subject present in `scores` for `method`, ordered by
/// subject id.
std::vector<Ranking> rank_all(const std::vector<MatchScore>& scores, Method method, Direction direction);

/// Fraction of subjects whose ground-truth candidate ranks within the top k.
/// Throws InputError naming a subject without ground truth or whose ground
/// truth is not among its candidates.
double topk_hit_rate(const std::vector<Ranking>& rankings,
                     const std::map<std::string, std::string, std::less<>>& ground_truth, std::size_t k);

/// Binary-relevance NDCG. Throws InputError for an empty relevant set or a
/// relevant id not among the candidates.
double ndcg_binary(const Ranking& ranking, const std::set<std::string, std::less<>>& relevant);

struct VerdictStats {
    double met_pct = 0.0;
    double notmet_pct = 0.0;
    double na_pct = 0.0;
    std::size_t total = 0;
};

/// Throws InputError on empty input.
VerdictStats verdict_stats(const std::vector<logic::CriterionEvaluation>& evaluations);

/// CSV with header "patient_id,trial_id,method,score".
std::string scores_to_csv(const std::vector<MatchScore>& scores);
std::vector<MatchScore> parse_scores_csv(std::string_view contents);

}  // namespace trialmatch::scoring
