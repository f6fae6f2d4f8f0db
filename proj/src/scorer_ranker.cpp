#include "trialmatch/scorer_ranker.hpp"

#include "trialmatch/common.hpp"
#include "trialmatch/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>

namespace trialmatch::scoring {

int encode(logic::Verdict verdict) {
    switch (verdict) {
        case logic::Verdict::Met: return 1;
        case logic::Verdict::NotMet: return 0;
        case logic::Verdict::NA: return -1;
    }
    return -1;
}

double TierWeights::for_tier(int tier) const {
    switch (tier) {
        case 1: return w1;
        case 2: return w2;
        case 3: return w3;
        case 4: return w4;
    }
    throw InputError("tier " + std::to_string(tier) + " is outside 1..4");
}

void TierWeights::validate() const {
    if (!(w1 > 0 && w2 > 0 && w3 > 0 && w4 > 0)) throw InputError("tier weights must be positive");
}

std::string_view to_string(Method method) {
    switch (method) {
        case Method::Simple: return "Simple";
        case Method::IterativeTier: return "IterativeTier";
        case Method::WeightedTier: return "WeightedTier";
    }
    return "Simple";
}

std::optional<Method> parse_method(std::string_view text) {
    const std::string lowered = to_lower(text);
    if (lowered == "simple") return Method::Simple;
    if (lowered == "iterativetier" || lowered == "iterative") return Method::IterativeTier;
    if (lowered == "weightedtier" || lowered == "weighted") return Method::WeightedTier;
    return std::nullopt;
}

namespace {

void check_x(int x) {
    if (x != 1 && x != 0 && x != -1) throw InputError("criterion result x must be 1, 0 or -1");
}

void require_non_empty(const std::vector<CriterionResult>& results, const char* what) {
    if (results.empty()) throw InputError(std::string(what) + " needs at least one criterion");
}

}  // namespace

double score_simple(const std::vector<CriterionResult>& results) {
    require_non_empty(results, "simple score");
    std::size_t met = 0;
    for (const auto& r : results) {
        check_x(r.x);
        if (r.x == 1) ++met;
    }
    return static_cast<double>(met) / static_cast<double>(results.size());
}

double score_iterative(const std::vector<CriterionResult>& results) {
    require_non_empty(results, "iterative score");
    std::vector<const CriterionResult*> ordered;
    for (const auto& r : results) {
        check_x(r.x);
        ordered.push_back(&r);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return std::tie(a->tier, a->criterion_id) < std::tie(b->tier, b->criterion_id);
    });
    std::size_t met = 0;
    for (const auto* r : ordered) {
        if (r->x == 0) break;
        if (r->x == 1) ++met;
    }
    return static_cast<double>(met) / static_cast<double>(results.size());
}

double tier_criterion_score(int x, int tier) {
    check_x(x);
    if (tier < 1 || tier > 4) throw InputError("tier " + std::to_string(tier) + " is outside 1..4");
    if (x == 1) return 1.0;
    if (x == -1) return 0.5;
    return tier == 1 ? -0.5 : 0.0;
}

double score_weighted(const std::vector<CriterionResult>& results, const TierWeights& weights) {
    double sum[5] = {};
    std::size_t count[5] = {};
    for (const auto& r : results) {
        if (r.tier < 1 || r.tier > 4) throw InputError("criterion '" + r.criterion_id + "' has tier outside 1..4");
        sum[r.tier] += tier_criterion_score(r.x, r.tier);
        ++count[r.tier];
    }
    std::size_t non_empty = 0;
    double total = 0.0;
    for (int tier = 1; tier <= 4; ++tier) {
        if (count[tier] == 0) continue;
        ++non_empty;
        total += weights.for_tier(tier) * (sum[tier] / static_cast<double>(count[tier]));
    }
    return non_empty == 0 ? 0.0 : total / static_cast<double>(non_empty);
}

double score(Method method, const std::vector<CriterionResult>& results, const TierWeights& weights) {
    switch (method) {
        case Method::Simple: return score_simple(results);
        case Method::IterativeTier: return score_iterative(results);
        case Method::WeightedTier: return score_weighted(results, weights);
    }
    return 0.0;
}

std::string_view to_string(Direction direction) {
    return direction == Direction::TrialsForPatient ? "trials-for-patient" : "patients-for-trial";
}

std::optional<Direction> parse_direction(std::string_view text) {
    if (text == "trials-for-patient") return Direction::TrialsForPatient;
    if (text == "patients-for-trial") return Direction::PatientsForTrial;
    return std::nullopt;
}

std::optional<std::size_t> Ranking::rank_of(std::string_view candidate_id) const {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].candidate_id == candidate_id) return i + 1;
    }
    return std::nullopt;
}

namespace {

const std::string& subject_of(const MatchScore& s, Direction d) {
    return d == Direction::TrialsForPatient ? s.patient_id : s.trial_id;
}

const std::string& candidate_of(const MatchScore& s, Direction d) {
    return d == Direction::TrialsForPatient ? s.trial_id : s.patient_id;
}

}  // namespace

Ranking rank_candidates(const std::vector<MatchScore>& scores, Direction direction) {
    Ranking ranking;
    if (scores.empty()) return ranking;
    ranking.subject_id = subject_of(scores.front(), direction);
    ranking.method = scores.front().method;
    for (const auto& s : scores) {
        if (s.method != ranking.method) throw InputError("cannot rank scores from different methods");
        if (subject_of(s, direction) != ranking.subject_id) {
            throw InputError("cannot rank scores from different subjects");
        }
        ranking.candidates.push_back({candidate_of(s, direction), s.score});
    }
    std::stable_sort(ranking.candidates.begin(), ranking.candidates.end(),
                     [](const RankedCandidate& a, const RankedCandidate& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.candidate_id < b.candidate_id;
                     });
    return ranking;
}

std::vector<Ranking> rank_all(const std::vector<MatchScore>& scores, Method method, Direction direction) {
    std::map<std::string, std::vector<MatchScore>> by_subject;
    for (const auto& s : scores) {
        if (s.method == method) by_subject[subject_of(s, direction)].push_back(s);
    }
    std::vector<Ranking> rankings;
    for (const auto& [subject, group] : by_subject) rankings.push_back(rank_candidates(group, direction));
    return rankings;
}

double topk_hit_rate(const std::vector<Ranking>& rankings,
                     const std::map<std::string, std::string, std::less<>>& ground_truth, std::size_t k) {
    if (rankings.empty()) throw InputError("top-k hit rate needs at least one ranking");
    std::size_t hits = 0;
    for (const auto& ranking : rankings) {
        auto truth = ground_truth.find(ranking.subject_id);
        if (truth == ground_truth.end()) {
            throw InputError("no ground truth for subject '" + ranking.subject_id + "'");
        }
        const auto rank = ranking.rank_of(truth->second);
        if (!rank) {
            throw InputError("ground truth '" + truth->second + "' is not a candidate for subject '" +
                             ranking.subject_id + "'");
        }
        if (*rank <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double ndcg_binary(const Ranking& ranking, const std::set<std::string, std::less<>>& relevant) {
    if (relevant.empty()) throw InputError("NDCG needs at least one relevant candidate");
    for (const auto& id : relevant) {
        if (!ranking.rank_of(id)) {
            throw InputError("relevant candidate '" + id + "' is not ranked for '" + ranking.subject_id + "'");
        }
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < ranking.candidates.size(); ++i) {
        if (relevant.contains(ranking.candidates[i].candidate_id)) {
            dcg += 1.0 / std::log2(static_cast<double>(i + 2));
        }
    }
    double ideal = 0.0;
    for (std::size_t i = 0; i < relevant.size(); ++i) ideal += 1.0 / std::log2(static_cast<double>(i + 2));
    return dcg / ideal;
}

VerdictStats verdict_stats(const std::vector<logic::CriterionEvaluation>& evaluations) {
    if (evaluations.empty()) throw InputError("verdict statistics need at least one evaluation");
    std::size_t met = 0, not_met = 0, na = 0;
    for (const auto& e : evaluations) {
        switch (e.verdict) {
            case logic::Verdict::Met: ++met; break;
            case logic::Verdict::NotMet: ++not_met; break;
            case logic::Verdict::NA: ++na; break;
        }
    }
    const double n = static_cast<double>(evaluations.size());
    return {100.0 * static_cast<double>(met) / n, 100.0 * static_cast<double>(not_met) / n,
            100.0 * static_cast<double>(na) / n, evaluations.size()};
}

std::string scores_to_csv(const std::vector<MatchScore>& scores) {
    std::string out = "patient_id,trial_id,method,score\n";
    char buf[64];
    for (const auto& s : scores) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.score);
        out += s.patient_id + "," + s.trial_id + "," + std::string(to_string(s.method)) + "," + buf + "\n";
    }
    return out;
}

std::vector<MatchScore> parse_scores_csv(std::string_view contents) {
    std::vector<MatchScore> scores;
    std::istringstream lines{std::string(contents)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (number == 1) {
            if (line != "patient_id,trial_id,method,score") throw InputError("scores CSV has an unexpected header");
            continue;
        }
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) fields.push_back(cell);
        if (fields.size() != 4) throw InputError("scores CSV line " + std::to_string(number) + ": expected 4 fields");
        const auto method = parse_method(fields[2]);
        if (!method) throw InputError("scores CSV line " + std::to_string(number) + ": unknown method");
        try {
            scores.push_back({fields[0], fields[1], *method, std::stod(fields[3])});
        } catch (const std::exception&) {
            throw InputError("scores CSV line " + std::to_string(number) + ": bad score");
        }
    }
    return scores;
}

}  // namespace trialmatch::scoring
