#include "trialmatch/criteria_logic.hpp"

#include "trialmatch/common.hpp"
#include "trialmatch/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace trialmatch::logic {

std::string_view to_string(AnswerValue value) {
    switch (value) {
        case AnswerValue::Yes: return "Yes";
        case AnswerValue::No: return "No";
        case AnswerValue::NA: return "NA";
    }
    return "NA";
}

std::optional<AnswerValue> parse_answer(std::string_view text) {
    const std::string lowered = to_lower(trim(text));
    if (lowered == "yes") return AnswerValue::Yes;
    if (lowered == "no") return AnswerValue::No;
    if (lowered == "na" || lowered == "n/a") return AnswerValue::NA;
    return std::nullopt;
}

std::string_view to_string(CriterionKind kind) {
    return kind == CriterionKind::Inclusion ? "Inclusion" : "Exclusion";
}

std::optional<CriterionKind> parse_kind(std::string_view text) {
    const std::string lowered = to_lower(trim(text));
    if (lowered == "inclusion") return CriterionKind::Inclusion;
    if (lowered == "exclusion") return CriterionKind::Exclusion;
    return std::nullopt;
}

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::Met: return "Met";
        case Verdict::NotMet: return "NotMet";
        case Verdict::NA: return "NA";
    }
    return "NA";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
    if (text == "Met") return Verdict::Met;
    if (text == "NotMet") return Verdict::NotMet;
    if (text == "NA") return Verdict::NA;
    return std::nullopt;
}

std::vector<std::string> DnfExpression::referenced_questions() const {
    std::vector<std::string> ids;
    for (const auto& clause : clauses) {
        for (const auto& literal : clause) {
            if (std::find(ids.begin(), ids.end(), literal.question_id) == ids.end()) {
                ids.push_back(literal.question_id);
            }
        }
    }
    return ids;
}

DnfExpression all_of(std::initializer_list<std::string> question_ids) {
    DnfExpression dnf;
    auto& clause = dnf.clauses.emplace_back();
    for (const auto& id : question_ids) clause.push_back({id, false});
    return dnf;
}

DnfExpression any_of(std::initializer_list<std::string> question_ids) {
    DnfExpression dnf;
    for (const auto& id : question_ids) dnf.clauses.push_back({{id, false}});
    return dnf;
}

void Thresholds::validate() const {
    if (!(0.0 <= not_met && not_met < met && met <= 1.0)) {
        throw InputError("thresholds must satisfy 0 <= notmet < met <= 1");
    }
}

bool eval_dnf(const DnfExpression& logic, const Assignment& assignment) {
    auto value_of = [&](const Literal& literal) {
        auto it = assignment.find(literal.question_id);
        if (it == assignment.end()) throw MissingAnswerError(literal.question_id);
        return it->second != literal.negated;
    };
    // Every literal is resolved up front so a missing assignment is reported
    // even when an earlier clause already decides the result.
    bool result = false;
    for (const auto& clause : logic.clauses) {
        bool clause_value = true;
        for (const auto& literal : clause) clause_value = value_of(literal) && clause_value;
        result = result || clause_value;
    }
    return result;
}

namespace {

const AnswerValue& answer_for(const AnswerMap& answers, const std::string& question_id) {
    auto it = answers.find(question_id);
    if (it == answers.end()) throw MissingAnswerError(question_id);
    return it->second;
}

}  // namespace

std::size_t count_unknowns(const DnfExpression& logic, const AnswerMap& answers) {
    std::size_t unknowns = 0;
    for (const auto& id : logic.referenced_questions()) {
        if (answer_for(answers, id) == AnswerValue::NA) ++unknowns;
    }
    return unknowns;
}

double marginal_probability(const DnfExpression& logic, const AnswerMap& answers,
                            std::size_t max_marginalized) {
    // Each live clause becomes (care, want): a completion mask satisfies the
    // clause when mask & care == want.
    struct ClauseMask {
        std::uint64_t care = 0;
        std::uint64_t want = 0;
    };

    // Validate coverage before any short-circuit.
    for (const auto& id : logic.referenced_questions()) answer_for(answers, id);

    std::unordered_map<std::string_view, unsigned> slot;
    std::vector<ClauseMask> live;
    for (const auto& clause : logic.clauses) {
        bool falsified = false;
        for (const auto& literal : clause) {
            AnswerValue answer = answer_for(answers, literal.question_id);
            if (answer != AnswerValue::NA && (answer == AnswerValue::Yes) == literal.negated) {
                falsified = true;
                break;
            }
        }
        if (falsified) continue;

        ClauseMask mask;
        for (const auto& literal : clause) {
            if (answer_for(answers, literal.question_id) != AnswerValue::NA) continue;
            auto [it, inserted] = slot.try_emplace(literal.question_id,
                                                   static_cast<unsigned>(slot.size()));
            if (slot.size() > kMaxMarginalizedCeiling) {
                throw CapacityError(slot.size(), std::min(max_marginalized, kMaxMarginalizedCeiling));
            }
            const std::uint64_t bit = std::uint64_t{1} << it->second;
            const std::uint64_t value = literal.negated ? 0 : bit;
            if ((mask.care & bit) && (mask.want & bit) != value) {
                falsified = true;  // q AND NOT q
                break;
            }
            mask.care |= bit;
            mask.want |= value;
        }
        if (falsified) continue;
        if (mask.care == 0) return 1.0;
        live.push_back(mask);
    }
    if (live.empty()) return 0.0;
    if (slot.size() > max_marginalized) throw CapacityError(slot.size(), max_marginalized);

    const std::uint64_t completions = std::uint64_t{1} << slot.size();
    std::uint64_t satisfied = 0;
    for (std::uint64_t assignment = 0; assignment < completions; ++assignment) {
        for (const auto& clause : live) {
            if ((assignment & clause.care) == clause.want) {
                ++satisfied;
                break;
            }
        }
    }
    return std::ldexp(static_cast<double>(satisfied), -static_cast<int>(slot.size()));
}

Verdict verdict_from_probability(double p, const Thresholds& thresholds) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InputError("probability " + std::to_string(p) + " is outside [0, 1]");
    }
    if (p > thresholds.met) return Verdict::Met;
    if (p < thresholds.not_met) return Verdict::NotMet;
    return Verdict::NA;
}

CriterionEvaluation evaluate_criterion(const Criterion& criterion, const AnswerMap& answers,
                                       const EvaluationOptions& options) {
    CriterionEvaluation evaluation;
    evaluation.criterion_id = criterion.id;

    if (criterion.generation_failure || criterion.logic.empty()) {
        evaluation.probability = 0.5;
        evaluation.verdict = Verdict::NA;
        evaluation.fallback_reason = "generation_failed";
        return evaluation;
    }

    evaluation.num_marginalized = count_unknowns(criterion.logic, answers);
    try {
        const double raw = marginal_probability(criterion.logic, answers, options.max_marginalized);
        evaluation.probability = criterion.kind == CriterionKind::Inclusion ? raw : 1.0 - raw;
        evaluation.verdict = verdict_from_probability(evaluation.probability, options.thresholds);
    } catch (const CapacityError&) {
        evaluation.probability = 0.5;
        evaluation.verdict = Verdict::NA;
        evaluation.fallback_reason = "capacity_exceeded";
    }
    return evaluation;
}

}  // namespace trialmatch::logic
