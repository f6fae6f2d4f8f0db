/**
 * @file criteria_logic.hpp
 * @brief Questions, criterion DNF logic and verdict resolution.
 *
 * A criterion is an OR of AND-clauses over yes/no questions. Answers are
 * three-valued; unknown (NA) answers are resolved by enumerating every
 * completion with equal weight, and the resulting probability is thresholded
 * into Met / NotMet / NA.
 */

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch::logic {

enum class AnswerValue { Yes, No, NA };

std::string_view to_string(AnswerValue value);

/// Accepts yes/no/na/n/a in any case; nullopt otherwise.
std::optional<AnswerValue> parse_answer(std::string_view text);

struct Question {
    std::string id;
    std::string text;
    std::string concept_name;

    bool operator==(const Question&) const = default;
};

struct Literal {
    std::string question_id;
    bool negated = false;

    bool operator==(const Literal&) const = default;
};

/// OR over clauses, AND within a clause.
struct DnfExpression {
    std::vector<std::vector<Literal>> clauses;

    /// Distinct question ids in first-appearance order.
    std::vector<std::string> referenced_questions() const;

    bool empty() const noexcept { return clauses.empty(); }

    bool operator==(const DnfExpression&) const = default;
};

/// Convenience builders used heavily by tests and fixtures.
DnfExpression all_of(std::initializer_list<std::string> question_ids);
DnfExpression any_of(std::initializer_list<std::string> question_ids);

enum class CriterionKind { Inclusion, Exclusion };

std::string_view to_string(CriterionKind kind);
std::optional<CriterionKind> parse_kind(std::string_view text);

struct Criterion {
    std::string id;
    std::string source_text;
    CriterionKind kind = CriterionKind::Inclusion;
    /// For exclusions this encodes "the exclusion condition holds".
    DnfExpression logic;
    int tier = 4;
    /// Set when question generation failed; logic is then empty.
    std::optional<std::string> generation_failure;

    bool operator==(const Criterion&) const = default;
};

enum class Verdict { Met, NotMet, NA };

std::string_view to_string(Verdict verdict);
std::optional<Verdict> parse_verdict(std::string_view text);

struct CriterionEvaluation {
    std::string criterion_id;
    double probability = 0.0;
    Verdict verdict = Verdict::NA;
    std::size_t num_marginalized = 0;
    /// Machine-readable cause when the verdict was forced to NA without
    /// consulting the answers ("capacity_exceeded", "generation_failed").
    std::string fallback_reason;

    bool operator==(const CriterionEvaluation&) const = default;
};

struct Thresholds {
    double met = 0.66;
    double not_met = 0.34;

    /// Throws InputError unless 0 <= not_met < met <= 1.
    void validate() const;
};

inline constexpr std::size_t kDefaultMaxMarginalized = 20;
/// Hard ceiling imposed by the 64-bit completion masks.
inline constexpr std::size_t kMaxMarginalizedCeiling = 62;

using Assignment = std::map<std::string, bool, std::less<>>;
using AnswerMap = std::map<std::string, AnswerValue, std::less<>>;

/// Two-valued evaluation. Throws MissingAnswerError for unassigned questions.
bool eval_dnf(const DnfExpression& logic, const Assignment& assignment);

/// Number of distinct NA-answered questions referenced by `logic`.
std::size_t count_unknowns(const DnfExpression& logic, const AnswerMap& answers);

/// Fraction of NA completions under which `logic` is true.
///
/// Yes/No answers are fixed first; clauses they falsify are dropped and a
/// clause they fully satisfy settles the result at 1. Only unknowns that
/// still appear in a live clause are enumerated, which gives the same dyadic
/// ratio as enumerating every referenced unknown. Throws CapacityError when
/// more than `max_marginalized` live unknowns remain.
double marginal_probability(const DnfExpression& logic, const AnswerMap& answers,
                            std::size_t max_marginalized = kDefaultMaxMarginalized);

/// Strict thresholds: boundary values fall to NA. Throws InputError for p
/// outside [0, 1].
Verdict verdict_from_probability(double p, const Thresholds& thresholds = {});

struct EvaluationOptions {
    Thresholds thresholds;
    std::size_t max_marginalized = kDefaultMaxMarginalized;
};

/// Exclusions are inverted here (1 - p) so that "Met" always means the
/// patient stays eligible with respect to this criterion.
CriterionEvaluation evaluate_criterion(const Criterion& criterion, const AnswerMap& answers,
                                       const EvaluationOptions& options = {});

}  // namespace trialmatch::logic
