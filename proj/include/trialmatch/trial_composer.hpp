/**
 * @file trial_composer.hpp
 * @brief Turns free-text eligibility criteria into a validated TrialSpec.
 *
 * Each criterion is sent to a QuestionGenerator, which decomposes it into
 * yes/no questions wired in DNF. Questions are tagged with a concept from the
 * concept book; the concept decides the criterion's importance tier.
 */

#pragma once

#include "trialmatch/criteria_logic.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch::composer {

using logic::Criterion;
using logic::CriterionKind;
using logic::Question;

struct RawTrial {
    std::string trial_id;
    std::string title;
    std::string inclusion_text;
    std::string exclusion_text;

    /// Throws InputError when the id is empty or both sections are empty.
    void validate() const;
};

inline constexpr int kTrialSpecSchemaVersion = 1;

struct TrialSpec {
    std::string trial_id;
    std::string title;
    std::vector<Question> questions;
    std::vector<Criterion> criteria;

    const Question* find_question(std::string_view id) const;
    bool operator==(const TrialSpec&) const = default;
};

/// Concept -> tier table. Lookups are case-insensitive.
class ConceptBook {
public:
    static inline const std::string kOthers = "Others";

    /// The ten oncology concepts and their tiers.
    static const ConceptBook& defaults();

    /// Adds or overrides a concept. Throws InputError for tiers outside 1..4.
    void add(std::string name, int tier);

    bool contains(std::string_view name) const;

    /// Canonical spelling of a known concept, or kOthers for unknown names.
    std::string canonical(std::string_view name) const;

    /// Unknown concepts map to Others (tier 4) and log a warning.
    int tier_of(std::string_view name) const;

    /// Canonical names in insertion order.
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, std::pair<std::string, int>, std::less<>> by_lower_;
};

int assign_tier(std::string_view concept_name, const ConceptBook& book = ConceptBook::defaults());

// ----------------------------------------------------------------------------
// Generator contract
// ----------------------------------------------------------------------------

struct GeneratedQuestion {
    std::string text;
    std::string concept_name;
};

struct GeneratedLiteral {
    std::size_t q_index = 0;
    bool negated = false;
};

struct GeneratorOutput {
    std::vector<GeneratedQuestion> questions;
    std::vector<std::vector<GeneratedLiteral>> dnf;
};

/// Parses the wire shape {questions:[{text, concept}], dnf:[[{q_index, negated}]]}
/// and checks it structurally. Throws FormatError carrying `raw`.
GeneratorOutput parse_generator_output(std::string_view raw);

/// Throws FormatError (with `raw`) on empty question lists, empty clauses or
/// out-of-range indices.
void check_generator_output(const GeneratorOutput& output, std::string_view raw);

class QuestionGenerator {
public:
    virtual ~QuestionGenerator() = default;
    virtual std::string tag() const = 0;
    /// Must be safe to call concurrently. Throws TransportError or FormatError.
    virtual GeneratorOutput generate(std::string_view criterion_text, CriterionKind kind) = 0;
};

class ConceptClassifier {
public:
    virtual ~ConceptClassifier() = default;
    virtual std::string tag() const = 0;
    /// Returns a concept name; unknown names are folded into Others later.
    virtual std::string classify(const GeneratedQuestion& question) = 0;
};

/// Replays generator responses keyed by the (trimmed) criterion text.
class ScriptedQuestionGenerator final : public QuestionGenerator {
public:
    /// `fixtures` maps criterion text to a response object in wire shape.
    explicit ScriptedQuestionGenerator(std::map<std::string, std::string, std::less<>> fixtures);

    /// Loads a JSON object {criterion_text: response, ...}.
    static ScriptedQuestionGenerator from_file(const std::string& path);

    std::string tag() const override { return "scripted-generator"; }
    GeneratorOutput generate(std::string_view criterion_text, CriterionKind kind) override;

private:
    std::map<std::string, std::string, std::less<>> fixtures_;
};

/// Uses the generator's suggested concept unless an override is registered
/// for the exact question text.
class ScriptedConceptClassifier final : public ConceptClassifier {
public:
    ScriptedConceptClassifier() = default;
    explicit ScriptedConceptClassifier(std::map<std::string, std::string, std::less<>> overrides)
        : overrides_(std::move(overrides)) {}

    std::string tag() const override { return "scripted-classifier"; }
    std::string classify(const GeneratedQuestion& question) override;

private:
    std::map<std::string, std::string, std::less<>> overrides_;
};

// ----------------------------------------------------------------------------
// Operations
// ----------------------------------------------------------------------------

/// Calls the backend once and validates its output. Empty text is a
/// FormatError.
GeneratorOutput generate_questions(std::string_view criterion_text, CriterionKind kind,
                                   QuestionGenerator& backend);

/// Splits a criteria section into one string per criterion.
///
/// Bullet-marked lines ("-", "*", "•", "+", "1." or "1)") and lines after a
/// blank line always open a new criterion. Any other line is a continuation
/// of the current criterion when that criterion lacks terminal punctuation,
/// and opens a new one otherwise. "Inclusion/Exclusion Criteria:" headings
/// are dropped.
std::vector<std::string> segment_criteria(std::string_view section_text);

struct ComposeOptions {
    int generation_retries = 2;
    std::size_t max_parallel = 4;
    const ConceptBook* concept_book = nullptr;  ///< defaults() when null
};

/// Throws CompositionError if the assembled spec fails validation and
/// propagates TransportError from the generator.
TrialSpec compose_trial(const RawTrial& raw, QuestionGenerator& generator,
                        ConceptClassifier& classifier, const ComposeOptions& options = {});

enum class ViolationKind {
    MissingTrialId,
    DuplicateId,
    DanglingReference,
    EmptyQuestionText,
    EmptyLogic,
    EmptyClause,
    DuplicateLiteral,
    TierOutOfRange,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string subject;

    std::string describe() const;
    bool operator==(const Violation&) const = default;
};

/// Structural problems; empty means valid. Criteria flagged with a
/// generation failure may carry empty logic.
std::vector<Violation> validate_trial(const TrialSpec& spec);

// ----------------------------------------------------------------------------
// Serialization
// ----------------------------------------------------------------------------

/// Versioned JSON document with a fixed field order; identical specs always
/// serialize to identical bytes.
std::string trial_spec_to_json(const TrialSpec& spec);

/// Throws InputError for malformed documents or unsupported schema versions.
TrialSpec trial_spec_from_json(std::string_view contents);

/// JSON Lines {trial_id, title, inclusion_text, exclusion_text}; errors name
/// the offending line.
std::vector<RawTrial> parse_raw_trials_jsonl(std::string_view contents);

}  // namespace trialmatch::composer
