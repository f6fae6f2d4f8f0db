#include "trialmatch/trial_composer.hpp"

#include "trialmatch/common.hpp"
#include "trialmatch/error.hpp"
#include "trialmatch/worker_pool.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

namespace trialmatch::composer {

using nlohmann::json;

void RawTrial::validate() const {
    if (trim(trial_id).empty()) throw InputError("raw trial has an empty trial_id");
    if (trim(inclusion_text).empty() && trim(exclusion_text).empty()) {
        throw InputError("raw trial '" + trial_id + "' has no criteria text");
    }
}

const Question* TrialSpec::find_question(std::string_view id) const {
    auto it = std::find_if(questions.begin(), questions.end(),
                           [&](const Question& q) { return q.id == id; });
    return it == questions.end() ? nullptr : &*it;
}

// =============================================================================
// Concept book
// =============================================================================

const ConceptBook& ConceptBook::defaults() {
    static const ConceptBook book = [] {
        ConceptBook b;
        b.add("Cancer Type", 1);
        b.add("Cancer Subtype", 1);
        b.add("Cancer Stage", 1);
        b.add("Cancer Grade/Histology", 1);
        b.add("Genetic & Biologic Markers", 2);
        b.add("Lab/Imaging Criteria", 2);
        b.add("Prior treatment/surgery", 2);
        b.add("Comorbidities", 3);
        b.add("Functional Status", 4);
        b.add(kOthers, 4);
        return b;
    }();
    return book;
}

void ConceptBook::add(std::string name, int tier) {
    if (tier < 1 || tier > 4) {
        throw InputError("concept '" + name + "' has tier " + std::to_string(tier) +
                         ", expected 1..4");
    }
    const std::string key = to_lower(trim(name));
    auto it = by_lower_.find(key);
    if (it == by_lower_.end()) {
        names_.push_back(name);
        by_lower_.emplace(key, std::make_pair(std::move(name), tier));
    } else {
        it->second.second = tier;
    }
}

bool ConceptBook::contains(std::string_view name) const {
    return by_lower_.find(to_lower(trim(name))) != by_lower_.end();
}

std::string ConceptBook::canonical(std::string_view name) const {
    auto it = by_lower_.find(to_lower(trim(name)));
    return it == by_lower_.end() ? kOthers : it->second.first;
}

int ConceptBook::tier_of(std::string_view name) const {
    auto it = by_lower_.find(to_lower(trim(name)));
    if (it != by_lower_.end()) return it->second.second;
    spdlog::warn("unknown concept '{}', treating as {} (tier 4)", name, kOthers);
    return 4;
}

int assign_tier(std::string_view concept_name, const ConceptBook& book) {
    return book.tier_of(concept_name);
}

// =============================================================================
// Generator output
// =============================================================================

void check_generator_output(const GeneratorOutput& output, std::string_view raw) {
    auto fail = [&](const std::string& why) {
        throw FormatError("generator output rejected: " + why, std::string(raw));
    };
    if (output.questions.empty()) fail("no questions");
    for (const auto& q : output.questions) {
        if (trim(q.text).empty()) fail("empty question text");
    }
    if (output.dnf.empty()) fail("empty DNF");
    for (const auto& clause : output.dnf) {
        if (clause.empty()) fail("empty DNF clause");
        for (const auto& literal : clause) {
            if (literal.q_index >= output.questions.size()) {
                fail("q_index " + std::to_string(literal.q_index) + " out of range");
            }
        }
    }
}

GeneratorOutput parse_generator_output(std::string_view raw) {
    GeneratorOutput output;
    try {
        const json doc = json::parse(raw);
        for (const auto& q : doc.at("questions")) {
            output.questions.push_back(
                {q.at("text").get<std::string>(), q.value("concept", ConceptBook::kOthers)});
        }
        for (const auto& clause : doc.at("dnf")) {
            auto& literals = output.dnf.emplace_back();
            for (const auto& literal : clause) {
                const auto index = literal.at("q_index").get<long long>();
                if (index < 0) throw FormatError("negative q_index", std::string(raw));
                literals.push_back({static_cast<std::size_t>(index), literal.value("negated", false)});
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed generator output: ") + e.what(), std::string(raw));
    }
    check_generator_output(output, raw);
    return output;
}

ScriptedQuestionGenerator::ScriptedQuestionGenerator(
    std::map<std::string, std::string, std::less<>> fixtures)
    : fixtures_(std::move(fixtures)) {}

ScriptedQuestionGenerator ScriptedQuestionGenerator::from_file(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw InputError("generator fixture '" + path + "': " + e.what());
    }
    if (!doc.is_object()) throw InputError("generator fixture '" + path + "' must be an object");
    std::map<std::string, std::string, std::less<>> fixtures;
    for (const auto& [text, response] : doc.items()) {
        fixtures.emplace(trim(text), response.is_string() ? response.get<std::string>()
                                                          : response.dump());
    }
    return ScriptedQuestionGenerator(std::move(fixtures));
}

GeneratorOutput ScriptedQuestionGenerator::generate(std::string_view criterion_text,
                                                    CriterionKind /*kind*/) {
    auto it = fixtures_.find(trim(criterion_text));
    if (it == fixtures_.end()) {
        throw FormatError("no scripted generator output for criterion", std::string(criterion_text));
    }
    return parse_generator_output(it->second);
}

std::string ScriptedConceptClassifier::classify(const GeneratedQuestion& question) {
    auto it = overrides_.find(question.text);
    return it == overrides_.end() ? question.concept_name : it->second;
}

GeneratorOutput generate_questions(std::string_view criterion_text, CriterionKind kind,
                                   QuestionGenerator& backend) {
    if (trim(criterion_text).empty()) {
        throw FormatError("criterion text is empty", std::string(criterion_text));
    }
    GeneratorOutput output = backend.generate(criterion_text, kind);
    check_generator_output(output, "<" + backend.tag() + " output>");
    return output;
}

// =============================================================================
// Segmentation
// =============================================================================

namespace {

const std::regex& bullet_pattern() {
    static const std::regex pattern(R"(^\s*(?:[-*+]|\xE2\x80\xA2|\d+[.)])\s+)");
    return pattern;
}

const std::regex& heading_pattern() {
    static const std::regex pattern(R"(^\s*(inclusion|exclusion)\s+criteria\s*:?\s*$)",
                                    std::regex::icase);
    return pattern;
}

bool has_terminal_punctuation(std::string_view text) {
    return !text.empty() && std::string_view(".;!?").find(text.back()) != std::string_view::npos;
}

}  // namespace

std::vector<std::string> segment_criteria(std::string_view section_text) {
    std::vector<std::string> blocks;
    bool open = false;  // current block may absorb continuation lines

    std::istringstream lines{std::string(section_text)};
    std::string line;
    while (std::getline(lines, line)) {
        std::string text = trim(line);
        if (text.empty()) {
            open = false;
            continue;
        }
        if (std::regex_match(text, heading_pattern())) {
            open = false;
            continue;
        }
        std::smatch bullet;
        if (std::regex_search(text, bullet, bullet_pattern())) {
            text = trim(bullet.suffix().str());
            if (text.empty()) continue;
            blocks.push_back(std::move(text));
            open = true;
            continue;
        }
        if (open && !has_terminal_punctuation(blocks.back())) {
            blocks.back() += ' ';
            blocks.back() += text;
        } else {
            blocks.push_back(std::move(text));
            open = true;
        }
    }
    return blocks;
}

// =============================================================================
// Composition
// =============================================================================

namespace {

struct PendingCriterion {
    CriterionKind kind;
    std::string text;
    std::optional<GeneratorOutput> output;
    std::string failure;
};

std::string padded(std::size_t n, std::size_t width) {
    std::string digits = std::to_string(n);
    if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    return digits;
}

std::size_t id_width(std::size_t count) {
    return std::max<std::size_t>(2, std::to_string(count).size());
}

}  // namespace

TrialSpec compose_trial(const RawTrial& raw, QuestionGenerator& generator,
                        ConceptClassifier& classifier, const ComposeOptions& options) {
    raw.validate();
    const ConceptBook& book = options.concept_book ? *options.concept_book : ConceptBook::defaults();

    std::vector<PendingCriterion> pending;
    for (auto& text : segment_criteria(raw.inclusion_text)) {
        pending.push_back({CriterionKind::Inclusion, std::move(text), std::nullopt, {}});
    }
    for (auto& text : segment_criteria(raw.exclusion_text)) {
        pending.push_back({CriterionKind::Exclusion, std::move(text), std::nullopt, {}});
    }

    parallel_for(pending.size(), options.max_parallel, [&](std::size_t i) {
        auto& item = pending[i];
        for (int attempt = 0; attempt <= options.generation_retries; ++attempt) {
            try {
                item.output = generate_questions(item.text, item.kind, generator);
                return;
            } catch (const FormatError& e) {
                item.failure = e.what();
            }
        }
        spdlog::warn("trial {}: question generation failed for '{}': {}", raw.trial_id, item.text,
                     item.failure);
    });

    TrialSpec spec;
    spec.trial_id = raw.trial_id;
    spec.title = raw.title;

    std::size_t total_questions = 0;
    std::size_t inclusion_count = 0;
    std::size_t exclusion_count = 0;
    for (const auto& item : pending) {
        if (item.output) total_questions += item.output->questions.size();
        (item.kind == CriterionKind::Inclusion ? inclusion_count : exclusion_count) += 1;
    }
    const std::size_t q_width = id_width(total_questions);

    std::size_t next_inclusion = 0;
    std::size_t next_exclusion = 0;
    for (const auto& item : pending) {
        Criterion criterion;
        criterion.kind = item.kind;
        criterion.source_text = item.text;
        if (item.kind == CriterionKind::Inclusion) {
            criterion.id = raw.trial_id + "-I" + padded(++next_inclusion, id_width(inclusion_count));
        } else {
            criterion.id = raw.trial_id + "-E" + padded(++next_exclusion, id_width(exclusion_count));
        }

        if (!item.output) {
            criterion.generation_failure = item.failure;
            criterion.tier = 4;
            spec.criteria.push_back(std::move(criterion));
            continue;
        }

        std::vector<std::string> local_ids;
        int tier = 4;
        for (const auto& generated : item.output->questions) {
            Question question;
            question.id = raw.trial_id + "-Q" + padded(spec.questions.size() + 1, q_width);
            question.text = trim(generated.text);
            question.concept_name = book.canonical(classifier.classify(generated));
            tier = std::min(tier, book.tier_of(question.concept_name));
            local_ids.push_back(question.id);
            spec.questions.push_back(std::move(question));
        }
        for (const auto& clause : item.output->dnf) {
            auto& literals = criterion.logic.clauses.emplace_back();
            for (const auto& literal : clause) {
                logic::Literal lit{local_ids.at(literal.q_index), literal.negated};
                if (std::find(literals.begin(), literals.end(), lit) == literals.end()) {
                    literals.push_back(std::move(lit));
                }
            }
        }
        criterion.tier = tier;
        spec.criteria.push_back(std::move(criterion));
    }

    if (auto violations = validate_trial(spec); !violations.empty()) {
        std::vector<std::string> described;
        for (const auto& v : violations) described.push_back(v.describe());
        throw CompositionError("trial '" + spec.trial_id + "' failed validation", described);
    }
    return spec;
}

// =============================================================================
// Validation
// =============================================================================

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::MissingTrialId: return "MissingTrialId";
        case ViolationKind::DuplicateId: return "DuplicateId";
        case ViolationKind::DanglingReference: return "DanglingReference";
        case ViolationKind::EmptyQuestionText: return "EmptyQuestionText";
        case ViolationKind::EmptyLogic: return "EmptyLogic";
        case ViolationKind::EmptyClause: return "EmptyClause";
        case ViolationKind::DuplicateLiteral: return "DuplicateLiteral";
        case ViolationKind::TierOutOfRange: return "TierOutOfRange";
    }
    return "Unknown";
}

std::string Violation::describe() const {
    return std::string(to_string(kind)) + "(" + subject + ")";
}

std::vector<Violation> validate_trial(const TrialSpec& spec) {
    std::vector<Violation> violations;
    if (trim(spec.trial_id).empty()) violations.push_back({ViolationKind::MissingTrialId, ""});

    std::set<std::string, std::less<>> question_ids;
    for (const auto& q : spec.questions) {
        if (!question_ids.insert(q.id).second) violations.push_back({ViolationKind::DuplicateId, q.id});
        if (trim(q.text).empty()) violations.push_back({ViolationKind::EmptyQuestionText, q.id});
    }

    std::set<std::string, std::less<>> criterion_ids;
    for (const auto& c : spec.criteria) {
        if (!criterion_ids.insert(c.id).second) violations.push_back({ViolationKind::DuplicateId, c.id});
        if (c.tier < 1 || c.tier > 4) violations.push_back({ViolationKind::TierOutOfRange, c.id});
        if (c.logic.clauses.empty()) {
            if (!c.generation_failure) violations.push_back({ViolationKind::EmptyLogic, c.id});
            continue;
        }
        for (const auto& clause : c.logic.clauses) {
            if (clause.empty()) violations.push_back({ViolationKind::EmptyClause, c.id});
            for (std::size_t i = 0; i < clause.size(); ++i) {
                const auto& literal = clause[i];
                if (!question_ids.contains(literal.question_id)) {
                    violations.push_back({ViolationKind::DanglingReference, literal.question_id});
                }
                if (std::find(clause.begin(), clause.begin() + static_cast<std::ptrdiff_t>(i),
                              literal) != clause.begin() + static_cast<std::ptrdiff_t>(i)) {
                    violations.push_back({ViolationKind::DuplicateLiteral, c.id});
                }
            }
        }
    }
    return violations;
}

}  // namespace trialmatch::composer
