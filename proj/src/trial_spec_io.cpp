#include "trialmatch/common.hpp"
#include "trialmatch/error.hpp"
#include "trialmatch/trial_composer.hpp"

#include <json.hpp>

#include <sstream>

namespace trialmatch::composer {

using nlohmann::json;
using nlohmann::ordered_json;

std::string trial_spec_to_json(const TrialSpec& spec) {
    ordered_json doc;
    doc["schema_version"] = kTrialSpecSchemaVersion;
    doc["trial_id"] = spec.trial_id;
    doc["title"] = spec.title;

    auto& questions = doc["questions"] = ordered_json::array();
    for (const auto& q : spec.questions) {
        ordered_json item;
        item["id"] = q.id;
        item["text"] = q.text;
        item["concept"] = q.concept_name;
        questions.push_back(std::move(item));
    }

    auto& criteria = doc["criteria"] = ordered_json::array();
    for (const auto& c : spec.criteria) {
        ordered_json item;
        item["id"] = c.id;
        item["kind"] = logic::to_string(c.kind);
        item["tier"] = c.tier;
        item["source_text"] = c.source_text;
        auto& clauses = item["logic"] = ordered_json::array();
        for (const auto& clause : c.logic.clauses) {
            ordered_json literals = ordered_json::array();
            for (const auto& literal : clause) {
                ordered_json lit;
                lit["question_id"] = literal.question_id;
                lit["negated"] = literal.negated;
                literals.push_back(std::move(lit));
            }
            clauses.push_back(std::move(literals));
        }
        if (c.generation_failure) item["generation_failure"] = *c.generation_failure;
        criteria.push_back(std::move(item));
    }
    return doc.dump(2) + "\n";
}

TrialSpec trial_spec_from_json(std::string_view contents) {
    try {
        const json doc = json::parse(contents);
        const int version = doc.at("schema_version").get<int>();
        if (version != kTrialSpecSchemaVersion) {
            throw InputError("unsupported trial spec schema_version " + std::to_string(version));
        }
        TrialSpec spec;
        spec.trial_id = doc.at("trial_id").get<std::string>();
        spec.title = doc.value("title", "");
        for (const auto& q : doc.at("questions")) {
            spec.questions.push_back(
                {q.at("id").get<std::string>(), q.at("text").get<std::string>(), q.value("concept", "")});
        }
        for (const auto& item : doc.at("criteria")) {
            Criterion c;
            c.id = item.at("id").get<std::string>();
            const auto kind = logic::parse_kind(item.at("kind").get<std::string>());
            if (!kind) throw InputError("criterion '" + c.id + "' has an unknown kind");
            c.kind = *kind;
            c.tier = item.at("tier").get<int>();
            c.source_text = item.value("source_text", "");
            for (const auto& clause : item.at("logic")) {
                auto& literals = c.logic.clauses.emplace_back();
                for (const auto& lit : clause) {
                    literals.push_back({lit.at("question_id").get<std::string>(), lit.value("negated", false)});
                }
            }
            if (item.contains("generation_failure")) {
                c.generation_failure = item.at("generation_failure").get<std::string>();
            }
            spec.criteria.push_back(std::move(c));
        }
        return spec;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed trial spec: ") + e.what());
    }
}

std::vector<RawTrial> parse_raw_trials_jsonl(std::string_view contents) {
    std::vector<RawTrial> trials;
    std::istringstream lines{std::string(contents)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(number) + ": ";
        RawTrial raw;
        try {
            const json doc = json::parse(line);
            raw.trial_id = doc.at("trial_id").get<std::string>();
            raw.title = doc.value("title", "");
            raw.inclusion_text = doc.value("inclusion_text", "");
            raw.exclusion_text = doc.value("exclusion_text", "");
        } catch (const json::exception& e) {
            throw InputError(where + e.what());
        }
        try {
            raw.validate();
        } catch (const InputError& e) {
            throw InputError(where + e.what());
        }
        trials.push_back(std::move(raw));
    }
    return trials;
}

}  // namespace trialmatch::composer
