#include "trialmatch/qa_engine.hpp"

#include "trialmatch/error.hpp"
#include "trialmatch/worker_pool.hpp"
#include "builtin_prompt.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <tuple>

namespace trialmatch::qa {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool chronological_less(const EvidenceItem& a, const EvidenceItem& b) {
    return std::tie(a.note_date, a.note_id, a.sentence_start) <
           std::tie(b.note_date, b.note_id, b.sentence_start);
}

/// Single-pass {{NAME}} substitution; substituted text is never rescanned.
std::string substitute(std::string_view body, const std::map<std::string, std::string, std::less<>>& values) {
    std::string out;
    out.reserve(body.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        const std::size_t open = body.find("{{", pos);
        if (open == std::string_view::npos) break;
        const std::size_t close = body.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out.append(body.substr(pos, open - pos));
        auto it = values.find(body.substr(open + 2, close - open - 2));
        if (it != values.end()) {
            out += it->second;
        } else {
            out.append(body.substr(open, close + 2 - open));
        }
        pos = close + 2;
    }
    out.append(body.substr(pos));
    return out;
}

}  // namespace

EvidenceBundle make_bundle(const notes::PatientHeader& header,
                           const std::vector<const notes::Chunk*>& chunks) {
    EvidenceBundle bundle;
    bundle.header = header;
    for (const auto* chunk : chunks) {
        bundle.items.push_back({chunk->note_date, chunk->note_category, chunk->note_id,
                                chunk->sentence_start, chunk->chunk_id, chunk->text});
    }
    std::stable_sort(bundle.items.begin(), bundle.items.end(), chronological_less);
    return bundle;
}

// =============================================================================
// Prompt
// =============================================================================

PromptTemplate PromptTemplate::builtin() {
    static const PromptTemplate parsed = parse(kBuiltinQaPrompt);
    return parsed;
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
    static constexpr std::string_view kPrefix = "# template-version:";
    const std::size_t newline = text.find('\n');
    const std::string_view first = text.substr(0, newline);
    if (first.substr(0, kPrefix.size()) != kPrefix) {
        throw InputError("prompt template must start with '# template-version: <version>'");
    }
    PromptTemplate t;
    t.version = trim(first.substr(kPrefix.size()));
    if (t.version.empty()) throw InputError("prompt template version is empty");
    t.body = newline == std::string_view::npos ? std::string() : std::string(text.substr(newline + 1));
    return t;
}

PromptTemplate PromptTemplate::from_file(const std::string& path) {
    return parse(read_file(path));
}

std::string build_prompt(const Question& question, const EvidenceBundle& bundle,
                         const PromptTemplate& prompt_template) {
    if (!std::is_sorted(bundle.items.begin(), bundle.items.end(), chronological_less)) {
        throw InputError("evidence bundle is not in chronological order");
    }
    std::string evidence;
    if (bundle.items.empty()) {
        evidence = std::string(kNoEvidenceMarker);
    }
    for (const auto& item : bundle.items) {
        if (!evidence.empty()) evidence += '\n';
        evidence += "[" + format_date(item.note_date) + "] [" + item.note_category + "] " + item.text +
                    " (source: " + item.chunk_id + ")";
    }
    return substitute(prompt_template.body,
                      {{"AGE", std::to_string(bundle.header.age_at_enrollment)},
                       {"ENROLLMENT_DATE", format_date(bundle.header.enrollment_date)},
                       {"EVIDENCE", evidence},
                       {"QUESTION", question.text}});
}

// =============================================================================
// Response parsing
// =============================================================================

namespace {

std::string_view strip_code_fence(std::string_view text) {
    auto ltrim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        return s;
    };
    auto rtrim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    text = rtrim(ltrim(text));
    if (text.substr(0, 3) == "```" && text.size() >= 6 && text.substr(text.size() - 3) == "```") {
        text.remove_prefix(3);
        text.remove_suffix(3);
        const std::size_t newline = text.find('\n');
        if (newline != std::string_view::npos && text.substr(0, newline).find('{') == std::string_view::npos) {
            text.remove_prefix(newline + 1);  // language tag such as ```json
        }
        text = rtrim(ltrim(text));
    }
    return text;
}

}  // namespace

QaRecord parse_response(std::string_view raw) {
    json doc;
    try {
        doc = json::parse(strip_code_fence(raw));
    } catch (const json::exception& e) {
        throw ParseError(std::string("response is not valid JSON: ") + e.what(), std::string(raw));
    }
    auto invalid = [&](const std::string& why) { return ValidationError(why, std::string(raw)); };
    if (!doc.is_object()) throw invalid("response is not a JSON object");

    auto text_field = [&](const char* key) {
        auto it = doc.find(key);
        if (it == doc.end() || !it->is_string()) throw invalid(std::string("missing string field '") + key + "'");
        return it->get<std::string>();
    };

    QaRecord record;
    record.question_explanation = text_field("question_explanation");
    record.answer_explanation = text_field("answer_explanation");

    const auto answer = logic::parse_answer(text_field("answer"));
    if (!answer) throw invalid("answer must be Yes, No or NA");
    record.answer = *answer;

    auto confidence = doc.find("confidence");
    if (confidence == doc.end() || !confidence->is_number()) throw invalid("missing numeric 'confidence'");
    const double value = confidence->get<double>();
    if (value != std::floor(value) || value < 1 || value > 5) {
        throw invalid("confidence must be an integer from 1 to 5");
    }
    record.confidence = static_cast<int>(value);

    if (auto citations = doc.find("citations"); citations != doc.end() && !citations->is_null()) {
        if (!citations->is_array()) throw invalid("citations must be a list");
        for (const auto& c : *citations) {
            if (!c.is_string()) throw invalid("citations must be strings");
            record.citations.push_back(c.get<std::string>());
        }
    }
    return record;
}

void QaBackendConfig::validate() const {
    if (temperature != 0.0) throw InputError("QA temperature must be 0 for deterministic answers");
    if (max_response_chars == 0) throw InputError("max_response_chars must be positive");
    if (retry_count < 0) throw InputError("retry_count must be >= 0");
    if (timeout.count() <= 0) throw InputError("QA timeout must be positive");
}

// =============================================================================
// Scripted backend
// =============================================================================

ScriptedQaBackend::ScriptedQaBackend(std::map<std::string, std::map<std::string, Script>> fixtures)
    : fixtures_(std::move(fixtures)) {}

std::unique_ptr<ScriptedQaBackend> ScriptedQaBackend::from_file(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw InputError("QA fixture '" + path + "': " + e.what());
    }
    if (!doc.is_object()) throw InputError("QA fixture '" + path + "' must be an object");

    auto as_text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    std::map<std::string, std::map<std::string, Script>> fixtures;
    for (const auto& [patient, questions] : doc.items()) {
        if (!questions.is_object()) {
            throw InputError("QA fixture '" + path + "': entry for '" + patient + "' must be an object");
        }
        for (const auto& [question, value] : questions.items()) {
            Script script;
            if (value.is_array()) {
                for (const auto& v : value) script.push_back(as_text(v));
            } else {
                script.push_back(as_text(value));
            }
            if (script.empty()) {
                throw InputError("QA fixture '" + path + "': empty script for " + patient + "/" + question);
            }
            fixtures[patient][question] = std::move(script);
        }
    }
    return std::make_unique<ScriptedQaBackend>(std::move(fixtures));
}

std::string ScriptedQaBackend::complete(const QaRequest& request) {
    auto patient = fixtures_.find(request.patient_id);
    if (patient == fixtures_.end()) {
        throw TransportError("scripted QA backend has no fixture for patient '" + request.patient_id + "'");
    }
    auto question = patient->second.find(request.question_id);
    if (question == patient->second.end()) {
        throw TransportError("scripted QA backend has no fixture for " + request.patient_id + "/" +
                             request.question_id);
    }
    const Script& script = question->second;
    std::size_t attempt;
    {
        std::lock_guard lock(mutex_);
        attempt = attempts_[{request.patient_id, request.question_id}]++;
    }
    return script[std::min(attempt, script.size() - 1)];
}

// =============================================================================
// Answering
// =============================================================================

QaRecord answer_question(std::string_view patient_id, const Question& question,
                         const QaContext& context, QaBackend& backend, const AnswerOptions& options) {
    options.backend.validate();
    const notes::PatientHeader* header = context.store.header(patient_id);
    if (!header) throw InputError("unknown patient '" + std::string(patient_id) + "'");

    const auto patient_chunks = context.store.chunk_ids_for(patient_id);
    const std::set<std::string, std::less<>> allowed(patient_chunks.begin(), patient_chunks.end());
    const auto hits = retrieval::retrieve(context.index, question.text, options.retrieval_k,
                                          context.provider, &allowed);

    std::vector<const notes::Chunk*> chunks;
    for (const auto& hit : hits) {
        if (const auto* chunk = context.store.find(hit.chunk_id)) chunks.push_back(chunk);
    }
    const EvidenceBundle bundle = make_bundle(*header, chunks);

    QaRequest request;
    request.patient_id = std::string(patient_id);
    request.question_id = question.id;
    request.prompt = build_prompt(question, bundle, options.prompt_template);
    request.temperature = options.backend.temperature;
    request.max_chars = options.backend.max_response_chars;

    const int attempts = options.backend.retry_count + 1;
    std::string last_failure;
    std::size_t response_tokens = 0;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::string raw;
        try {
            raw = backend.complete(request);
        } catch (const TransportError& e) {
            if (attempt + 1 == attempts) throw;
            spdlog::warn("{}/{}: backend attempt {} failed: {}", patient_id, question.id, attempt + 1, e.what());
            continue;
        }
        if (raw.size() > request.max_chars) raw.resize(request.max_chars);
        response_tokens += count_tokens(raw);
        try {
            QaRecord record = parse_response(raw);
            record.patient_id = request.patient_id;
            record.question_id = question.id;
            record.backend_tag = backend.tag();
            record.prompt_version = options.prompt_template.version;
            record.prompt_tokens = count_tokens(request.prompt) * static_cast<std::size_t>(attempt + 1);
            record.response_tokens = response_tokens;
            return record;
        } catch (const ParseError& e) {
            last_failure = std::string("parse_error: ") + e.what();
        } catch (const ValidationError& e) {
            last_failure = std::string("validation_error: ") + e.what();
        }
    }

    QaRecord fallback;
    fallback.patient_id = request.patient_id;
    fallback.question_id = question.id;
    fallback.question_explanation = "No valid answer was produced for this question.";
    fallback.answer_explanation = "The backend response could not be used after " +
                                  std::to_string(attempts) + " attempts; answer set to NA.";
    fallback.answer = AnswerValue::NA;
    fallback.confidence = 1;
    fallback.backend_tag = backend.tag();
    fallback.prompt_version = options.prompt_template.version;
    fallback.failure_reason = last_failure;
    fallback.prompt_tokens = count_tokens(request.prompt) * static_cast<std::size_t>(attempts);
    fallback.response_tokens = response_tokens;
    return fallback;
}

std::vector<QaOutcome> answer_all(const std::vector<QaTask>& tasks, const QaContext& context,
                                  QaBackend& backend, const AnswerOptions& options,
                                  std::size_t max_in_flight) {
    std::vector<QaOutcome> outcomes(tasks.size());
    parallel_for(tasks.size(), max_in_flight, [&](std::size_t i) {
        try {
            outcomes[i].record = answer_question(tasks[i].patient_id, *tasks[i].question, context,
                                                 backend, options);
        } catch (const TransportError& e) {
            outcomes[i].transport_error = e.what();
        }
    });
    return outcomes;
}

// =============================================================================
// Persistence
// =============================================================================

std::string records_to_jsonl(const std::vector<QaRecord>& records, std::string_view run_id) {
    std::string out;
    for (const auto& r : records) {
        ordered_json doc;
        doc["run_id"] = run_id;
        doc["patient_id"] = r.patient_id;
        doc["question_id"] = r.question_id;
        doc["question_explanation"] = r.question_explanation;
        doc["answer_explanation"] = r.answer_explanation;
        doc["answer"] = logic::to_string(r.answer);
        doc["confidence"] = r.confidence;
        doc["citations"] = r.citations;
        doc["backend_tag"] = r.backend_tag;
        doc["prompt_version"] = r.prompt_version;
        doc["failure_reason"] = r.failure_reason;
        doc["prompt_tokens"] = r.prompt_tokens;
        doc["response_tokens"] = r.response_tokens;
        out += doc.dump();
        out += '\n';
    }
    return out;
}

std::vector<QaRecord> parse_records_jsonl(std::string_view contents) {
    std::vector<QaRecord> records;
    std::size_t line_number = 0;
    std::size_t pos = 0;
    while (pos < contents.size()) {
        std::size_t end = contents.find('\n', pos);
        if (end == std::string_view::npos) end = contents.size();
        const std::string_view line = contents.substr(pos, end - pos);
        pos = end + 1;
        ++line_number;
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            QaRecord r;
            r.patient_id = doc.at("patient_id").get<std::string>();
            r.question_id = doc.at("question_id").get<std::string>();
            r.question_explanation = doc.at("question_explanation").get<std::string>();
            r.answer_explanation = doc.at("answer_explanation").get<std::string>();
            const auto answer = logic::parse_answer(doc.at("answer").get<std::string>());
            if (!answer) throw InputError("bad answer");
            r.answer = *answer;
            r.confidence = doc.at("confidence").get<int>();
            r.citations = doc.value("citations", std::vector<std::string>{});
            r.backend_tag = doc.value("backend_tag", "");
            r.prompt_version = doc.value("prompt_version", "");
            r.failure_reason = doc.value("failure_reason", "");
            r.prompt_tokens = doc.value("prompt_tokens", std::size_t{0});
            r.response_tokens = doc.value("response_tokens", std::size_t{0});
            records.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw InputError("answers line " + std::to_string(line_number) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace trialmatch::qa
