/**
 * @file qa_engine.hpp
 * @brief Evidence prompts, QA backends and structured answer parsing.
 *
 * For each (patient, question) the engine retrieves the patient's closest
 * chunks, lays them out oldest-first behind a header with the patient's age
 * and enrollment date, and asks a backend for a JSON answer carrying a
 * question explanation, an answer explanation, Yes/No/NA and a 1-5
 * confidence.
 */

#pragma once

#include "trialmatch/criteria_logic.hpp"
#include "trialmatch/note_store.hpp"
#include "trialmatch/retriever.hpp"

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch::qa {

using logic::AnswerValue;
using logic::Question;

struct EvidenceItem {
    Date note_date;
    std::string note_category;
    std::string note_id;
    std::size_t sentence_start = 0;
    std::string chunk_id;
    std::string text;
};

struct EvidenceBundle {
    notes::PatientHeader header;
    std::vector<EvidenceItem> items;  ///< oldest first
};

/// Builds a bundle ordered by note date, then note id, then sentence start.
EvidenceBundle make_bundle(const notes::PatientHeader& header,
                           const std::vector<const notes::Chunk*>& chunks);

inline constexpr std::string_view kNoEvidenceMarker = "NO EVIDENCE RETRIEVED";

struct PromptTemplate {
    std::string version;
    std::string body;

    /// The template compiled in from prompts/qa_prompt_v1.txt.
    static PromptTemplate builtin();
    /// First line must be "# template-version: <version>".
    static PromptTemplate parse(std::string_view text);
    static PromptTemplate from_file(const std::string& path);
};

/// Fills {{AGE}}, {{ENROLLMENT_DATE}}, {{EVIDENCE}} and {{QUESTION}}. Each
/// evidence line reads "[<date>] [<category>] <text> (source: <chunk_id>)".
/// Throws InputError if the bundle is not in chronological order.
std::string build_prompt(const Question& question, const EvidenceBundle& bundle,
                         const PromptTemplate& prompt_template);

struct QaRecord {
    std::string patient_id;
    std::string question_id;
    std::string question_explanation;
    std::string answer_explanation;
    AnswerValue answer = AnswerValue::NA;
    int confidence = 1;
    std::vector<std::string> citations;
    std::string backend_tag;
    std::string prompt_version;
    /// Set on fallback records, e.g. "invalid_response: ...".
    std::string failure_reason;
    std::size_t prompt_tokens = 0;
    std::size_t response_tokens = 0;

    bool operator==(const QaRecord&) const = default;
};

/// Parses the answer JSON. Surrounding whitespace and a single Markdown code
/// fence are tolerated. Throws ParseError for malformed JSON and
/// ValidationError for missing keys, unknown answers or confidence outside
/// 1..5. Only the answer fields of the returned record are populated.
QaRecord parse_response(std::string_view raw);

struct QaBackendConfig {
    double temperature = 0.0;
    std::size_t max_response_chars = 8000;
    std::chrono::milliseconds timeout{60000};
    int retry_count = 2;

    /// Throws InputError unless temperature is exactly 0 and limits are sane.
    void validate() const;
};

struct QaRequest {
    std::string patient_id;
    std::string question_id;
    std::string prompt;
    double temperature = 0.0;
    std::size_t max_chars = 8000;
};

class QaBackend {
public:
    virtual ~QaBackend() = default;
    virtual std::string tag() const = 0;
    /// Raw completion text. Throws TransportError. Must be thread-safe.
    virtual std::string complete(const QaRequest& request) = 0;
};

/// Replays responses from a fixture keyed by patient id, then question id.
/// A fixture value is either one response (string or JSON object) returned
/// on every attempt, or an array consumed one element per attempt with the
/// last element repeating. A missing key is a TransportError.
class ScriptedQaBackend final : public QaBackend {
public:
    using Script = std::vector<std::string>;

    explicit ScriptedQaBackend(std::map<std::string, std::map<std::string, Script>> fixtures);
    static std::unique_ptr<ScriptedQaBackend> from_file(const std::string& path);

    std::string tag() const override { return "scripted-qa"; }
    std::string complete(const QaRequest& request) override;

private:
    std::map<std::string, std::map<std::string, Script>> fixtures_;
    std::map<std::pair<std::string, std::string>, std::size_t> attempts_;
    std::mutex mutex_;
};

struct QaContext {
    const notes::ChunkStore& store;
    const retrieval::VectorIndex& index;
    retrieval::EmbeddingProvider& provider;
};

struct AnswerOptions {
    QaBackendConfig backend;
    std::size_t retrieval_k = retrieval::kDefaultRetrievalK;
    PromptTemplate prompt_template = PromptTemplate::builtin();
};

/// Retrieve, prompt, call, parse. Parse or validation failures are retried
/// `retry_count` times and then yield an NA record with confidence 1 and a
/// failure_reason. Transport failures are retried likewise and then
/// rethrown.
QaRecord answer_question(std::string_view patient_id, const Question& question,
                         const QaContext& context, QaBackend& backend,
                         const AnswerOptions& options = {});

struct QaTask {
    std::string patient_id;
    const Question* question = nullptr;
};

struct QaOutcome {
    std::optional<QaRecord> record;
    std::string transport_error;  ///< set when record is empty
};

/// Runs answer_question for every task on a bounded pool. Outcomes are
/// index-aligned with `tasks`.
std::vector<QaOutcome> answer_all(const std::vector<QaTask>& tasks, const QaContext& context,
                                  QaBackend& backend, const AnswerOptions& options,
                                  std::size_t max_in_flight);

/// One JSON object per line, each tagged with `run_id`.
std::string records_to_jsonl(const std::vector<QaRecord>& records, std::string_view run_id);
std::vector<QaRecord> parse_records_jsonl(std::string_view contents);

}  // namespace trialmatch::qa
