/**
 * @file http_backends.hpp
 * @brief JSON-over-HTTP implementations of the model backend contracts.
 *
 * Wire shapes (all POST, application/json):
 *   generator:  {criterion_text, kind}       -> {questions:[{text, concept}], dnf:[[{q_index, negated}]]}
 *   classifier: {question_text, suggested}   -> {concept}
 *   embeddings: {texts:[...]}                -> {vectors:[[...]]}
 *   qa:         {prompt, temperature, max_chars} -> {text}
 */

#pragma once

#include "trialmatch/qa_engine.hpp"
#include "trialmatch/retriever.hpp"
#include "trialmatch/trial_composer.hpp"

#include <chrono>
#include <cstddef>
#include <string>

namespace trialmatch::http {

struct Endpoint {
    /// Full URL, e.g. "http://localhost:8000/v1/generate".
    std::string url;
    std::chrono::milliseconds timeout{60000};
    /// Extra attempts after a transport failure.
    int retries = 2;
    /// Sent as "Authorization: Bearer <key>" when non-empty.
    std::string api_key;
};

/// POSTs `body` and returns the response body. Connection failures and
/// non-2xx statuses are retried and finally raised as TransportError.
std::string post_json(const Endpoint& endpoint, const std::string& body);

class HttpQuestionGenerator final : public composer::QuestionGenerator {
public:
    explicit HttpQuestionGenerator(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::string tag() const override { return "http-generator:" + endpoint_.url; }
    composer::GeneratorOutput generate(std::string_view criterion_text, logic::CriterionKind kind) override;

private:
    Endpoint endpoint_;
};

class HttpConceptClassifier final : public composer::ConceptClassifier {
public:
    explicit HttpConceptClassifier(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::string tag() const override { return "http-classifier:" + endpoint_.url; }
    std::string classify(const composer::GeneratedQuestion& question) override;

private:
    Endpoint endpoint_;
};

class HttpEmbeddingProvider final : public retrieval::EmbeddingProvider {
public:
    /// `model_tag` names the embedding space and becomes part of tag().
    HttpEmbeddingProvider(Endpoint endpoint, std::string model_tag, std::size_t batch_size = 64);
    std::string tag() const override { return "http-embed:" + model_tag_; }
    std::vector<retrieval::EmbeddingVector> embed(std::span<const std::string> texts) override;

private:
    Endpoint endpoint_;
    std::string model_tag_;
    std::size_t batch_size_;
};

class HttpQaBackend final : public qa::QaBackend {
public:
    explicit HttpQaBackend(Endpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::string tag() const override { return "http-qa:" + endpoint_.url; }
    std::string complete(const qa::QaRequest& request) override;

private:
    Endpoint endpoint_;
};

}  // namespace trialmatch::http
