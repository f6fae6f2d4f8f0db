#include "trialmatch/http_backends.hpp"

#include "trialmatch/error.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <regex>

namespace trialmatch::http {

using nlohmann::json;

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch match;
    if (!std::regex_match(url, match, pattern)) throw InputError("invalid endpoint URL '" + url + "'");
    return {match[1].str(), match[2].matched ? match[2].str() : "/"};
}

}  // namespace

std::string post_json(const Endpoint& endpoint, const std::string& body) {
    const ParsedUrl url = split_url(endpoint.url);
    std::string last_error;
    for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
        httplib::Client client(url.origin);
        const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
        const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - seconds);
        client.set_connection_timeout(seconds.count(), micros.count());
        client.set_read_timeout(seconds.count(), micros.count());
        client.set_write_timeout(seconds.count(), micros.count());
        httplib::Headers headers;
        if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

        auto result = client.Post(url.path, headers, body, "application/json");
        if (!result) {
            last_error = "request to " + endpoint.url + " failed: " + httplib::to_string(result.error());
        } else if (result->status < 200 || result->status >= 300) {
            last_error = "request to " + endpoint.url + " returned HTTP " + std::to_string(result->status);
        } else {
            return result->body;
        }
        spdlog::warn("{} (attempt {}/{})", last_error, attempt + 1, endpoint.retries + 1);
    }
    throw TransportError(last_error);
}

composer::GeneratorOutput HttpQuestionGenerator::generate(std::string_view criterion_text,
                                                          logic::CriterionKind kind) {
    json request;
    request["criterion_text"] = criterion_text;
    request["kind"] = logic::to_string(kind);
    return composer::parse_generator_output(post_json(endpoint_, request.dump()));
}

std::string HttpConceptClassifier::classify(const composer::GeneratedQuestion& question) {
    json request;
    request["question_text"] = question.text;
    request["suggested"] = question.concept_name;
    const std::string raw = post_json(endpoint_, request.dump());
    try {
        return json::parse(raw).at("concept").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed classifier response: ") + e.what(), raw);
    }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(Endpoint endpoint, std::string model_tag, std::size_t batch_size)
    : endpoint_(std::move(endpoint)), model_tag_(std::move(model_tag)), batch_size_(std::max<std::size_t>(1, batch_size)) {}

std::vector<retrieval::EmbeddingVector> HttpEmbeddingProvider::embed(std::span<const std::string> texts) {
    std::vector<retrieval::EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t begin = 0; begin < texts.size(); begin += batch_size_) {
        const auto batch = texts.subspan(begin, std::min(batch_size_, texts.size() - begin));
        json request;
        request["texts"] = std::vector<std::string>(batch.begin(), batch.end());
        const std::string raw = post_json(endpoint_, request.dump());
        try {
            const json doc = json::parse(raw);
            const auto& vectors = doc.at("vectors");
            if (vectors.size() != batch.size()) {
                throw DimensionMismatch("embedding endpoint returned " + std::to_string(vectors.size()) +
                                        " vectors for " + std::to_string(batch.size()) + " texts");
            }
            for (const auto& v : vectors) out.push_back({v.get<std::vector<double>>()});
        } catch (const json::exception& e) {
            throw FormatError(std::string("malformed embedding response: ") + e.what(), raw);
        }
    }
    return out;
}

std::string HttpQaBackend::complete(const qa::QaRequest& request) {
    json body;
    body["prompt"] = request.prompt;
    body["temperature"] = request.temperature;
    body["max_chars"] = request.max_chars;
    const std::string raw = post_json(endpoint_, body.dump());
    try {
        return json::parse(raw).at("text").get<std::string>();
    } catch (const json::exception&) {
        // An unusable envelope is handed to the answer parser, which retries
        // and eventually records an NA fallback.
        return raw;
    }
}

}  // namespace trialmatch::http
