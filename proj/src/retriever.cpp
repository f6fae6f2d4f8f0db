#include "trialmatch/retriever.hpp"

#include "trialmatch/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>

namespace trialmatch::retrieval {

using nlohmann::json;
using nlohmann::ordered_json;

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim()) {
        throw DimensionMismatch("cosine of vectors with dimensions " + std::to_string(u.dim()) +
                                " and " + std::to_string(v.dim()));
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.dim(); ++i) {
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

// =============================================================================
// Mock embedder
// =============================================================================

MockEmbedder::MockEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw InputError("mock embedder dimension must be positive");
}

std::string MockEmbedder::tag() const {
    return "mock-bow-" + std::to_string(dim_);
}

namespace {

// FNV-1a; only needs to be stable, not cryptographic.
std::uint64_t word_hash(std::string_view word) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : word) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

EmbeddingVector MockEmbedder::embed_one(std::string_view text) const {
    EmbeddingVector vec;
    vec.values.assign(dim_, 0.0);
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            vec.values[word_hash(word) % dim_] += 1.0;
            word.clear();
        }
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            flush();
        }
    }
    flush();

    double norm = 0.0;
    for (double x : vec.values) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : vec.values) x /= norm;
    }
    return vec;
}

std::vector<EmbeddingVector> MockEmbedder::embed(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

// =============================================================================
// Index
// =============================================================================

VectorIndex::VectorIndex(std::string provider_tag, std::size_t dim)
    : provider_tag_(std::move(provider_tag)), dim_(dim) {}

void VectorIndex::add(std::string chunk_id, EmbeddingVector vector) {
    if (vector.dim() != dim_) {
        throw DimensionMismatch("chunk '" + chunk_id + "' has dimension " +
                                std::to_string(vector.dim()) + ", index expects " +
                                std::to_string(dim_));
    }
    if (!std::all_of(vector.values.begin(), vector.values.end(),
                     [](double x) { return std::isfinite(x); })) {
        throw DimensionMismatch("chunk '" + chunk_id + "' has a non-finite embedding");
    }
    entries_.insert_or_assign(std::move(chunk_id), std::move(vector));
}

VectorIndex index_chunks(const std::vector<notes::Chunk>& chunks, EmbeddingProvider& provider,
                         const IndexOptions& options) {
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    std::optional<VectorIndex> index;

    for (std::size_t begin = 0; begin < chunks.size(); begin += batch) {
        const std::size_t end = std::min(chunks.size(), begin + batch);
        std::vector<std::string> texts;
        for (std::size_t i = begin; i < end; ++i) texts.push_back(chunks[i].text);

        auto vectors = provider.embed(texts);
        if (vectors.size() != texts.size()) {
            throw DimensionMismatch("provider returned " + std::to_string(vectors.size()) +
                                    " vectors for " + std::to_string(texts.size()) + " texts");
        }
        if (!index) index.emplace(provider.tag(), vectors.front().dim());
        for (std::size_t i = begin; i < end; ++i) {
            index->add(chunks[i].chunk_id, std::move(vectors[i - begin]));
        }
    }
    return index ? std::move(*index) : VectorIndex(provider.tag(), 0);
}

std::vector<ScoredChunk> retrieve(const VectorIndex& index, std::string_view query_text,
                                  std::size_t k, EmbeddingProvider& provider,
                                  const std::set<std::string, std::less<>>* allowed) {
    if (k == 0) throw InputError("retrieval k must be at least 1");
    if (provider.tag() != index.provider_tag()) {
        throw InputError("index was built with '" + index.provider_tag() +
                         "' but the query provider is '" + provider.tag() + "'");
    }
    if (index.empty()) return {};

    const std::string query(query_text);
    auto embedded = provider.embed(std::span<const std::string>(&query, 1));
    if (embedded.size() != 1) throw DimensionMismatch("provider returned no query vector");
    const EmbeddingVector& q = embedded.front();

    std::vector<ScoredChunk> scored;
    for (const auto& [id, vec] : index.entries()) {
        if (allowed && !allowed->contains(id)) continue;
        scored.push_back({id, cosine(q, vec)});
    }
    auto better = [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.chunk_id < b.chunk_id;
    };
    const std::size_t keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), better);
    scored.resize(keep);
    return scored;
}

// =============================================================================
// Persistence
// =============================================================================

std::string index_to_json(const VectorIndex& index, std::string_view corpus_hash) {
    ordered_json doc;
    doc["provider_tag"] = index.provider_tag();
    doc["dim"] = index.dim();
    doc["corpus_hash"] = corpus_hash;
    auto& entries = doc["entries"] = ordered_json::array();
    for (const auto& [id, vec] : index.entries()) {
        ordered_json entry;
        entry["chunk_id"] = id;
        entry["values"] = vec.values;
        entries.push_back(std::move(entry));
    }
    return doc.dump() + "\n";
}

VectorIndex index_from_json(std::string_view contents, std::string_view expected_corpus_hash) {
    try {
        const json doc = json::parse(contents);
        const auto stored_hash = doc.at("corpus_hash").get<std::string>();
        if (!expected_corpus_hash.empty() && stored_hash != expected_corpus_hash) {
            throw InputError("index was built for a different corpus (hash " + stored_hash + ")");
        }
        VectorIndex index(doc.at("provider_tag").get<std::string>(), doc.at("dim").get<std::size_t>());
        for (const auto& entry : doc.at("entries")) {
            index.add(entry.at("chunk_id").get<std::string>(),
                      EmbeddingVector{entry.at("values").get<std::vector<double>>()});
        }
        return index;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed index file: ") + e.what());
    }
}

std::string index_file_name(std::string_view provider_tag, std::string_view corpus_hash) {
    std::string slug;
    for (char c : provider_tag) {
        slug.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    }
    return "index-" + slug + "-" + std::string(corpus_hash.substr(0, 16)) + ".json";
}

}  // namespace trialmatch::retrieval
