/**
 * @file retriever.hpp
 * @brief Embedding providers and an exact brute-force cosine index.
 */

#pragma once

#include "trialmatch/note_store.hpp"

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trialmatch::retrieval {

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

/// dot(u, v) / (|u| |v|); 0 when either norm is zero. Throws
/// DimensionMismatch when the dimensions differ.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Identifies the embedding space; indexes are bound to it.
    virtual std::string tag() const = 0;
    /// Must return one vector per text and be deterministic per text.
    virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// Lowercased word counts hashed into a fixed-size space, L2-normalised.
class MockEmbedder final : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDim = 512;

    explicit MockEmbedder(std::size_t dim = kDefaultDim);

    std::string tag() const override;
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

    EmbeddingVector embed_one(std::string_view text) const;

private:
    std::size_t dim_;
};

class VectorIndex {
public:
    VectorIndex(std::string provider_tag, std::size_t dim);

    const std::string& provider_tag() const noexcept { return provider_tag_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// Throws DimensionMismatch on a wrong-sized or non-finite vector.
    void add(std::string chunk_id, EmbeddingVector vector);

    /// Entries ordered by chunk id.
    const std::map<std::string, EmbeddingVector, std::less<>>& entries() const noexcept {
        return entries_;
    }

    bool operator==(const VectorIndex&) const = default;

private:
    std::string provider_tag_;
    std::size_t dim_;
    std::map<std::string, EmbeddingVector, std::less<>> entries_;
};

struct IndexOptions {
    std::size_t batch_size = 64;
};

/// Embeds every chunk; a batch whose dimension differs from the first batch
/// is an error.
VectorIndex index_chunks(const std::vector<notes::Chunk>& chunks, EmbeddingProvider& provider,
                         const IndexOptions& options = {});

struct ScoredChunk {
    std::string chunk_id;
    double similarity = 0.0;

    bool operator==(const ScoredChunk&) const = default;
};

inline constexpr std::size_t kDefaultRetrievalK = 10;

/// Top-k by cosine descending, ties by chunk id ascending. When `allowed` is
/// non-null only those chunk ids are considered. Throws InputError if the
/// provider tag differs from the index's or k is 0.
std::vector<ScoredChunk> retrieve(const VectorIndex& index, std::string_view query_text,
                                  std::size_t k, EmbeddingProvider& provider,
                                  const std::set<std::string, std::less<>>* allowed = nullptr);

/// JSON sidecar {provider_tag, dim, corpus_hash, entries:[{chunk_id, values}]}.
std::string index_to_json(const VectorIndex& index, std::string_view corpus_hash);

/// Throws InputError when the stored corpus hash differs from
/// `expected_corpus_hash` (unless the latter is empty).
VectorIndex index_from_json(std::string_view contents, std::string_view expected_corpus_hash = {});

/// File name that keys an index by provider tag and corpus hash.
std::string index_file_name(std::string_view provider_tag, std::string_view corpus_hash);

}  // namespace trialmatch::retrieval
