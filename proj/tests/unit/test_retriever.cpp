/**
 * @file test_retriever.cpp
 * @brief Cosine similarity, the mock embedder, index building and top-k.
 */

#include "test_support.hpp"

#include "trialmatch/error.hpp"
#include "trialmatch/retriever.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace trialmatch;
using namespace trialmatch::retrieval;
using trialmatch::testing::make_note;

namespace {

notes::Chunk chunk(std::string id, std::string text) {
    notes::Chunk c;
    c.chunk_id = std::move(id);
    c.patient_id = "P1";
    c.note_id = "n";
    c.note_date = *parse_iso_date("2023-01-01");
    c.note_category = "Consults";
    c.text = std::move(text);
    return c;
}

std::vector<notes::Chunk> small_corpus() {
    return {chunk("c3", "patient has metastatic breast cancer"),
            chunk("c1", "ECOG performance status is one"),
            chunk("c2", "EGFR exon 19 deletion detected")};
}

/// Returns vectors whose dimension changes after the first call.
class DriftingProvider final : public EmbeddingProvider {
public:
    std::string tag() const override { return "drift"; }
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
        const std::size_t dim = calls_++ == 0 ? 4 : 5;
        return std::vector<EmbeddingVector>(texts.size(), EmbeddingVector{std::vector<double>(dim, 1.0)});
    }

private:
    int calls_ = 0;
};

/// Counts batches and returns a constant vector per text.
class CountingProvider final : public EmbeddingProvider {
public:
    std::string tag() const override { return "counting"; }
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
        ++batches;
        largest_batch = std::max(largest_batch, texts.size());
        return std::vector<EmbeddingVector>(texts.size(), EmbeddingVector{{1.0, 0.0}});
    }
    int batches = 0;
    std::size_t largest_batch = 0;
};

class ShortProvider final : public EmbeddingProvider {
public:
    std::string tag() const override { return "short"; }
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
        return std::vector<EmbeddingVector>(texts.size() > 0 ? texts.size() - 1 : 0, EmbeddingVector{{1.0}});
    }
};

}  // namespace

// ============================================================================
// cosine
// ============================================================================

TEST(Cosine, SelfSimilarityIsOne) {
    const EmbeddingVector u{{1, 2, 2}};
    EXPECT_DOUBLE_EQ(cosine(u, u), 1.0);
}

TEST(Cosine, OrthogonalIsZero) {
    EXPECT_DOUBLE_EQ(cosine({{1, 0}}, {{0, 1}}), 0.0);
}

TEST(Cosine, FortyFiveDegrees) {
    EXPECT_NEAR(cosine({{1, 0}}, {{1, 1}}), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(cosine({{1, 0}}, {{1, 1}}), 0.7071, 1e-4);
}

TEST(Cosine, ZeroNormGivesZero) {
    EXPECT_EQ(cosine({{0, 0}}, {{1, 1}}), 0.0);
}

TEST(Cosine, DimensionMismatchIsAnError) {
    EXPECT_THROW(cosine({{1, 0}}, {{1, 0, 0}}), DimensionMismatch);
}

TEST(Cosine, OppositeIsMinusOne) {
    EXPECT_DOUBLE_EQ(cosine({{1, -2}}, {{-1, 2}}), -1.0);
}

// ============================================================================
// MockEmbedder
// ============================================================================

TEST(MockEmbedder, DeterministicUnitVectors) {
    MockEmbedder embedder;
    const auto a = embedder.embed_one("Metastatic breast cancer");
    const auto b = embedder.embed_one("metastatic BREAST cancer");
    EXPECT_EQ(a.dim(), MockEmbedder::kDefaultDim);
    EXPECT_EQ(a, b);
    double norm = 0.0;
    for (double v : a.values) norm += v * v;
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_EQ(embedder.tag(), "mock-bow-512");
}

TEST(MockEmbedder, EmptyTextIsZeroVector) {
    MockEmbedder embedder(16);
    const auto v = embedder.embed_one("");
    EXPECT_EQ(v.dim(), 16u);
    for (double x : v.values) EXPECT_EQ(x, 0.0);
}

TEST(MockEmbedder, DimensionIsPartOfTag) {
    EXPECT_NE(MockEmbedder(64).tag(), MockEmbedder(128).tag());
}

TEST(MockEmbedder, BatchMatchesSingle) {
    MockEmbedder embedder;
    const std::vector<std::string> texts = {"one two", "three"};
    const auto batch = embedder.embed(texts);
    ASSERT_EQ(batch.size(), 2u);
    EXPECT_EQ(batch[1], embedder.embed_one("three"));
}

// ============================================================================
// index_chunks
// ============================================================================

TEST(IndexChunks, EmptyCorpusGivesEmptyIndex) {
    MockEmbedder embedder;
    const auto index = index_chunks({}, embedder);
    EXPECT_TRUE(index.empty());
    EXPECT_EQ(index.provider_tag(), embedder.tag());
}

TEST(IndexChunks, OneEntryPerChunk) {
    MockEmbedder embedder;
    const auto index = index_chunks(small_corpus(), embedder);
    EXPECT_EQ(index.size(), 3u);
    EXPECT_EQ(index.dim(), 512u);
    for (const auto& [id, v] : index.entries()) EXPECT_EQ(v.dim(), 512u);
}

TEST(IndexChunks, ReindexingIsIdentical) {
    MockEmbedder embedder;
    EXPECT_EQ(index_chunks(small_corpus(), embedder), index_chunks(small_corpus(), embedder));
}

TEST(IndexChunks, DimensionDriftIsAnError) {
    DriftingProvider provider;
    EXPECT_THROW(index_chunks(small_corpus(), provider, IndexOptions{2}), DimensionMismatch);
}

TEST(IndexChunks, RespectsBatchSize) {
    CountingProvider provider;
    index_chunks(small_corpus(), provider, IndexOptions{2});
    EXPECT_EQ(provider.batches, 2);
    EXPECT_EQ(provider.largest_batch, 2u);
}

TEST(IndexChunks, WrongVectorCountIsAnError) {
    ShortProvider provider;
    EXPECT_THROW(index_chunks(small_corpus(), provider), Error);
}

TEST(VectorIndex, RejectsBadVectors) {
    VectorIndex index("t", 2);
    EXPECT_THROW(index.add("a", EmbeddingVector{{1.0, 2.0, 3.0}}), DimensionMismatch);
    EXPECT_THROW(index.add("a", EmbeddingVector{{1.0, std::nan("")}}), DimensionMismatch);
    EXPECT_THROW(index.add("a", EmbeddingVector{{1.0, INFINITY}}), DimensionMismatch);
}

// ============================================================================
// retrieve
// ============================================================================

TEST(Retrieve, IdenticalTextRanksFirstWithSimilarityOne) {
    MockEmbedder embedder;
    const auto index = index_chunks(small_corpus(), embedder);
    const auto hits = retrieve(index, "EGFR exon 19 deletion detected", 2, embedder);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].chunk_id, "c2");
    EXPECT_NEAR(hits[0].similarity, 1.0, 1e-12);
}

TEST(Retrieve, KLargerThanIndexReturnsAll) {
    MockEmbedder embedder;
    const auto index = index_chunks(small_corpus(), embedder);
    EXPECT_EQ(retrieve(index, "cancer", 50, embedder).size(), 3u);
}

TEST(Retrieve, TiesOrderedByChunkId) {
    MockEmbedder embedder;
    const auto index = index_chunks({chunk("b", "same words here"), chunk("a", "same words here"),
                                     chunk("c", "unrelated text entirely")},
                                    embedder);
    const auto hits = retrieve(index, "same words here", 3, embedder);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].chunk_id, "a");
    EXPECT_EQ(hits[1].chunk_id, "b");
    EXPECT_EQ(hits[0].similarity, hits[1].similarity);
}

TEST(Retrieve, ResultsAreNonIncreasing) {
    MockEmbedder embedder;
    const auto index = index_chunks(small_corpus(), embedder);
    const auto hits = retrieve(index, "breast cancer status", 3, embedder);
    for (std::size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].similarity, hits[i].similarity);
}

TEST(Retrieve, AllowedSetRestrictsCandidates) {
    MockEmbedder embedder;
    const auto index = index_chunks(small_corpus(), embedder);
    const std::set<std::string, std::less<>> allowed = {"c1", "c3"};
    const auto hits = retrieve(index, "EGFR exon 19 deletion detected", 5, embedder, &allowed);
    ASSERT_EQ(hits.size(), 2u);
    for (const auto& h : hits) EXPECT_TRUE(allowed.contains(h.chunk_id));
}

TEST(Retrieve, MismatchedProviderIsRejected) {
    MockEmbedder embedder;
    MockEmbedder other(64);
    const auto index = index_chunks(small_corpus(), embedder);
    EXPECT_THROW(retrieve(index, "cancer", 3, other), InputError);
}

TEST(Retrieve, ZeroKIsRejected) {
    MockEmbedder embedder;
    const auto index = index_chunks(small_corpus(), embedder);
    EXPECT_THROW(retrieve(index, "cancer", 0, embedder), InputError);
}

// ============================================================================
// Persistence
// ============================================================================

TEST(IndexJson, RoundTripAndCorpusBinding) {
    MockEmbedder embedder;
    const auto index = index_chunks(small_corpus(), embedder);
    const auto text = index_to_json(index, "abc123");
    EXPECT_EQ(index_from_json(text, "abc123"), index);
    EXPECT_EQ(index_from_json(text), index);
    EXPECT_THROW(index_from_json(text, "other"), InputError);
    EXPECT_THROW(index_from_json("{"), InputError);
}

TEST(IndexJson, FileNameKeysTagAndHash) {
    const auto name = index_file_name("mock-bow-512", "0123456789abcdef0123");
    EXPECT_EQ(name, "index-mock_bow_512-0123456789abcdef.json");
    EXPECT_NE(index_file_name("http-embed:m/x", "ff"), index_file_name("http-embed:m/y", "ff"));
}
