/**
 * @file note_store.hpp
 * @brief Patient notes: filtering, sentence splitting and overlapping chunks.
 */

#pragma once

#include "trialmatch/common.hpp"

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch::notes {

struct ClinicalNote {
    std::string patient_id;
    std::string note_id;
    std::string category;
    Date date;
    std::string text;

    bool operator==(const ClinicalNote&) const = default;
};

struct PatientHeader {
    std::string patient_id;
    int age_at_enrollment = 0;
    Date enrollment_date;

    bool operator==(const PatientHeader&) const = default;
};

struct Chunk {
    std::string chunk_id;
    std::string patient_id;
    std::string note_id;
    Date note_date;
    std::string note_category;
    std::size_t sentence_start = 0;  ///< inclusive, 0-based
    std::size_t sentence_end = 0;    ///< inclusive
    std::string text;

    bool operator==(const Chunk&) const = default;
};

/// The thirteen oncology-relevant note categories used by default.
const std::vector<std::string>& default_note_categories();

/// Keeps notes dated on or before the enrollment date whose category matches
/// `allowed_categories` (case-insensitive exact match). Order is preserved.
/// The notes are assumed to belong to `header`'s patient.
std::vector<ClinicalNote> filter_notes(const std::vector<ClinicalNote>& notes,
                                       const PatientHeader& header,
                                       const std::vector<std::string>& allowed_categories =
                                           default_note_categories());

// =============================================================================
// Sentence splitting
// =============================================================================

struct SentenceSpan {
    std::size_t begin = 0;  ///< byte offset of the first character
    std::size_t end = 0;    ///< one past the last character
};

const std::vector<std::string>& default_abbreviations();

/// Rule-based splitter. A sentence ends at '.', '!' or '?' (plus any closing
/// quotes or brackets) when followed by whitespace and then an uppercase
/// letter or digit, or at a blank line. A period closing a guarded
/// abbreviation ("Dr.", "mg.") does not end a sentence.
class SentenceSplitter {
public:
    SentenceSplitter();
    explicit SentenceSplitter(const std::vector<std::string>& abbreviations);

    /// Trimmed, non-empty sentence spans in order. Only whitespace lies
    /// between consecutive spans.
    std::vector<SentenceSpan> spans(std::string_view text) const;

    std::vector<std::string> split(std::string_view text) const;

private:
    bool is_abbreviation(std::string_view text, std::size_t period) const;

    std::set<std::string, std::less<>> abbreviations_;
};

/// split() with the default abbreviation list.
std::vector<std::string> split_sentences(std::string_view text);

// =============================================================================
// Chunking
// =============================================================================

inline constexpr std::size_t kDefaultChunkTokens = 256;

/// Stable id derived from (patient_id, note_id, start, end).
std::string make_chunk_id(std::string_view patient_id, std::string_view note_id,
                          std::size_t start, std::size_t end);

/// Packs whole sentences greedily up to `max_tokens_per_chunk` whitespace
/// tokens. Each chunk after the first starts with the last sentence of its
/// predecessor. A sentence larger than the budget becomes its own chunk and
/// a warning is logged; if even two neighbouring sentences cannot share a
/// chunk the overlap is dropped at that point so packing still advances.
std::vector<Chunk> chunk_note(const ClinicalNote& note,
                              std::size_t max_tokens_per_chunk = kDefaultChunkTokens,
                              const SentenceSplitter& splitter = SentenceSplitter());

/// Sentence-index ranges chunk_note would emit for sentences of the given
/// token sizes. Exposed for tests and diagnostics.
std::vector<std::pair<std::size_t, std::size_t>> pack_sentences(
    const std::vector<std::size_t>& sentence_tokens, std::size_t max_tokens_per_chunk);

// =============================================================================
// Persistence
// =============================================================================

struct NoteLoadResult {
    std::vector<ClinicalNote> notes;
    /// "line N: reason" for notes dropped because of an unparseable date.
    std::vector<std::string> skipped;
};

/// JSON Lines {patient_id, note_id, category, date, text}. Structural
/// problems throw InputError naming the line; bad dates are skipped.
NoteLoadResult load_notes_jsonl(const std::string& path);
NoteLoadResult parse_notes_jsonl(std::string_view contents);

/// JSON Lines {patient_id, age_at_enrollment, enrollment_date}.
std::vector<PatientHeader> load_headers_jsonl(const std::string& path);
std::vector<PatientHeader> parse_headers_jsonl(std::string_view contents);

std::string headers_to_jsonl(const std::vector<PatientHeader>& headers);

/// Chunk store: one chunk per line, written in the given order.
std::string chunks_to_jsonl(const std::vector<Chunk>& chunks);
std::vector<Chunk> parse_chunks_jsonl(std::string_view contents);

/// In-memory view over a persisted corpus.
class ChunkStore {
public:
    ChunkStore() = default;
    ChunkStore(std::vector<PatientHeader> headers, std::vector<Chunk> chunks);

    const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
    const std::vector<PatientHeader>& headers() const noexcept { return headers_; }

    const Chunk* find(std::string_view chunk_id) const;
    const PatientHeader* header(std::string_view patient_id) const;
    /// Chunk ids of one patient, in store order.
    std::vector<std::string> chunk_ids_for(std::string_view patient_id) const;

    /// Hash of the serialized chunks; keys index files.
    std::string corpus_hash() const;

private:
    std::vector<PatientHeader> headers_;
    std::vector<Chunk> chunks_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
};

}  // namespace trialmatch::notes
