#include "trialmatch/note_store.hpp"

#include "trialmatch/error.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace trialmatch::notes {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string>& default_note_categories() {
    static const std::vector<std::string> categories = {
        "Assessment & Plan Note",
        "Brief Op Note",
        "Consults",
        "Discharge Instructions",
        "Discharge Summary",
        "H&P",
        "H&P (View-Only)",
        "Op Note",
        "OR Surgeon",
        "Procedures",
        "Progress Notes",
        "Rad Onc Simulation",
        "Rad Onc Weekly Review",
    };
    return categories;
}

std::vector<ClinicalNote> filter_notes(const std::vector<ClinicalNote>& notes,
                                       const PatientHeader& header,
                                       const std::vector<std::string>& allowed_categories) {
    std::set<std::string, std::less<>> allowed;
    for (const auto& category : allowed_categories) allowed.insert(to_lower(category));

    std::vector<ClinicalNote> kept;
    for (const auto& note : notes) {
        if (note.date > header.enrollment_date) continue;
        if (!allowed.contains(to_lower(note.category))) continue;
        kept.push_back(note);
    }
    return kept;
}

// =============================================================================
// Sentence splitting
// =============================================================================

const std::vector<std::string>& default_abbreviations() {
    static const std::vector<std::string> abbreviations = {
        "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "approx",
        "mg", "mcg", "ml", "kg", "cm", "mm", "dx", "hx", "tx", "pt", "fig", "inc", "min", "hr",
    };
    return abbreviations;
}

SentenceSplitter::SentenceSplitter() : SentenceSplitter(default_abbreviations()) {}

SentenceSplitter::SentenceSplitter(const std::vector<std::string>& abbreviations) {
    for (const auto& a : abbreviations) {
        std::string key = to_lower(a);
        while (!key.empty() && key.back() == '.') key.pop_back();
        if (!key.empty()) abbreviations_.insert(std::move(key));
    }
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

bool opens_sentence(char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isupper(u) || std::isdigit(u) || c == '"' || c == '(' || c == '[';
}

}  // namespace

bool SentenceSplitter::is_abbreviation(std::string_view text, std::size_t period) const {
    std::size_t begin = period;
    while (begin > 0 && !is_space(text[begin - 1])) --begin;
    std::string_view word = text.substr(begin, period - begin);
    while (!word.empty() && (word.front() == '(' || word.front() == '[' || word.front() == '"')) {
        word.remove_prefix(1);
    }
    return !word.empty() && abbreviations_.contains(to_lower(word));
}

std::vector<SentenceSpan> SentenceSplitter::spans(std::string_view text) const {
    std::vector<SentenceSpan> out;
    auto emit = [&](std::size_t begin, std::size_t end) {
        while (begin < end && is_space(text[begin])) ++begin;
        while (end > begin && is_space(text[end - 1])) --end;
        if (begin < end) out.push_back({begin, end});
    };

    std::size_t start = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const char c = text[i];
        if (c == '\n') {
            std::size_t j = i + 1;
            while (j < n && text[j] != '\n' && is_space(text[j])) ++j;
            if (j < n && text[j] == '\n') {
                emit(start, i);
                start = j + 1;
                i = j + 1;
                continue;
            }
        }
        if (c == '.' || c == '!' || c == '?') {
            std::size_t j = i + 1;
            while (j < n && (text[j] == '.' || text[j] == '!' || text[j] == '?' || is_closer(text[j]))) ++j;
            std::size_t k = j;
            while (k < n && is_space(text[k])) ++k;
            const bool followed = k > j && k < n && opens_sentence(text[k]);
            const bool guarded = c == '.' && j == i + 1 && is_abbreviation(text, i);
            if (followed && !guarded) {
                emit(start, j);
                start = k;
                i = k;
                continue;
            }
            i = j;
            continue;
        }
        ++i;
    }
    emit(start, n);
    return out;
}

std::vector<std::string> SentenceSplitter::split(std::string_view text) const {
    std::vector<std::string> sentences;
    for (const auto& span : spans(text)) {
        sentences.emplace_back(text.substr(span.begin, span.end - span.begin));
    }
    return sentences;
}

std::vector<std::string> split_sentences(std::string_view text) {
    static const SentenceSplitter splitter;
    return splitter.split(text);
}

// =============================================================================
// Chunking
// =============================================================================

std::string make_chunk_id(std::string_view patient_id, std::string_view note_id,
                          std::size_t start, std::size_t end) {
    std::string key;
    key.append(patient_id).push_back('\x1f');
    key.append(note_id).push_back('\x1f');
    key.append(std::to_string(start)).push_back('\x1f');
    key.append(std::to_string(end));
    return "c" + sha256_hex(key).substr(0, 16);
}

std::vector<std::pair<std::size_t, std::size_t>> pack_sentences(
    const std::vector<std::size_t>& sentence_tokens, std::size_t max_tokens_per_chunk) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    const std::size_t n = sentence_tokens.size();
    if (n == 0) return ranges;

    std::size_t start = 0;
    bool overlap_start = false;  // `start` repeats the previous chunk's last sentence
    while (true) {
        std::size_t end = start;
        std::size_t tokens = sentence_tokens[start];
        while (end + 1 < n && tokens + sentence_tokens[end + 1] <= max_tokens_per_chunk) {
            ++end;
            tokens += sentence_tokens[end];
        }
        if (end == start && overlap_start) {
            // The shared sentence cannot be paired with its successor; it is
            // already covered, so restart packing from the successor.
            ++start;
            overlap_start = false;
            continue;
        }
        ranges.emplace_back(start, end);
        if (end + 1 >= n) break;
        if (end > start) {
            start = end;
            overlap_start = true;
        } else {
            start = end + 1;
            overlap_start = false;
        }
    }
    return ranges;
}

std::vector<Chunk> chunk_note(const ClinicalNote& note, std::size_t max_tokens_per_chunk,
                              const SentenceSplitter& splitter) {
    const std::vector<std::string> sentences = splitter.split(note.text);
    std::vector<std::size_t> tokens;
    tokens.reserve(sentences.size());
    for (const auto& s : sentences) tokens.push_back(count_tokens(s));

    std::vector<Chunk> chunks;
    for (const auto& [start, end] : pack_sentences(tokens, max_tokens_per_chunk)) {
        Chunk chunk;
        chunk.patient_id = note.patient_id;
        chunk.note_id = note.note_id;
        chunk.note_date = note.date;
        chunk.note_category = note.category;
        chunk.sentence_start = start;
        chunk.sentence_end = end;
        chunk.chunk_id = make_chunk_id(note.patient_id, note.note_id, start, end);
        for (std::size_t s = start; s <= end; ++s) {
            if (s > start) chunk.text += ' ';
            chunk.text += sentences[s];
        }
        if (start == end && tokens[start] > max_tokens_per_chunk) {
            spdlog::warn("note {}/{}: sentence {} has {} tokens, over the chunk budget of {}",
                         note.patient_id, note.note_id, start, tokens[start], max_tokens_per_chunk);
        }
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

// =============================================================================
// Persistence
// =============================================================================

namespace {

template <class Fn>
void for_each_jsonl_line(std::string_view contents, Fn&& fn) {
    std::istringstream lines{std::string(contents)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (trim(line).empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw InputError("line " + std::to_string(number) + ": malformed JSON: " + e.what());
        }
        if (!doc.is_object()) {
            throw InputError("line " + std::to_string(number) + ": expected a JSON object");
        }
        try {
            fn(doc, number);
        } catch (const json::exception& e) {
            throw InputError("line " + std::to_string(number) + ": " + e.what());
        }
    }
}

Date require_date(const json& doc, const char* field, std::size_t line) {
    auto date = parse_iso_date(doc.at(field).get<std::string>());
    if (!date) throw InputError("line " + std::to_string(line) + ": invalid " + field);
    return *date;
}

}  // namespace

NoteLoadResult parse_notes_jsonl(std::string_view contents) {
    NoteLoadResult result;
    std::set<std::pair<std::string, std::string>> seen;
    for_each_jsonl_line(contents, [&](const json& doc, std::size_t line) {
        ClinicalNote note;
        note.patient_id = doc.at("patient_id").get<std::string>();
        note.note_id = doc.at("note_id").get<std::string>();
        note.category = doc.at("category").get<std::string>();
        note.text = doc.at("text").get<std::string>();
        if (note.patient_id.empty() || note.note_id.empty()) {
            throw InputError("line " + std::to_string(line) + ": empty patient_id or note_id");
        }
        if (!seen.emplace(note.patient_id, note.note_id).second) {
            throw InputError("line " + std::to_string(line) + ": duplicate note_id '" +
                             note.note_id + "' for patient '" + note.patient_id + "'");
        }
        const json& raw_date = doc.contains("date") ? doc.at("date") : json();
        auto date = raw_date.is_string() ? parse_iso_date(raw_date.get<std::string>()) : std::nullopt;
        if (!date) {
            const std::string reason = "line " + std::to_string(line) + ": note " + note.note_id +
                                       " has no parseable date";
            spdlog::warn("{}; skipped", reason);
            result.skipped.push_back(reason);
            return;
        }
        note.date = *date;
        result.notes.push_back(std::move(note));
    });
    return result;
}

NoteLoadResult load_notes_jsonl(const std::string& path) {
    try {
        return parse_notes_jsonl(read_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<PatientHeader> parse_headers_jsonl(std::string_view contents) {
    std::vector<PatientHeader> headers;
    std::set<std::string> seen;
    for_each_jsonl_line(contents, [&](const json& doc, std::size_t line) {
        PatientHeader header;
        header.patient_id = doc.at("patient_id").get<std::string>();
        header.age_at_enrollment = doc.at("age_at_enrollment").get<int>();
        header.enrollment_date = require_date(doc, "enrollment_date", line);
        if (header.patient_id.empty()) {
            throw InputError("line " + std::to_string(line) + ": empty patient_id");
        }
        if (header.age_at_enrollment <= 0) {
            throw InputError("line " + std::to_string(line) + ": age_at_enrollment must be > 0");
        }
        if (!seen.insert(header.patient_id).second) {
            throw InputError("line " + std::to_string(line) + ": duplicate patient '" +
                             header.patient_id + "'");
        }
        headers.push_back(std::move(header));
    });
    return headers;
}

std::vector<PatientHeader> load_headers_jsonl(const std::string& path) {
    try {
        return parse_headers_jsonl(read_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::string headers_to_jsonl(const std::vector<PatientHeader>& headers) {
    std::string out;
    for (const auto& h : headers) {
        ordered_json doc;
        doc["patient_id"] = h.patient_id;
        doc["age_at_enrollment"] = h.age_at_enrollment;
        doc["enrollment_date"] = format_date(h.enrollment_date);
        out += doc.dump();
        out += '\n';
    }
    return out;
}

std::string chunks_to_jsonl(const std::vector<Chunk>& chunks) {
    std::string out;
    for (const auto& c : chunks) {
        ordered_json doc;
        doc["chunk_id"] = c.chunk_id;
        doc["patient_id"] = c.patient_id;
        doc["note_id"] = c.note_id;
        doc["note_date"] = format_date(c.note_date);
        doc["note_category"] = c.note_category;
        doc["sentence_start"] = c.sentence_start;
        doc["sentence_end"] = c.sentence_end;
        doc["text"] = c.text;
        out += doc.dump();
        out += '\n';
    }
    return out;
}

std::vector<Chunk> parse_chunks_jsonl(std::string_view contents) {
    std::vector<Chunk> chunks;
    for_each_jsonl_line(contents, [&](const json& doc, std::size_t line) {
        Chunk c;
        c.chunk_id = doc.at("chunk_id").get<std::string>();
        c.patient_id = doc.at("patient_id").get<std::string>();
        c.note_id = doc.at("note_id").get<std::string>();
        c.note_date = require_date(doc, "note_date", line);
        c.note_category = doc.at("note_category").get<std::string>();
        c.sentence_start = doc.at("sentence_start").get<std::size_t>();
        c.sentence_end = doc.at("sentence_end").get<std::size_t>();
        c.text = doc.at("text").get<std::string>();
        chunks.push_back(std::move(c));
    });
    return chunks;
}

ChunkStore::ChunkStore(std::vector<PatientHeader> headers, std::vector<Chunk> chunks)
    : headers_(std::move(headers)), chunks_(std::move(chunks)) {
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (!by_id_.emplace(chunks_[i].chunk_id, i).second) {
            throw InputError("duplicate chunk id '" + chunks_[i].chunk_id + "'");
        }
    }
}

const Chunk* ChunkStore::find(std::string_view chunk_id) const {
    auto it = by_id_.find(chunk_id);
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

const PatientHeader* ChunkStore::header(std::string_view patient_id) const {
    auto it = std::find_if(headers_.begin(), headers_.end(),
                           [&](const PatientHeader& h) { return h.patient_id == patient_id; });
    return it == headers_.end() ? nullptr : &*it;
}

std::vector<std::string> ChunkStore::chunk_ids_for(std::string_view patient_id) const {
    std::vector<std::string> ids;
    for (const auto& c : chunks_) {
        if (c.patient_id == patient_id) ids.push_back(c.chunk_id);
    }
    return ids;
}

std::string ChunkStore::corpus_hash() const {
    return sha256_hex(chunks_to_jsonl(chunks_));
}

}  // namespace trialmatch::notes
