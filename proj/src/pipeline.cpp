#include "trialmatch/pipeline.hpp"

#include "trialmatch/common.hpp"
#include "trialmatch/error.hpp"
#include "trialmatch/http_backends.hpp"

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <map>
#include <regex>
#include <set>
#include <sstream>

namespace trialmatch::app {

using nlohmann::json;
using nlohmann::ordered_json;

int exit_code_for(const std::exception& error) {
    if (dynamic_cast<const TransportError*>(&error)) return kExitBackendError;
    if (dynamic_cast<const Error*>(&error)) return kExitInputError;
    if (dynamic_cast<const json::exception*>(&error)) return kExitInputError;
    return 1;
}

// ============================================================================
// Configuration
// ============================================================================

namespace {

double to_double(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    char* end = nullptr;
    const double value = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw InputError("config '" + std::string(key) + "': '" + s + "' is not a number");
    }
    return value;
}

long long to_integer(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw InputError("config '" + std::string(key) + "': '" + s + "' is not an integer");
    }
    return value;
}

std::size_t to_count(std::string_view key, std::string_view text) {
    const long long value = to_integer(key, text);
    if (value < 0) throw InputError("config '" + std::string(key) + "' must not be negative");
    return static_cast<std::size_t>(value);
}

bool to_bool(std::string_view key, std::string_view text) {
    const std::string s = to_lower(trim(text));
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw InputError("config '" + std::string(key) + "': '" + s + "' is not a boolean");
}

std::string unquote(std::string_view text) {
    std::string s = trim(text);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

using Setter = void (*)(PipelineConfig&, std::string_view key, const std::vector<std::string>&);

const std::string& single(std::string_view key, const std::vector<std::string>& values) {
    if (values.size() != 1) throw InputError("config '" + std::string(key) + "' takes a single value");
    return values.front();
}

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"thresholds.met", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.thresholds.met = to_double(k, single(k, v));
         }},
        {"thresholds.notmet", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.thresholds.not_met = to_double(k, single(k, v));
         }},
        {"tier_weights.w1", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.tier_weights.w1 = to_double(k, single(k, v));
         }},
        {"tier_weights.w2", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.tier_weights.w2 = to_double(k, single(k, v));
         }},
        {"tier_weights.w3", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.tier_weights.w3 = to_double(k, single(k, v));
         }},
        {"tier_weights.w4", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.tier_weights.w4 = to_double(k, single(k, v));
         }},
        {"retrieval_k", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.retrieval_k = to_count(k, single(k, v));
         }},
        {"chunk_max_tokens", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.chunk_max_tokens = to_count(k, single(k, v));
         }},
        {"allowed_note_categories", [](PipelineConfig& c, std::string_view, const auto& v) {
             std::vector<std::string> categories;
             for (const auto& item : v) {
                 // A single value may itself be a comma-separated list.
                 std::stringstream parts(item);
                 std::string part;
                 while (std::getline(parts, part, ',')) {
                     part = unquote(part);
                     if (!part.empty()) categories.push_back(part);
                 }
             }
             c.allowed_note_categories = std::move(categories);
         }},
        {"backend", [](PipelineConfig& c, std::string_view k, const auto& v) {
             const std::string s = to_lower(trim(single(k, v)));
             if (s == "scripted") c.backend = BackendKind::Scripted;
             else if (s == "http") c.backend = BackendKind::Http;
             else throw InputError("config 'backend' must be 'scripted' or 'http', got '" + s + "'");
         }},
        {"generator_fixture", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.generator_fixture = unquote(single(k, v));
         }},
        {"classifier_fixture", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.classifier_fixture = unquote(single(k, v));
         }},
        {"qa_fixture", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.qa_fixture = unquote(single(k, v));
         }},
        {"generator_url", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.generator_url = unquote(single(k, v));
         }},
        {"classifier_url", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.classifier_url = unquote(single(k, v));
         }},
        {"qa_url", [](PipelineConfig& c, std::string_view k, const auto& v) { c.qa_url = unquote(single(k, v)); }},
        {"api_key", [](PipelineConfig& c, std::string_view k, const auto& v) { c.api_key = unquote(single(k, v)); }},
        {"embedder", [](PipelineConfig& c, std::string_view k, const auto& v) {
             const std::string s = to_lower(trim(single(k, v)));
             if (s != "mock" && s != "http") {
                 throw InputError("config 'embedder' must be 'mock' or 'http', got '" + s + "'");
             }
             c.embedder = s;
         }},
        {"embedding_dim", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.embedding_dim = to_count(k, single(k, v));
         }},
        {"embedding_url", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.embedding_url = unquote(single(k, v));
         }},
        {"embedding_model", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.embedding_model = unquote(single(k, v));
         }},
        {"max_in_flight", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.max_in_flight = to_count(k, single(k, v));
         }},
        {"scoring_method", [](PipelineConfig& c, std::string_view k, const auto& v) {
             const auto method = scoring::parse_method(trim(single(k, v)));
             if (!method) throw InputError("config 'scoring_method': unknown method '" + single(k, v) + "'");
             c.scoring_method = *method;
         }},
        {"deterministic", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.deterministic = to_bool(k, single(k, v));
         }},
        {"max_marginalized", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.max_marginalized = to_count(k, single(k, v));
         }},
        {"generation_retries", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.generation_retries = static_cast<int>(to_count(k, single(k, v)));
         }},
        {"qa_retries", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.qa_retries = static_cast<int>(to_count(k, single(k, v)));
         }},
        {"max_response_chars", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.max_response_chars = to_count(k, single(k, v));
         }},
        {"timeout_ms", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.timeout_ms = static_cast<long>(to_count(k, single(k, v)));
         }},
        {"prompt_template", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.prompt_template = unquote(single(k, v));
         }},
        {"cost.input_speed", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.cost_input_speed = to_double(k, single(k, v));
         }},
        {"cost.output_speed", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.cost_output_speed = to_double(k, single(k, v));
         }},
        {"cost.hourly_rate", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.cost_hourly_rate = to_double(k, single(k, v));
         }},
        {"cost.price_in_per_1k", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.cost_price_in_per_1k = to_double(k, single(k, v));
         }},
        {"cost.price_out_per_1k", [](PipelineConfig& c, std::string_view k, const auto& v) {
             c.cost_price_out_per_1k = to_double(k, single(k, v));
         }},
    };
    return table;
}

bool is_path_key(std::string_view key) {
    return key == "generator_fixture" || key == "classifier_fixture" || key == "qa_fixture" ||
           key == "prompt_template";
}

}  // namespace

void PipelineConfig::set(std::string_view key, const std::vector<std::string>& values) {
    for (const auto& [name, setter] : setters()) {
        if (name == key) {
            setter(*this, key, values);
            return;
        }
    }
    throw InputError("unknown config key '" + std::string(key) + "'");
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
    set(key, std::vector<std::string>{std::string(value)});
}

void PipelineConfig::validate() const {
    thresholds.validate();
    tier_weights.validate();
    if (retrieval_k < 1) throw InputError("retrieval_k must be at least 1");
    if (chunk_max_tokens < 1) throw InputError("chunk_max_tokens must be at least 1");
    if (allowed_note_categories.empty()) throw InputError("allowed_note_categories must not be empty");
    if (max_in_flight < 1) throw InputError("max_in_flight must be at least 1");
    if (embedding_dim < 1) throw InputError("embedding_dim must be at least 1");
    if (max_marginalized > logic::kMaxMarginalizedCeiling) {
        throw InputError("max_marginalized may not exceed " + std::to_string(logic::kMaxMarginalizedCeiling));
    }
    if (max_response_chars < 1) throw InputError("max_response_chars must be at least 1");
    if (timeout_ms < 1) throw InputError("timeout_ms must be at least 1");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& entry : setters()) out.push_back(entry.first);
        return out;
    }();
    return keys;
}

std::string env_var_for(std::string_view key) {
    std::string name = "TRIALMATCH_";
    for (const char c : key) {
        name += (c == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return name;
}

std::optional<std::string> process_env(const std::string& name) {
    if (const char* value = std::getenv(name.c_str())) return std::string(value);
    return std::nullopt;
}

PipelineConfig load_config(const std::string& config_path, const EnvLookup& env,
                           const std::vector<std::string>& overrides) {
    PipelineConfig config;

    if (!config_path.empty()) {
        std::istringstream input(read_file(config_path));
        const fs::path base = fs::path(config_path).parent_path();
        std::vector<CLI::ConfigItem> items;
        try {
            items = CLI::ConfigINI().from_config(input);
        } catch (const CLI::Error& e) {
            throw InputError("config '" + config_path + "': " + e.what());
        }
        for (const auto& item : items) {
            if (item.name == "++" || item.name == "--") continue;  // section markers
            std::string key;
            for (const auto& parent : item.parents) {
                if (parent != "default") key += parent + ".";
            }
            key += item.name;
            std::vector<std::string> values = item.inputs;
            if (is_path_key(key) && values.size() == 1) {
                const fs::path p(unquote(values.front()));
                if (!p.empty() && p.is_relative()) values.front() = (base / p).lexically_normal().string();
            }
            try {
                config.set(key, values);
            } catch (const InputError& e) {
                throw InputError("config '" + config_path + "': " + e.what());
            }
        }
    }

    if (env) {
        for (const auto& key : config_keys()) {
            if (auto value = env(env_var_for(key))) config.set(key, *value);
        }
    }

    for (const auto& assignment : overrides) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) {
            throw InputError("override '" + assignment + "' must look like key=value");
        }
        config.set(trim(std::string_view(assignment).substr(0, eq)),
                   std::string_view(assignment).substr(eq + 1));
    }

    config.validate();
    return config;
}

std::string config_snapshot_json(const PipelineConfig& config) {
    ordered_json doc;
    doc["thresholds"] = {{"met", config.thresholds.met}, {"notmet", config.thresholds.not_met}};
    doc["tier_weights"] = {{"w1", config.tier_weights.w1},
                           {"w2", config.tier_weights.w2},
                           {"w3", config.tier_weights.w3},
                           {"w4", config.tier_weights.w4}};
    doc["retrieval_k"] = config.retrieval_k;
    doc["chunk_max_tokens"] = config.chunk_max_tokens;
    doc["allowed_note_categories"] = config.allowed_note_categories;
    doc["backend"] = config.backend == BackendKind::Scripted ? "scripted" : "http";
    doc["embedder"] = config.embedder;
    if (config.embedder == "mock") {
        doc["embedding_dim"] = config.embedding_dim;
    } else {
        doc["embedding_model"] = config.embedding_model;
    }
    doc["scoring_method"] = scoring::to_string(config.scoring_method);
    doc["deterministic"] = config.deterministic;
    doc["max_marginalized"] = config.max_marginalized;
    doc["generation_retries"] = config.generation_retries;
    doc["qa_retries"] = config.qa_retries;
    doc["max_response_chars"] = config.max_response_chars;
    return doc.dump(2);
}

// ============================================================================
// Backends
// ============================================================================

namespace {

http::Endpoint endpoint_for(const PipelineConfig& config, const std::string& url, std::string_view key) {
    if (url.empty()) throw InputError("config '" + std::string(key) + "' is required for the http backend");
    http::Endpoint endpoint;
    endpoint.url = url;
    endpoint.timeout = std::chrono::milliseconds(config.timeout_ms);
    endpoint.api_key = config.api_key;
    return endpoint;
}

std::map<std::string, std::string, std::less<>> load_classifier_overrides(const std::string& path) {
    std::map<std::string, std::string, std::less<>> overrides;
    if (path.empty()) return overrides;
    try {
        const json doc = json::parse(read_file(path));
        for (const auto& [text, name] : doc.items()) overrides.emplace(text, name.get<std::string>());
    } catch (const json::exception& e) {
        throw InputError("classifier fixture '" + path + "': " + e.what());
    }
    return overrides;
}

}  // namespace

std::unique_ptr<composer::QuestionGenerator> make_generator(const PipelineConfig& config) {
    if (config.backend == BackendKind::Http) {
        return std::make_unique<http::HttpQuestionGenerator>(endpoint_for(config, config.generator_url, "generator_url"));
    }
    if (config.generator_fixture.empty()) throw InputError("config 'generator_fixture' is required for the scripted backend");
    return std::make_unique<composer::ScriptedQuestionGenerator>(
        composer::ScriptedQuestionGenerator::from_file(config.generator_fixture));
}

std::unique_ptr<composer::ConceptClassifier> make_classifier(const PipelineConfig& config) {
    if (config.backend == BackendKind::Http && !config.classifier_url.empty()) {
        return std::make_unique<http::HttpConceptClassifier>(
            endpoint_for(config, config.classifier_url, "classifier_url"));
    }
    // Without a classifier endpoint the generator's own concept suggestion is used.
    return std::make_unique<composer::ScriptedConceptClassifier>(load_classifier_overrides(config.classifier_fixture));
}

std::unique_ptr<retrieval::EmbeddingProvider> make_embedder(const PipelineConfig& config) {
    if (config.embedder == "http") {
        return std::make_unique<http::HttpEmbeddingProvider>(
            endpoint_for(config, config.embedding_url, "embedding_url"), config.embedding_model);
    }
    return std::make_unique<retrieval::MockEmbedder>(config.embedding_dim);
}

std::unique_ptr<qa::QaBackend> make_qa_backend(const PipelineConfig& config) {
    if (config.backend == BackendKind::Http) {
        auto endpoint = endpoint_for(config, config.qa_url, "qa_url");
        // answer_question already retries; the transport layer makes one attempt per call.
        endpoint.retries = 0;
        return std::make_unique<http::HttpQaBackend>(std::move(endpoint));
    }
    if (config.qa_fixture.empty()) throw InputError("config 'qa_fixture' is required for the scripted backend");
    return qa::ScriptedQaBackend::from_file(config.qa_fixture);
}

// ============================================================================
// Workspace helpers
// ============================================================================

namespace {

void write_text(const fs::path& path, std::string_view contents) {
    fs::create_directories(path.parent_path());
    write_file_atomic(path.string(), contents);
}

std::string now_iso8601() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
}

bool is_safe_id(std::string_view id) {
    static const std::regex pattern("^[A-Za-z0-9][A-Za-z0-9._-]*$");
    return std::regex_match(id.begin(), id.end(), pattern);
}

ordered_json read_manifest(const fs::path& run_dir) {
    const fs::path path = run_dir / "manifest.json";
    if (!fs::exists(path)) throw InputError("run directory " + run_dir.string() + " has no manifest.json");
    try {
        return ordered_json::parse(read_file(path.string()));
    } catch (const json::exception& e) {
        throw InputError("manifest " + path.string() + ": " + e.what());
    }
}

/// Records a derived artifact in the run's manifest (names kept sorted).
void register_artifact(const fs::path& run_dir, const std::string& name) {
    ordered_json manifest = read_manifest(run_dir);
    std::vector<std::string> artifacts = manifest.value("artifacts", std::vector<std::string>{});
    if (std::find(artifacts.begin(), artifacts.end(), name) != artifacts.end()) return;
    artifacts.push_back(name);
    std::sort(artifacts.begin(), artifacts.end());
    manifest["artifacts"] = artifacts;
    write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

std::string Workspace::resolve_run(std::string_view run_id) const {
    std::string id(run_id);
    if (id.empty()) {
        if (!fs::exists(latest_run_file())) {
            throw InputError("no run id given and no previous match run under " + runs_dir().string());
        }
        id = trim(read_file(latest_run_file().string()));
    }
    if (!is_safe_id(id) || !fs::is_directory(run_dir(id))) throw InputError("unknown run id '" + id + "'");
    return id;
}

std::vector<composer::TrialSpec> load_trial_specs(const Workspace& workspace) {
    std::vector<composer::TrialSpec> specs;
    if (!fs::is_directory(workspace.trials_dir())) return specs;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(workspace.trials_dir())) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        try {
            specs.push_back(composer::trial_spec_from_json(read_file(file.string())));
        } catch (const InputError& e) {
            throw InputError(file.string() + ": " + e.what());
        }
    }
    std::sort(specs.begin(), specs.end(),
              [](const auto& a, const auto& b) { return a.trial_id < b.trial_id; });
    return specs;
}

notes::ChunkStore load_chunk_store(const Workspace& workspace) {
    if (!fs::exists(workspace.headers_file()) || !fs::exists(workspace.chunks_file())) {
        throw InputError("no ingested corpus under " + workspace.corpus_dir().string() + "; run ingest first");
    }
    return notes::ChunkStore(notes::parse_headers_jsonl(read_file(workspace.headers_file().string())),
                             notes::parse_chunks_jsonl(read_file(workspace.chunks_file().string())));
}

// ============================================================================
// compose / ingest / index
// ============================================================================

ComposeResult run_compose(const PipelineConfig& config, const std::string& trials_file,
                          const fs::path& out_dir, composer::QuestionGenerator& generator,
                          composer::ConceptClassifier& classifier) {
    config.validate();
    const auto raws = composer::parse_raw_trials_jsonl(read_file(trials_file));

    std::set<std::string> seen;
    for (const auto& raw : raws) {
        if (!is_safe_id(raw.trial_id)) throw InputError("trial id '" + raw.trial_id + "' is not usable as a file name");
        if (!seen.insert(raw.trial_id).second) throw InputError("duplicate trial id '" + raw.trial_id + "'");
    }

    composer::ComposeOptions options;
    options.generation_retries = config.generation_retries;
    options.max_parallel = config.max_in_flight;

    std::vector<composer::TrialSpec> specs;
    ComposeResult result;
    for (const auto& raw : raws) {
        specs.push_back(composer::compose_trial(raw, generator, classifier, options));
        for (const auto& c : specs.back().criteria) {
            if (c.generation_failure) ++result.flagged_criteria;
        }
        spdlog::info("composed {}: {} questions, {} criteria", raw.trial_id, specs.back().questions.size(),
                     specs.back().criteria.size());
    }
    for (const auto& spec : specs) {
        const fs::path path = out_dir / (spec.trial_id + ".json");
        write_text(path, composer::trial_spec_to_json(spec));
        result.written.push_back(path);
    }
    return result;
}

IngestResult run_ingest(const PipelineConfig& config, const Workspace& workspace,
                        const std::string& notes_file, const std::string& headers_file) {
    config.validate();
    auto headers = notes::load_headers_jsonl(headers_file);
    const auto loaded = notes::load_notes_jsonl(notes_file);
    for (const auto& skipped : loaded.skipped) spdlog::warn("skipped note ({})", skipped);

    std::sort(headers.begin(), headers.end(),
              [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
    std::map<std::string, std::vector<notes::ClinicalNote>, std::less<>> by_patient;
    for (const auto& h : headers) by_patient[h.patient_id];
    for (const auto& note : loaded.notes) {
        auto it = by_patient.find(note.patient_id);
        if (it == by_patient.end()) {
            throw InputError("note '" + note.note_id + "' belongs to patient '" + note.patient_id +
                             "', who has no header");
        }
        it->second.push_back(note);
    }

    IngestResult result;
    result.patients = headers.size();
    result.notes_read = loaded.notes.size() + loaded.skipped.size();
    result.notes_skipped = loaded.skipped.size();

    std::vector<notes::Chunk> chunks;
    for (const auto& header : headers) {
        const auto kept = notes::filter_notes(by_patient[header.patient_id], header, config.allowed_note_categories);
        result.notes_kept += kept.size();
        for (const auto& note : kept) {
            auto note_chunks = notes::chunk_note(note, config.chunk_max_tokens);
            chunks.insert(chunks.end(), std::make_move_iterator(note_chunks.begin()),
                          std::make_move_iterator(note_chunks.end()));
        }
    }
    result.chunks = chunks.size();

    // Validates id uniqueness before anything is written.
    const notes::ChunkStore store(headers, chunks);

    write_text(workspace.headers_file(), notes::headers_to_jsonl(headers));
    write_text(workspace.chunks_file(), notes::chunks_to_jsonl(chunks));

    ordered_json summary;
    summary["corpus_hash"] = store.corpus_hash();
    summary["patients"] = result.patients;
    summary["notes_read"] = result.notes_read;
    summary["notes_kept"] = result.notes_kept;
    summary["notes_skipped"] = loaded.skipped;
    summary["chunks"] = result.chunks;
    summary["chunk_max_tokens"] = config.chunk_max_tokens;
    summary["allowed_note_categories"] = config.allowed_note_categories;
    write_text(workspace.corpus_dir() / "ingest.json", summary.dump(2) + "\n");
    return result;
}

IndexResult run_index(const PipelineConfig& config, const Workspace& workspace,
                      retrieval::EmbeddingProvider& provider) {
    config.validate();
    const auto store = load_chunk_store(workspace);
    if (store.chunks().empty()) throw InputError("the ingested corpus has no chunks to index");
    const auto index = retrieval::index_chunks(store.chunks(), provider);
    const std::string hash = store.corpus_hash();
    IndexResult result;
    result.file = workspace.index_dir() / retrieval::index_file_name(provider.tag(), hash);
    result.entries = index.size();
    write_text(result.file, retrieval::index_to_json(index, hash));
    return result;
}

// ============================================================================
// match
// ============================================================================

namespace {

struct VerdictRow {
    std::string patient_id;
    std::string trial_id;
    std::string criterion_id;
    std::string kind;
    int tier = 4;
    logic::CriterionEvaluation evaluation;
    std::vector<std::string> unknown_questions;
};

std::string verdicts_to_jsonl(const std::vector<VerdictRow>& rows, std::string_view run_id) {
    std::string out;
    for (const auto& row : rows) {
        ordered_json doc;
        doc["run_id"] = run_id;
        doc["patient_id"] = row.patient_id;
        doc["trial_id"] = row.trial_id;
        doc["criterion_id"] = row.criterion_id;
        doc["kind"] = row.kind;
        doc["tier"] = row.tier;
        doc["probability"] = row.evaluation.probability;
        doc["verdict"] = logic::to_string(row.evaluation.verdict);
        doc["num_marginalized"] = row.evaluation.num_marginalized;
        doc["fallback_reason"] = row.evaluation.fallback_reason;
        doc["unknown_questions"] = row.unknown_questions;
        out += doc.dump();
        out += '\n';
    }
    return out;
}

std::vector<VerdictRow> parse_verdicts_jsonl(std::string_view contents) {
    std::vector<VerdictRow> rows;
    std::istringstream lines{std::string(contents)};
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            VerdictRow row;
            row.patient_id = doc.at("patient_id").get<std::string>();
            row.trial_id = doc.at("trial_id").get<std::string>();
            row.criterion_id = doc.at("criterion_id").get<std::string>();
            row.kind = doc.at("kind").get<std::string>();
            row.tier = doc.at("tier").get<int>();
            row.evaluation.criterion_id = row.criterion_id;
            row.evaluation.probability = doc.at("probability").get<double>();
            const auto verdict = logic::parse_verdict(doc.at("verdict").get<std::string>());
            if (!verdict) throw InputError("unknown verdict");
            row.evaluation.verdict = *verdict;
            row.evaluation.num_marginalized = doc.at("num_marginalized").get<std::size_t>();
            row.evaluation.fallback_reason = doc.value("fallback_reason", "");
            row.unknown_questions = doc.value("unknown_questions", std::vector<std::string>{});
            rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            throw InputError("verdicts line " + std::to_string(number) + ": " + e.what());
        }
    }
    return rows;
}

std::vector<std::string> select_ids(const std::vector<std::string>& requested,
                                    const std::vector<std::string>& available, std::string_view what) {
    if (requested.empty()) return available;
    const std::set<std::string> known(available.begin(), available.end());
    std::set<std::string> chosen;
    for (const auto& id : requested) {
        if (!known.count(id)) throw InputError("unknown " + std::string(what) + " id '" + id + "'");
        chosen.insert(id);
    }
    return {chosen.begin(), chosen.end()};
}

qa::AnswerOptions answer_options(const PipelineConfig& config) {
    qa::AnswerOptions options;
    options.backend.temperature = 0.0;
    options.backend.max_response_chars = config.max_response_chars;
    options.backend.timeout = std::chrono::milliseconds(config.timeout_ms);
    options.backend.retry_count = config.qa_retries;
    options.retrieval_k = config.retrieval_k;
    options.prompt_template = config.prompt_template.empty() ? qa::PromptTemplate::builtin()
                                                             : qa::PromptTemplate::from_file(config.prompt_template);
    return options;
}

}  // namespace

MatchResult run_match(const PipelineConfig& config, const Workspace& workspace, const MatchRequest& request,
                      qa::QaBackend& backend, retrieval::EmbeddingProvider& provider) {
    config.validate();
    const std::string started_at = config.deterministic ? "" : now_iso8601();

    const auto store = load_chunk_store(workspace);
    const auto all_specs = load_trial_specs(workspace);
    if (store.headers().empty()) throw InputError("the ingested corpus has no patients");
    if (all_specs.empty()) throw InputError("no trial specs under " + workspace.trials_dir().string() + "; run compose first");

    std::vector<std::string> patient_pool;
    for (const auto& h : store.headers()) patient_pool.push_back(h.patient_id);
    std::sort(patient_pool.begin(), patient_pool.end());
    std::vector<std::string> trial_pool;
    for (const auto& s : all_specs) trial_pool.push_back(s.trial_id);

    const auto patients = select_ids(request.patient_ids, patient_pool, "patient");
    const auto trial_ids = select_ids(request.trial_ids, trial_pool, "trial");
    std::vector<const composer::TrialSpec*> trials;
    for (const auto& id : trial_ids) {
        trials.push_back(&*std::find_if(all_specs.begin(), all_specs.end(),
                                        [&](const auto& s) { return s.trial_id == id; }));
    }

    const std::string corpus_hash = store.corpus_hash();
    const fs::path index_path = workspace.index_dir() / retrieval::index_file_name(provider.tag(), corpus_hash);
    if (!fs::exists(index_path)) {
        throw InputError("no index for embedder '" + provider.tag() + "' and the current corpus; run index first");
    }
    const std::string index_text = read_file(index_path.string());
    const auto index = retrieval::index_from_json(index_text, corpus_hash);
    const auto options = answer_options(config);

    // ---- inputs and run id --------------------------------------------------
    ordered_json inputs;
    inputs["headers_sha256"] = file_sha256(workspace.headers_file().string());
    inputs["chunks_sha256"] = file_sha256(workspace.chunks_file().string());
    inputs["corpus_hash"] = corpus_hash;
    inputs["index"] = {{"file", index_path.filename().string()}, {"sha256", sha256_hex(index_text)}};
    ordered_json trial_hashes = ordered_json::object();
    for (const auto* spec : trials) trial_hashes[spec->trial_id] = sha256_hex(composer::trial_spec_to_json(*spec));
    inputs["trials"] = trial_hashes;
    if (config.backend == BackendKind::Scripted) inputs["qa_fixture_sha256"] = file_sha256(config.qa_fixture);
    inputs["prompt_template_sha256"] = sha256_hex(options.prompt_template.body);

    const std::string snapshot = config_snapshot_json(config);
    std::string run_id = request.run_id;
    if (run_id.empty()) {
        ordered_json key;
        key["config"] = json::parse(snapshot);
        key["inputs"] = inputs;
        key["prompt_version"] = options.prompt_template.version;
        key["qa_backend"] = backend.tag();
        key["embedder"] = provider.tag();
        key["patients"] = patients;
        key["trials"] = trial_ids;
        run_id = "run-" + sha256_hex(key.dump()).substr(0, 12);
    } else if (!is_safe_id(run_id)) {
        throw InputError("run id '" + run_id + "' is not usable as a directory name");
    }
    const fs::path run_dir = workspace.run_dir(run_id);

    // ---- questions ------------------------------------------------------------
    struct Ask {
        std::string patient_id;
        const logic::Question* question;
        std::optional<qa::QaRecord> record;
        std::string error;
    };
    std::vector<Ask> asks;
    struct PairSpan {
        std::string patient_id;
        const composer::TrialSpec* trial;
        std::size_t begin, end;
    };
    std::vector<PairSpan> pairs;
    for (const auto& patient : patients) {
        for (const auto* trial : trials) {
            PairSpan span{patient, trial, asks.size(), 0};
            for (const auto& q : trial->questions) asks.push_back({patient, &q, std::nullopt, {}});
            span.end = asks.size();
            pairs.push_back(span);
        }
    }

    // Answers recorded by an earlier attempt of the same run are kept.
    std::map<std::pair<std::string, std::string>, qa::QaRecord> previous;
    const fs::path answers_path = run_dir / "answers.jsonl";
    if (fs::exists(answers_path)) {
        for (auto& r : qa::parse_records_jsonl(read_file(answers_path.string()))) {
            previous.emplace(std::make_pair(r.patient_id, r.question_id), std::move(r));
        }
    }

    MatchResult result;
    result.run_id = run_id;
    result.pairs = pairs.size();

    std::vector<qa::QaTask> tasks;
    std::vector<std::size_t> task_slot;
    for (std::size_t i = 0; i < asks.size(); ++i) {
        auto it = previous.find({asks[i].patient_id, asks[i].question->id});
        if (it != previous.end()) {
            asks[i].record = it->second;
            ++result.questions_reused;
        } else {
            tasks.push_back({asks[i].patient_id, asks[i].question});
            task_slot.push_back(i);
        }
    }
    result.questions_asked = tasks.size();
    spdlog::info("run {}: {} pairs, {} questions to ask, {} reused", run_id, pairs.size(), tasks.size(),
                 result.questions_reused);

    const qa::QaContext context{store, index, provider};
    auto outcomes = qa::answer_all(tasks, context, backend, options, config.max_in_flight);
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
        auto& ask = asks[task_slot[t]];
        ask.record = std::move(outcomes[t].record);
        ask.error = std::move(outcomes[t].transport_error);
    }

    // ---- evaluation and scoring ---------------------------------------------
    const logic::EvaluationOptions eval_options{config.thresholds, config.max_marginalized};
    std::vector<VerdictRow> verdicts;
    std::vector<scoring::MatchScore> scores;
    for (const auto& pair : pairs) {
        logic::AnswerMap answers;
        std::string error;
        for (std::size_t i = pair.begin; i < pair.end; ++i) {
            if (asks[i].record) {
                answers.emplace(asks[i].question->id, asks[i].record->answer);
            } else if (error.empty()) {
                error = asks[i].question->id + ": " + asks[i].error;
            }
        }
        if (!error.empty()) {
            spdlog::warn("pair {} x {} incomplete: {}", pair.patient_id, pair.trial->trial_id, error);
            result.incomplete.push_back({pair.patient_id, pair.trial->trial_id, error});
            continue;
        }

        std::vector<scoring::CriterionResult> results;
        for (const auto& criterion : pair.trial->criteria) {
            VerdictRow row;
            row.patient_id = pair.patient_id;
            row.trial_id = pair.trial->trial_id;
            row.criterion_id = criterion.id;
            row.kind = std::string(logic::to_string(criterion.kind));
            row.tier = criterion.tier;
            row.evaluation = logic::evaluate_criterion(criterion, answers, eval_options);
            for (const auto& qid : criterion.logic.referenced_questions()) {
                const auto it = answers.find(qid);
                if (it != answers.end() && it->second == logic::AnswerValue::NA) row.unknown_questions.push_back(qid);
            }
            std::sort(row.unknown_questions.begin(), row.unknown_questions.end());
            results.push_back({criterion.id, criterion.tier, scoring::encode(row.evaluation.verdict)});
            verdicts.push_back(std::move(row));
        }
        for (const auto method : scoring::kAllMethods) {
            // A trial without criteria gives no evidence of a match.
            const double value = results.empty() ? 0.0 : scoring::score(method, results, config.tier_weights);
            scores.push_back({pair.patient_id, pair.trial->trial_id, method, value});
        }
    }

    // ---- artifacts --------------------------------------------------------------
    std::vector<qa::QaRecord> records;
    for (const auto& ask : asks) {
        if (ask.record) records.push_back(*ask.record);
    }
    write_text(answers_path, qa::records_to_jsonl(records, run_id));
    write_text(run_dir / "verdicts.jsonl", verdicts_to_jsonl(verdicts, run_id));
    write_text(run_dir / "scores.csv", scoring::scores_to_csv(scores));

    ordered_json manifest;
    manifest["run_id"] = run_id;
    manifest["config"] = ordered_json::parse(snapshot);
    manifest["inputs"] = inputs;
    manifest["prompt_version"] = options.prompt_template.version;
    manifest["backends"] = {{"qa", backend.tag()}, {"embedder", provider.tag()}};
    manifest["patients"] = patients;
    manifest["trials"] = trial_ids;
    ordered_json incomplete = ordered_json::array();
    for (const auto& p : result.incomplete) {
        incomplete.push_back({{"patient_id", p.patient_id}, {"trial_id", p.trial_id}, {"error", p.error}});
    }
    manifest["pairs"] = {{"total", pairs.size()},
                         {"complete", pairs.size() - result.incomplete.size()},
                         {"incomplete", incomplete}};
    manifest["artifacts"] = {"answers.jsonl", "scores.csv", "verdicts.jsonl"};
    manifest["timestamps"] = ordered_json::object();
    if (!config.deterministic) {
        manifest["timestamps"]["started_at"] = started_at;
        manifest["timestamps"]["finished_at"] = now_iso8601();
    }
    write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");
    write_text(workspace.latest_run_file(), run_id + "\n");
    return result;
}

// ============================================================================
// rank / evaluate
// ============================================================================

GroundTruth load_ground_truth(const std::string& path) {
    GroundTruth truth;
    std::istringstream lines(read_file(path));
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (trim(line).empty()) continue;
        try {
            const json doc = json::parse(line);
            const auto patient = doc.at("patient_id").get<std::string>();
            const auto trial = doc.at("trial_id").get<std::string>();
            truth.trials_of_patient[patient].insert(trial);
            truth.patients_of_trial[trial].insert(patient);
        } catch (const json::exception& e) {
            throw InputError("ground truth line " + std::to_string(number) + ": " + e.what());
        }
    }
    return truth;
}

RankingMetrics compute_ranking_metrics(const std::vector<scoring::Ranking>& rankings,
                                       scoring::Direction direction, const GroundTruth& truth, std::size_t k) {
    const auto& relevant_of = direction == scoring::Direction::TrialsForPatient ? truth.trials_of_patient
                                                                                 : truth.patients_of_trial;
    RankingMetrics metrics;
    metrics.k = k;
    std::vector<scoring::Ranking> evaluable;
    std::map<std::string, std::string, std::less<>> single_truth;
    double ndcg_sum = 0.0;
    for (const auto& ranking : rankings) {
        const auto it = relevant_of.find(ranking.subject_id);
        const bool has_truth = it != relevant_of.end() && !it->second.empty();
        const bool all_ranked =
            has_truth && std::all_of(it->second.begin(), it->second.end(),
                                     [&](const std::string& id) { return ranking.rank_of(id).has_value(); });
        if (!all_ranked) {
            metrics.skipped_subjects.push_back(ranking.subject_id);
            continue;
        }
        if (direction == scoring::Direction::TrialsForPatient) {
            if (it->second.size() != 1) {
                throw InputError("patient '" + ranking.subject_id + "' has more than one ground-truth trial");
            }
            single_truth.emplace(ranking.subject_id, *it->second.begin());
        }
        ndcg_sum += scoring::ndcg_binary(ranking, it->second);
        evaluable.push_back(ranking);
    }
    metrics.evaluated_subjects = evaluable.size();
    if (!evaluable.empty()) {
        metrics.mean_ndcg = ndcg_sum / static_cast<double>(evaluable.size());
        if (direction == scoring::Direction::TrialsForPatient) {
            metrics.hit_rate = scoring::topk_hit_rate(evaluable, single_truth, k);
        }
    }
    return metrics;
}

namespace {

std::vector<scoring::MatchScore> load_scores(const fs::path& run_dir) {
    const fs::path path = run_dir / "scores.csv";
    if (!fs::exists(path)) throw InputError("run has no scores.csv; run match first");
    return scoring::parse_scores_csv(read_file(path.string()));
}

ordered_json metrics_to_json(const RankingMetrics& m) {
    ordered_json doc;
    doc["k"] = m.k;
    doc["hit_rate"] = m.hit_rate ? ordered_json(*m.hit_rate) : ordered_json(nullptr);
    doc["mean_ndcg"] = m.mean_ndcg ? ordered_json(*m.mean_ndcg) : ordered_json(nullptr);
    doc["evaluated_subjects"] = m.evaluated_subjects;
    doc["skipped_subjects"] = m.skipped_subjects;
    return doc;
}

}  // namespace

RankResult run_rank(const PipelineConfig& config, const Workspace& workspace, const RankRequest& request) {
    config.validate();
    if (request.k < 1) throw InputError("k must be at least 1");
    const std::string run_id = workspace.resolve_run(request.run_id);
    const fs::path run_dir = workspace.run_dir(run_id);
    const auto scores = load_scores(run_dir);

    RankResult result;
    result.rankings = scoring::rank_all(scores, request.method, request.direction);
    if (result.rankings.empty()) {
        throw InputError(std::string("run ") + run_id + " has no " + std::string(scoring::to_string(request.method)) +
                         " scores to rank");
    }
    if (!request.ground_truth_file.empty()) {
        result.metrics = compute_ranking_metrics(result.rankings, request.direction,
                                                 load_ground_truth(request.ground_truth_file), request.k);
    }

    ordered_json doc;
    doc["run_id"] = run_id;
    doc["direction"] = scoring::to_string(request.direction);
    doc["method"] = scoring::to_string(request.method);
    auto& rankings = doc["rankings"] = ordered_json::array();
    for (const auto& ranking : result.rankings) {
        ordered_json entry;
        entry["subject_id"] = ranking.subject_id;
        auto& candidates = entry["candidates"] = ordered_json::array();
        for (std::size_t i = 0; i < ranking.candidates.size(); ++i) {
            candidates.push_back({{"rank", i + 1},
                                  {"candidate_id", ranking.candidates[i].candidate_id},
                                  {"score", ranking.candidates[i].score}});
        }
        rankings.push_back(std::move(entry));
    }
    doc["metrics"] = result.metrics ? metrics_to_json(*result.metrics) : ordered_json(nullptr);

    const std::string name = "rankings-" + std::string(scoring::to_string(request.direction)) + "-" +
                             std::string(scoring::to_string(request.method)) + ".json";
    result.file = run_dir / name;
    write_text(result.file, doc.dump(2) + "\n");
    register_artifact(run_dir, name);
    return result;
}

namespace {

ordered_json stats_to_json(const scoring::VerdictStats& s) {
    ordered_json doc;
    doc["total"] = s.total;
    doc["met_pct"] = s.met_pct;
    doc["notmet_pct"] = s.notmet_pct;
    doc["na_pct"] = s.na_pct;
    return doc;
}

std::vector<VerdictRow> load_verdicts(const fs::path& run_dir) {
    const fs::path path = run_dir / "verdicts.jsonl";
    if (!fs::exists(path)) throw InputError("run has no verdicts.jsonl; run match first");
    return parse_verdicts_jsonl(read_file(path.string()));
}

}  // namespace

fs::path run_evaluate(const PipelineConfig& config, const Workspace& workspace, const std::string& run_id_arg,
                      const std::string& ground_truth_file, std::size_t k) {
    config.validate();
    const std::string run_id = workspace.resolve_run(run_id_arg);
    const fs::path run_dir = workspace.run_dir(run_id);
    const auto rows = load_verdicts(run_dir);
    if (rows.empty()) throw InputError("run " + run_id + " has no verdicts to evaluate");

    std::vector<logic::CriterionEvaluation> all;
    std::map<std::string, std::vector<logic::CriterionEvaluation>> by_trial;
    for (const auto& row : rows) {
        all.push_back(row.evaluation);
        by_trial[row.trial_id].push_back(row.evaluation);
    }

    ordered_json doc;
    doc["run_id"] = run_id;
    doc["verdict_stats"]["overall"] = stats_to_json(scoring::verdict_stats(all));
    for (const auto& [trial, evaluations] : by_trial) {
        doc["verdict_stats"]["by_trial"][trial] = stats_to_json(scoring::verdict_stats(evaluations));
    }

    auto& ranking_metrics = doc["ranking_metrics"] = ordered_json::array();
    if (!ground_truth_file.empty()) {
        const auto truth = load_ground_truth(ground_truth_file);
        const auto scores = load_scores(run_dir);
        for (const auto direction : {scoring::Direction::TrialsForPatient, scoring::Direction::PatientsForTrial}) {
            for (const auto method : scoring::kAllMethods) {
                const auto rankings = scoring::rank_all(scores, method, direction);
                ordered_json entry;
                entry["direction"] = scoring::to_string(direction);
                entry["method"] = scoring::to_string(method);
                entry["metrics"] = metrics_to_json(compute_ranking_metrics(rankings, direction, truth, k));
                ranking_metrics.push_back(std::move(entry));
            }
        }
    }

    const fs::path path = run_dir / "metrics.json";
    write_text(path, doc.dump(2) + "\n");
    register_artifact(run_dir, "metrics.json");
    return path;
}

// ============================================================================
// cost
// ============================================================================

cost::CostReport run_cost(const PipelineConfig& config, const Workspace& workspace, const std::string& run_id_arg,
                          const std::string& pricing) {
    config.validate();
    const std::string run_id = workspace.resolve_run(run_id_arg);
    const fs::path run_dir = workspace.run_dir(run_id);
    const ordered_json manifest = read_manifest(run_dir);
    const fs::path answers_path = run_dir / "answers.jsonl";
    if (!fs::exists(answers_path)) throw InputError("run has no answers.jsonl; run match first");

    cost::CostReport report;
    for (const auto& r : qa::parse_records_jsonl(read_file(answers_path.string()))) {
        report.usage.input_tokens += r.prompt_tokens;
        report.usage.output_tokens += r.response_tokens;
    }
    report.n_pairs = manifest.at("pairs").at("complete").get<long long>();
    report.method = pricing;

    if (pricing == "self-hosted") {
        const cost::ThroughputProfile profile{config.cost_input_speed, config.cost_output_speed,
                                              config.cost_hourly_rate};
        profile.validate();
        report.runtime_hours = cost::runtime_hours(report.usage, profile);
        report.total_cost = cost::self_hosted_cost(report.usage, profile);
        report.assumptions = fmt::format(
            "input {} tok/s, output {} tok/s, {} per hour; token counts are whitespace tokens of prompts and "
            "responses",
            config.cost_input_speed, config.cost_output_speed, config.cost_hourly_rate);
    } else if (pricing == "api") {
        report.total_cost = cost::api_cost(report.usage, config.cost_price_in_per_1k, config.cost_price_out_per_1k);
        report.assumptions =
            fmt::format("{} per 1k input tokens, {} per 1k output tokens; token counts are whitespace tokens",
                        config.cost_price_in_per_1k, config.cost_price_out_per_1k);
    } else {
        throw InputError("pricing must be 'self-hosted' or 'api', got '" + pricing + "'");
    }
    report.per_pair_cost = cost::per_pair_cost(report.total_cost, report.n_pairs);

    ordered_json doc;
    doc["run_id"] = run_id;
    const ordered_json body = ordered_json::parse(cost::report_to_json(report));
    for (const auto& [key, value] : body.items()) doc[key] = value;
    write_text(run_dir / "cost.json", doc.dump(2) + "\n");
    register_artifact(run_dir, "cost.json");
    return report;
}

// ============================================================================
// report
// ============================================================================

fs::path run_report(const PipelineConfig& config, const Workspace& workspace, const std::string& run_id_arg) {
    config.validate();
    const std::string run_id = workspace.resolve_run(run_id_arg);
    const fs::path run_dir = workspace.run_dir(run_id);
    const ordered_json manifest = read_manifest(run_dir);

    const fs::path answers_path = run_dir / "answers.jsonl";
    const auto records = fs::exists(answers_path) ? qa::parse_records_jsonl(read_file(answers_path.string()))
                                                  : std::vector<qa::QaRecord>{};
    const auto scores = fs::exists(run_dir / "scores.csv") ? load_scores(run_dir)
                                                           : std::vector<scoring::MatchScore>{};
    const auto verdicts = fs::exists(run_dir / "verdicts.jsonl") ? load_verdicts(run_dir)
                                                                 : std::vector<VerdictRow>{};
    if (records.empty() && scores.empty()) throw InputError("run " + run_id + " is empty; nothing to report");

    std::map<std::pair<std::string, std::string>, std::string> qa_fallbacks;
    for (const auto& r : records) {
        if (!r.failure_reason.empty()) qa_fallbacks[{r.patient_id, r.question_id}] = r.failure_reason;
    }
    std::map<std::string, std::string> question_text;
    for (const auto& spec : load_trial_specs(workspace)) {
        for (const auto& q : spec.questions) question_text[q.id] = q.text;
    }

    std::string md;
    auto line = [&md](const std::string& text = {}) {
        md += text;
        md += '\n';
    };

    line("# Match report: " + run_id);
    line();
    line("- Prompt template: " + manifest.value("prompt_version", std::string("?")));
    line("- QA backend: " + manifest["backends"].value("qa", std::string("?")));
    line("- Embedder: " + manifest["backends"].value("embedder", std::string("?")));
    line(fmt::format("- Pairs: {} total, {} complete", manifest["pairs"].value("total", 0),
                     manifest["pairs"].value("complete", 0)));
    line();

    // ---- scores ---------------------------------------------------------------
    line("## Pair scores");
    line();
    std::map<std::pair<std::string, std::string>, std::map<scoring::Method, double>> table;
    for (const auto& s : scores) table[{s.patient_id, s.trial_id}][s.method] = s.score;
    line("| Patient | Trial | Simple | IterativeTier | WeightedTier |");
    line("|---|---|---|---|---|");
    for (const auto& [pair, by_method] : table) {
        std::string row = "| " + pair.first + " | " + pair.second + " |";
        for (const auto method : scoring::kAllMethods) {
            const auto it = by_method.find(method);
            row += it == by_method.end() ? " - |" : fmt::format(" {:.4f} |", it->second);
        }
        line(row);
    }
    line();
    const auto& incomplete = manifest["pairs"]["incomplete"];
    if (!incomplete.empty()) {
        line("### Incomplete pairs");
        line();
        line("These pairs were not scored because the QA backend failed for at least one question.");
        line();
        for (const auto& p : incomplete) {
            line("- **INCOMPLETE** " + p.at("patient_id").get<std::string>() + " x " +
                 p.at("trial_id").get<std::string>() + ": " + p.at("error").get<std::string>());
        }
        line();
    }

    // ---- verdict statistics ---------------------------------------------------
    line("## Verdict statistics");
    line();
    if (verdicts.empty()) {
        line("No criteria were evaluated.");
    } else {
        std::vector<logic::CriterionEvaluation> all;
        std::map<std::string, std::vector<logic::CriterionEvaluation>> by_trial;
        for (const auto& v : verdicts) {
            all.push_back(v.evaluation);
            by_trial[v.trial_id].push_back(v.evaluation);
        }
        line("| Scope | Criteria | Met % | NotMet % | NA % |");
        line("|---|---|---|---|---|");
        auto stats_row = [&](const std::string& scope, const std::vector<logic::CriterionEvaluation>& evals) {
            const auto s = scoring::verdict_stats(evals);
            line(fmt::format("| {} | {} | {:.1f} | {:.1f} | {:.1f} |", scope, s.total, s.met_pct, s.notmet_pct,
                             s.na_pct));
        };
        stats_row("all", all);
        for (const auto& [trial, evals] : by_trial) stats_row(trial, evals);
        line();
        line("NA verdicts and their source:");
        line();
        for (const auto& v : verdicts) {
            if (v.evaluation.verdict != logic::Verdict::NA) continue;
            std::string source;
            if (!v.evaluation.fallback_reason.empty()) {
                source = "fallback: " + v.evaluation.fallback_reason;
            } else {
                source = "model answers, unknown: ";
                for (std::size_t i = 0; i < v.unknown_questions.size(); ++i) {
                    const auto& qid = v.unknown_questions[i];
                    source += (i ? ", " : "") + qid;
                    const auto it = qa_fallbacks.find({v.patient_id, qid});
                    if (it != qa_fallbacks.end()) source += " (QA fallback: " + it->second + ")";
                }
                if (v.unknown_questions.empty()) source += "(none)";
            }
            line(fmt::format("- {} x {} {} (p = {:.4f}): {}", v.patient_id, v.trial_id, v.criterion_id,
                             v.evaluation.probability, source));
        }
    }
    line();

    // ---- NA rate per question --------------------------------------------------
    line("## NA rate per question");
    line();
    std::map<std::string, std::pair<std::size_t, std::size_t>> na_counts;  // asked, NA
    for (const auto& r : records) {
        auto& counts = na_counts[r.question_id];
        ++counts.first;
        if (r.answer == logic::AnswerValue::NA) ++counts.second;
    }
    line("| Question | Asked | NA | NA % | Text |");
    line("|---|---|---|---|---|");
    for (const auto& [qid, counts] : na_counts) {
        line(fmt::format("| {} | {} | {} | {:.1f} | {} |", qid, counts.first, counts.second,
                         100.0 * static_cast<double>(counts.second) / static_cast<double>(counts.first),
                         question_text.count(qid) ? question_text[qid] : std::string("?")));
    }
    line();

    // ---- citations -------------------------------------------------------------
    line("## Answers and citations");
    line();
    for (const auto& r : records) {
        std::string cites;
        for (std::size_t i = 0; i < r.citations.size(); ++i) cites += (i ? ", " : "") + r.citations[i];
        std::string entry = fmt::format("- {} / {}: {} (confidence {})", r.patient_id, r.question_id,
                                        logic::to_string(r.answer), r.confidence);
        entry += cites.empty() ? "; no citations" : "; cites " + cites;
        if (!r.failure_reason.empty()) entry += "; fallback: " + r.failure_reason;
        line(entry);
    }

    const fs::path path = run_dir / "report.md";
    write_text(path, md);
    register_artifact(run_dir, "report.md");
    return path;
}

}  // namespace trialmatch::app
