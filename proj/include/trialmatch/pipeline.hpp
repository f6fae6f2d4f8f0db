/**
 * @file pipeline.hpp
 * @brief Configuration, on-disk workspace and the stages driven by the CLI.
 *
 * Stages communicate only through files under a work directory:
 *
 *   trials/<trial_id>.json         compose
 *   corpus/headers.jsonl           ingest
 *   corpus/chunks.jsonl            ingest
 *   index/index-<tag>-<hash>.json  index
 *   runs/<run_id>/...              match, rank, evaluate, cost, report
 *
 * Every file under runs/<run_id>/ carries the run id and is described by
 * that directory's manifest.json.
 */

#pragma once

#include "trialmatch/cost_model.hpp"
#include "trialmatch/criteria_logic.hpp"
#include "trialmatch/note_store.hpp"
#include "trialmatch/qa_engine.hpp"
#include "trialmatch/retriever.hpp"
#include "trialmatch/scorer_ranker.hpp"
#include "trialmatch/trial_composer.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch::app {

namespace fs = std::filesystem;

// ============================================================================
// Exit codes
// ============================================================================

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitBackendError = 3;
inline constexpr int kExitPartial = 4;

/// Maps an in-flight exception to the exit-code contract.
int exit_code_for(const std::exception& error);

// ============================================================================
// Configuration
// ============================================================================

enum class BackendKind { Scripted, Http };

struct PipelineConfig {
    logic::Thresholds thresholds;
    scoring::TierWeights tier_weights;
    std::size_t retrieval_k = retrieval::kDefaultRetrievalK;
    std::size_t chunk_max_tokens = notes::kDefaultChunkTokens;
    std::vector<std::string> allowed_note_categories = notes::default_note_categories();

    BackendKind backend = BackendKind::Scripted;
    std::string generator_fixture;
    std::string classifier_fixture;
    std::string qa_fixture;
    std::string generator_url;
    std::string classifier_url;
    std::string qa_url;
    std::string api_key;

    std::string embedder = "mock";  ///< "mock" or "http"
    std::size_t embedding_dim = retrieval::MockEmbedder::kDefaultDim;
    std::string embedding_url;
    std::string embedding_model = "default";

    std::size_t max_in_flight = 4;
    scoring::Method scoring_method = scoring::Method::WeightedTier;
    /// Omits wall-clock timestamps so reruns are byte-identical.
    bool deterministic = true;

    std::size_t max_marginalized = logic::kDefaultMaxMarginalized;
    int generation_retries = 2;
    int qa_retries = 2;
    std::size_t max_response_chars = 8000;
    long timeout_ms = 60000;
    std::string prompt_template;  ///< path; empty selects the built-in template

    double cost_input_speed = 0.0;
    double cost_output_speed = 0.0;
    double cost_hourly_rate = 0.0;
    double cost_price_in_per_1k = 0.0;
    double cost_price_out_per_1k = 0.0;

    /// Sets one key ("retrieval_k", "thresholds.met", ...). Throws
    /// InputError for unknown keys or unparseable values.
    void set(std::string_view key, const std::vector<std::string>& values);
    void set(std::string_view key, std::string_view value);

    /// Throws InputError when an invariant is violated.
    void validate() const;
};

/// Every key accepted by PipelineConfig::set.
const std::vector<std::string>& config_keys();

/// "qa_url" -> "TRIALMATCH_QA_URL", "thresholds.met" -> "TRIALMATCH_THRESHOLDS_MET".
std::string env_var_for(std::string_view key);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Defaults, then the key=value file (if any), then environment variables,
/// then `overrides` ("key=value"). Relative fixture and template paths in
/// the file are resolved against the file's directory. The result is
/// validated.
PipelineConfig load_config(const std::string& config_path, const EnvLookup& env = process_env,
                           const std::vector<std::string>& overrides = {});

/// Stable JSON snapshot of the settings that influence results. Secrets and
/// file locations are left out so the snapshot (and the run id derived from
/// it) does not depend on where inputs live.
std::string config_snapshot_json(const PipelineConfig& config);

// ============================================================================
// Backends
// ============================================================================

std::unique_ptr<composer::QuestionGenerator> make_generator(const PipelineConfig& config);
std::unique_ptr<composer::ConceptClassifier> make_classifier(const PipelineConfig& config);
std::unique_ptr<retrieval::EmbeddingProvider> make_embedder(const PipelineConfig& config);
std::unique_ptr<qa::QaBackend> make_qa_backend(const PipelineConfig& config);

// ============================================================================
// Workspace
// ============================================================================

struct Workspace {
    fs::path root;

    fs::path trials_dir() const { return root / "trials"; }
    fs::path corpus_dir() const { return root / "corpus"; }
    fs::path headers_file() const { return corpus_dir() / "headers.jsonl"; }
    fs::path chunks_file() const { return corpus_dir() / "chunks.jsonl"; }
    fs::path index_dir() const { return root / "index"; }
    fs::path runs_dir() const { return root / "runs"; }
    fs::path run_dir(std::string_view run_id) const { return runs_dir() / std::string(run_id); }
    /// Holds the id of the most recent match run.
    fs::path latest_run_file() const { return runs_dir() / "LATEST"; }

    /// The explicit id if given, else the latest run. Throws InputError when
    /// the run directory does not exist.
    std::string resolve_run(std::string_view run_id) const;
};

/// Loads every trials/<id>.json, ordered by trial id.
std::vector<composer::TrialSpec> load_trial_specs(const Workspace& workspace);

notes::ChunkStore load_chunk_store(const Workspace& workspace);

// ============================================================================
// Stages
// ============================================================================

struct ComposeResult {
    std::vector<fs::path> written;
    std::size_t flagged_criteria = 0;
};

/// Composes every trial of a JSON Lines file into out_dir. Nothing is
/// written unless every trial composes and validates.
ComposeResult run_compose(const PipelineConfig& config, const std::string& trials_file,
                          const fs::path& out_dir, composer::QuestionGenerator& generator,
                          composer::ConceptClassifier& classifier);

struct IngestResult {
    std::size_t patients = 0;
    std::size_t notes_read = 0;
    std::size_t notes_kept = 0;
    std::size_t notes_skipped = 0;  ///< unparseable dates
    std::size_t chunks = 0;
};

/// Filters and chunks notes for the patients in `headers_file`. A note for a
/// patient without a header is an input error.
IngestResult run_ingest(const PipelineConfig& config, const Workspace& workspace,
                        const std::string& notes_file, const std::string& headers_file);

struct IndexResult {
    fs::path file;
    std::size_t entries = 0;
};

IndexResult run_index(const PipelineConfig& config, const Workspace& workspace,
                      retrieval::EmbeddingProvider& provider);

struct MatchRequest {
    std::vector<std::string> patient_ids;  ///< empty selects every patient
    std::vector<std::string> trial_ids;    ///< empty selects every trial
    std::string run_id;                    ///< empty derives one from the inputs
};

struct IncompletePair {
    std::string patient_id;
    std::string trial_id;
    std::string error;
};

struct MatchResult {
    std::string run_id;
    std::size_t pairs = 0;
    std::vector<IncompletePair> incomplete;
    std::size_t questions_asked = 0;   ///< backend calls made by this invocation
    std::size_t questions_reused = 0;  ///< answers carried over from an earlier attempt
};

/// Answers every question of every selected pair, evaluates criteria and
/// scores complete pairs. Answers already recorded under the same run id are
/// reused, so a rerun after a backend outage only asks what is missing.
MatchResult run_match(const PipelineConfig& config, const Workspace& workspace,
                      const MatchRequest& request, qa::QaBackend& backend,
                      retrieval::EmbeddingProvider& provider);

/// Enrolled (patient, trial) pairs from JSON Lines {patient_id, trial_id}.
struct GroundTruth {
    std::map<std::string, std::set<std::string, std::less<>>, std::less<>> trials_of_patient;
    std::map<std::string, std::set<std::string, std::less<>>, std::less<>> patients_of_trial;
};

GroundTruth load_ground_truth(const std::string& path);

struct RankingMetrics {
    std::size_t k = 3;
    std::optional<double> hit_rate;     ///< trials-for-patient only
    std::optional<double> mean_ndcg;
    std::size_t evaluated_subjects = 0;
    std::vector<std::string> skipped_subjects;
};

struct RankRequest {
    std::string run_id;
    scoring::Direction direction = scoring::Direction::TrialsForPatient;
    scoring::Method method = scoring::Method::WeightedTier;
    std::string ground_truth_file;  ///< optional
    std::size_t k = 3;
};

struct RankResult {
    fs::path file;
    std::vector<scoring::Ranking> rankings;
    std::optional<RankingMetrics> metrics;
};

RankingMetrics compute_ranking_metrics(const std::vector<scoring::Ranking>& rankings,
                                       scoring::Direction direction, const GroundTruth& truth,
                                       std::size_t k);

/// Writes runs/<id>/rankings-<direction>-<method>.json.
RankResult run_rank(const PipelineConfig& config, const Workspace& workspace, const RankRequest& request);

/// Writes runs/<id>/metrics.json: verdict statistics and, with ground truth,
/// ranking metrics for every method and direction.
fs::path run_evaluate(const PipelineConfig& config, const Workspace& workspace, const std::string& run_id,
                      const std::string& ground_truth_file, std::size_t k = 3);

/// Writes runs/<id>/cost.json from the recorded token counts.
cost::CostReport run_cost(const PipelineConfig& config, const Workspace& workspace,
                          const std::string& run_id, const std::string& pricing);

/// Writes runs/<id>/report.md.
fs::path run_report(const PipelineConfig& config, const Workspace& workspace, const std::string& run_id);

}  // namespace trialmatch::app
