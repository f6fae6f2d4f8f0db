/**
 * @file test_pipeline.cpp
 * @brief Configuration loading and the on-disk stages, exercised on the
 *        synthetic corpus shipped under data/synthetic.
 */

#include "test_support.hpp"

#include "trialmatch/error.hpp"
#include "trialmatch/pipeline.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <memory>

using namespace trialmatch;
using namespace trialmatch::app;
using trialmatch::testing::read_text;
using trialmatch::testing::TempDir;
using trialmatch::testing::write_text;
using nlohmann::json;

namespace {

const std::string kDataDir = TRIALMATCH_DATA_DIR;

std::string data(const std::string& name) { return kDataDir + "/" + name; }

PipelineConfig synthetic_config(const std::vector<std::string>& overrides = {}) {
    return load_config(data("pipeline.ini"), nullptr, overrides);
}

EnvLookup env_from(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

/// Delegates to another backend but fails for one patient.
class PartiallyDownBackend final : public qa::QaBackend {
public:
    PartiallyDownBackend(qa::QaBackend& inner, std::string down_patient)
        : inner_(inner), down_(std::move(down_patient)) {}
    std::string tag() const override { return inner_.tag(); }
    std::string complete(const qa::QaRequest& request) override {
        if (request.patient_id == down_) throw TransportError("backend unavailable");
        return inner_.complete(request);
    }

private:
    qa::QaBackend& inner_;
    std::string down_;
};

void prepare_workspace(const PipelineConfig& config, const Workspace& ws) {
    auto generator = make_generator(config);
    auto classifier = make_classifier(config);
    run_compose(config, data("trials.jsonl"), ws.trials_dir(), *generator, *classifier);
    run_ingest(config, ws, data("notes.jsonl"), data("headers.jsonl"));
    auto embedder = make_embedder(config);
    run_index(config, ws, *embedder);
}

MatchResult match(const PipelineConfig& config, const Workspace& ws, MatchRequest request = {}) {
    auto backend = make_qa_backend(config);
    auto embedder = make_embedder(config);
    return run_match(config, ws, request, *backend, *embedder);
}

/// Workspace prepared and matched once for the read-only tests below.
class SyntheticRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = std::make_unique<TempDir>();
        config_ = std::make_unique<PipelineConfig>(synthetic_config());
        ws_ = std::make_unique<Workspace>(Workspace{dir_->path()});
        prepare_workspace(*config_, *ws_);
        result_ = std::make_unique<MatchResult>(match(*config_, *ws_));
    }
    static void TearDownTestSuite() {
        result_.reset();
        ws_.reset();
        config_.reset();
        dir_.reset();
    }

    static fs::path run_file(const std::string& name) { return ws_->run_dir(result_->run_id) / name; }

    static std::unique_ptr<TempDir> dir_;
    static std::unique_ptr<PipelineConfig> config_;
    static std::unique_ptr<Workspace> ws_;
    static std::unique_ptr<MatchResult> result_;
};

std::unique_ptr<TempDir> SyntheticRun::dir_;
std::unique_ptr<PipelineConfig> SyntheticRun::config_;
std::unique_ptr<Workspace> SyntheticRun::ws_;
std::unique_ptr<MatchResult> SyntheticRun::result_;

}  // namespace

// ============================================================================
// Configuration
// ============================================================================

TEST(Config, DefaultsAreValid) {
    const auto config = load_config("", nullptr);
    EXPECT_EQ(config.thresholds.met, 0.66);
    EXPECT_EQ(config.thresholds.not_met, 0.34);
    EXPECT_EQ(config.retrieval_k, 10u);
    EXPECT_EQ(config.chunk_max_tokens, 256u);
    EXPECT_EQ(config.allowed_note_categories.size(), 13u);
    EXPECT_EQ(config.tier_weights.w1, 2.0);
    EXPECT_EQ(config.scoring_method, scoring::Method::WeightedTier);
    EXPECT_TRUE(config.deterministic);
}

TEST(Config, FileSectionsAndRelativePaths) {
    const auto config = synthetic_config();
    EXPECT_EQ(config.backend, BackendKind::Scripted);
    EXPECT_EQ(config.cost_input_speed, 1000.0);
    EXPECT_EQ(config.cost_price_out_per_1k, 0.03);
    EXPECT_TRUE(fs::path(config.qa_fixture).is_absolute());
    EXPECT_TRUE(fs::exists(config.qa_fixture));
    EXPECT_TRUE(fs::exists(config.generator_fixture));
}

TEST(Config, PrecedenceFileThenEnvThenOverrides) {
    TempDir dir;
    write_text(dir / "c.ini", "retrieval_k = 5\nmax_in_flight = 2\n[thresholds]\nmet = 0.7\n");
    const auto env = env_from({{"TRIALMATCH_RETRIEVAL_K", "6"}, {"TRIALMATCH_THRESHOLDS_NOTMET", "0.2"}});
    const auto config = load_config((dir / "c.ini").string(), env, {"retrieval_k=7"});
    EXPECT_EQ(config.retrieval_k, 7u);
    EXPECT_EQ(config.thresholds.met, 0.7);
    EXPECT_EQ(config.thresholds.not_met, 0.2);
    EXPECT_EQ(config.max_in_flight, 2u);
}

TEST(Config, EnvVarNames) {
    EXPECT_EQ(env_var_for("qa_url"), "TRIALMATCH_QA_URL");
    EXPECT_EQ(env_var_for("thresholds.met"), "TRIALMATCH_THRESHOLDS_MET");
}

TEST(Config, CategoryListsAcceptCommas) {
    const auto config = load_config("", nullptr, {"allowed_note_categories=Consults, Progress Notes"});
    EXPECT_EQ(config.allowed_note_categories, (std::vector<std::string>{"Consults", "Progress Notes"}));
}

TEST(Config, RejectsBadInput) {
    EXPECT_THROW(load_config("", nullptr, {"no_such_key=1"}), InputError);
    EXPECT_THROW(load_config("", nullptr, {"retrieval_k=abc"}), InputError);
    EXPECT_THROW(load_config("", nullptr, {"retrieval_k=0"}), InputError);
    EXPECT_THROW(load_config("", nullptr, {"thresholds.met=0.2"}), InputError);
    EXPECT_THROW(load_config("", nullptr, {"backend=cloud"}), InputError);
    EXPECT_THROW(load_config("", nullptr, {"scoring_method=Median"}), InputError);
    EXPECT_THROW(load_config("", nullptr, {"retrieval_k"}), InputError);
    EXPECT_THROW(load_config("/nonexistent/config.ini", nullptr), InputError);
}

TEST(Config, SnapshotOmitsSecretsAndLocations) {
    auto config = synthetic_config({"api_key=topsecret", "qa_url=http://example:1/qa", "max_in_flight=9"});
    const auto snapshot = config_snapshot_json(config);
    EXPECT_EQ(snapshot.find("topsecret"), std::string::npos);
    EXPECT_EQ(snapshot.find("example"), std::string::npos);
    EXPECT_EQ(snapshot.find(kDataDir), std::string::npos);
    EXPECT_EQ(snapshot, config_snapshot_json(synthetic_config()));
    EXPECT_NE(snapshot, config_snapshot_json(synthetic_config({"retrieval_k=3"})));
}

TEST(Config, ScriptedBackendsNeedFixtures) {
    const auto config = load_config("", nullptr);
    EXPECT_THROW(make_generator(config), InputError);
    EXPECT_THROW(make_qa_backend(config), InputError);
    EXPECT_NO_THROW(make_embedder(config));
    EXPECT_THROW(make_qa_backend(load_config("", nullptr, {"backend=http"})), InputError);
}

TEST(ExitCodes, MapExceptionFamilies) {
    EXPECT_EQ(exit_code_for(InputError("x")), kExitInputError);
    EXPECT_EQ(exit_code_for(CompositionError("x", {})), kExitInputError);
    EXPECT_EQ(exit_code_for(FormatError("x", "raw")), kExitInputError);
    EXPECT_EQ(exit_code_for(TransportError("x")), kExitBackendError);
    EXPECT_EQ(exit_code_for(std::logic_error("x")), 1);
}

// ============================================================================
// compose / ingest / index
// ============================================================================

TEST(Compose, EmptyTrialsFileWritesNothing) {
    TempDir dir;
    write_text(dir / "trials.jsonl", "");
    const auto config = synthetic_config();
    auto generator = make_generator(config);
    auto classifier = make_classifier(config);
    const auto result = run_compose(config, (dir / "trials.jsonl").string(), dir / "out", *generator, *classifier);
    EXPECT_TRUE(result.written.empty());
}

TEST(Compose, InvalidLineIsInputErrorWithLineNumber) {
    TempDir dir;
    write_text(dir / "trials.jsonl", "{\"trial_id\":\"T\",\"inclusion_text\":\"- x\"}\nnot json\n");
    const auto config = synthetic_config();
    auto generator = make_generator(config);
    auto classifier = make_classifier(config);
    try {
        run_compose(config, (dir / "trials.jsonl").string(), dir / "out", *generator, *classifier);
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Compose, UnsafeOrDuplicateTrialIds) {
    TempDir dir;
    const auto config = synthetic_config();
    auto generator = make_generator(config);
    auto classifier = make_classifier(config);
    write_text(dir / "a.jsonl", R"({"trial_id":"../evil","inclusion_text":"- x"})" "\n");
    EXPECT_THROW(run_compose(config, (dir / "a.jsonl").string(), dir / "out", *generator, *classifier), InputError);
    write_text(dir / "b.jsonl", R"({"trial_id":"T","inclusion_text":"- x"})" "\n" R"({"trial_id":"T","inclusion_text":"- y"})" "\n");
    EXPECT_THROW(run_compose(config, (dir / "b.jsonl").string(), dir / "out", *generator, *classifier), InputError);
}

TEST(Ingest, NoteWithoutHeaderIsInputError) {
    TempDir dir;
    write_text(dir / "h.jsonl", R"({"patient_id":"P1","age_at_enrollment":50,"enrollment_date":"2023-01-01"})" "\n");
    write_text(dir / "n.jsonl",
               R"({"patient_id":"P9","note_id":"a","category":"Consults","date":"2022-01-01","text":"x."})" "\n");
    EXPECT_THROW(run_ingest(synthetic_config(), Workspace{dir / "ws"}, (dir / "n.jsonl").string(),
                            (dir / "h.jsonl").string()),
                 InputError);
}

TEST(Index, EmptyCorpusIsInputError) {
    TempDir dir;
    write_text(dir / "h.jsonl", R"({"patient_id":"P1","age_at_enrollment":50,"enrollment_date":"2023-01-01"})" "\n");
    write_text(dir / "n.jsonl", "");
    const auto config = synthetic_config();
    const Workspace ws{dir / "ws"};
    run_ingest(config, ws, (dir / "n.jsonl").string(), (dir / "h.jsonl").string());
    auto embedder = make_embedder(config);
    EXPECT_THROW(run_index(config, ws, *embedder), InputError);
}

TEST(Match, WithoutIndexIsInputError) {
    TempDir dir;
    const auto config = synthetic_config();
    const Workspace ws{dir.path()};
    auto generator = make_generator(config);
    auto classifier = make_classifier(config);
    run_compose(config, data("trials.jsonl"), ws.trials_dir(), *generator, *classifier);
    run_ingest(config, ws, data("notes.jsonl"), data("headers.jsonl"));
    EXPECT_THROW(match(config, ws), InputError);
}

// ============================================================================
// Stages on the synthetic corpus
// ============================================================================

TEST_F(SyntheticRun, ComposeWroteOneSpecPerTrial) {
    const auto specs = load_trial_specs(*ws_);
    ASSERT_EQ(specs.size(), 3u);
    for (const auto& spec : specs) EXPECT_TRUE(composer::validate_trial(spec).empty()) << spec.trial_id;
}

TEST_F(SyntheticRun, IngestKeptEligibleNotesOnly) {
    const auto store = load_chunk_store(*ws_);
    EXPECT_EQ(store.headers().size(), 3u);
    for (const auto& c : store.chunks()) {
        const auto* h = store.header(c.patient_id);
        ASSERT_NE(h, nullptr);
        EXPECT_LE(c.note_date, h->enrollment_date);
        EXPECT_NE(c.note_category, "Telephone Encounter");
        EXPECT_NE(c.note_category, "Nursing Note");
    }
}

TEST_F(SyntheticRun, MatchCoversEveryPair) {
    EXPECT_EQ(result_->pairs, 9u);
    EXPECT_TRUE(result_->incomplete.empty());
    EXPECT_EQ(result_->run_id.rfind("run-", 0), 0u);
    const auto scores = scoring::parse_scores_csv(read_text(run_file("scores.csv")));
    EXPECT_EQ(scores.size(), 27u);
}

TEST_F(SyntheticRun, ManifestDescribesTheRun) {
    const auto manifest = json::parse(read_text(run_file("manifest.json")));
    EXPECT_EQ(manifest["run_id"], result_->run_id);
    EXPECT_EQ(manifest["prompt_version"], "qa-cot-v1");
    EXPECT_EQ(manifest["backends"]["qa"], "scripted-qa");
    EXPECT_EQ(manifest["backends"]["embedder"], "mock-bow-512");
    EXPECT_EQ(manifest["pairs"]["total"], 9);
    EXPECT_TRUE(manifest["inputs"].contains("chunks_sha256"));
    EXPECT_TRUE(manifest["config"].is_object());
    EXPECT_TRUE(manifest["timestamps"].empty());
}

TEST_F(SyntheticRun, EveryArtifactCarriesTheRunId) {
    std::istringstream answers(read_text(run_file("answers.jsonl")));
    std::string line;
    while (std::getline(answers, line)) EXPECT_EQ(json::parse(line)["run_id"], result_->run_id);
    std::istringstream verdicts(read_text(run_file("verdicts.jsonl")));
    while (std::getline(verdicts, line)) EXPECT_EQ(json::parse(line)["run_id"], result_->run_id);
}

TEST_F(SyntheticRun, NoSilentNa) {
    std::istringstream verdicts(read_text(run_file("verdicts.jsonl")));
    std::string line;
    std::size_t na = 0;
    while (std::getline(verdicts, line)) {
        const auto row = json::parse(line);
        if (row["verdict"] != "NA") continue;
        ++na;
        const bool explained = !row["fallback_reason"].get<std::string>().empty() || !row["unknown_questions"].empty();
        EXPECT_TRUE(explained) << line;
    }
    EXPECT_GT(na, 0u);
}

TEST_F(SyntheticRun, QaFallbackIsRecorded) {
    const auto records = qa::parse_records_jsonl(read_text(run_file("answers.jsonl")));
    bool fallback = false;
    for (const auto& r : records) {
        if (r.patient_id == "P003" && r.question_id == "NCT90000003-Q08") {
            fallback = true;
            EXPECT_EQ(r.answer, logic::AnswerValue::NA);
            EXPECT_EQ(r.confidence, 1);
            EXPECT_FALSE(r.failure_reason.empty());
        }
        if (r.patient_id == "P003" && r.question_id == "NCT90000003-Q04") EXPECT_TRUE(r.failure_reason.empty());
    }
    EXPECT_TRUE(fallback);
}

TEST_F(SyntheticRun, CitationsResolveToStoredChunks) {
    const auto store = load_chunk_store(*ws_);
    for (const auto& r : qa::parse_records_jsonl(read_text(run_file("answers.jsonl")))) {
        for (const auto& c : r.citations) {
            const auto* chunk = store.find(c);
            ASSERT_NE(chunk, nullptr) << c;
            EXPECT_EQ(chunk->patient_id, r.patient_id);
        }
    }
}

TEST_F(SyntheticRun, RerunReusesAnswersAndReproducesArtifacts) {
    const auto before = read_text(run_file("verdicts.jsonl"));
    const auto scores_before = read_text(run_file("scores.csv"));
    const auto again = match(*config_, *ws_);
    EXPECT_EQ(again.run_id, result_->run_id);
    EXPECT_EQ(again.questions_asked, 0u);
    EXPECT_GT(again.questions_reused, 0u);
    EXPECT_EQ(read_text(run_file("verdicts.jsonl")), before);
    EXPECT_EQ(read_text(run_file("scores.csv")), scores_before);
}

TEST_F(SyntheticRun, UnknownPatientIsInputError) {
    EXPECT_THROW(match(*config_, *ws_, {{"P999"}, {}, ""}), InputError);
    EXPECT_THROW(match(*config_, *ws_, {{}, {"NCT0"}, ""}), InputError);
}

TEST_F(SyntheticRun, SubsetMatchGivesRowsPerMethod) {
    const auto r = match(*config_, *ws_, {{"P001"}, {"NCT90000001", "NCT90000002"}, ""});
    EXPECT_EQ(r.pairs, 2u);
    EXPECT_NE(r.run_id, result_->run_id);
    const auto scores = scoring::parse_scores_csv(read_text(ws_->run_dir(r.run_id) / "scores.csv"));
    EXPECT_EQ(scores.size(), 6u);
}

TEST_F(SyntheticRun, RankWithGroundTruth) {
    RankRequest request;
    request.run_id = result_->run_id;
    request.ground_truth_file = data("ground_truth.jsonl");
    const auto r = run_rank(*config_, *ws_, request);
    ASSERT_TRUE(r.metrics.has_value());
    EXPECT_EQ(r.metrics->hit_rate, 1.0);
    EXPECT_EQ(r.metrics->mean_ndcg, 1.0);
    EXPECT_EQ(r.rankings.size(), 3u);
    EXPECT_TRUE(fs::exists(r.file));

    request.direction = scoring::Direction::PatientsForTrial;
    request.method = scoring::Method::Simple;
    const auto by_trial = run_rank(*config_, *ws_, request);
    ASSERT_TRUE(by_trial.metrics.has_value());
    EXPECT_FALSE(by_trial.metrics->hit_rate.has_value());
    EXPECT_TRUE(by_trial.metrics->mean_ndcg.has_value());
    const auto manifest = json::parse(read_text(run_file("manifest.json")));
    bool listed = false;
    for (const auto& a : manifest["artifacts"]) listed = listed || a == by_trial.file.filename().string();
    EXPECT_TRUE(listed);
}

TEST_F(SyntheticRun, RankUnknownRunIsInputError) {
    RankRequest request;
    request.run_id = "run-doesnotexist";
    EXPECT_THROW(run_rank(*config_, *ws_, request), InputError);
}

TEST_F(SyntheticRun, EvaluateWritesMetrics) {
    const auto path = run_evaluate(*config_, *ws_, result_->run_id, data("ground_truth.jsonl"));
    const auto metrics = json::parse(read_text(path));
    const auto& overall = metrics["verdict_stats"]["overall"];
    EXPECT_NEAR(overall["met_pct"].get<double>() + overall["notmet_pct"].get<double>() +
                    overall["na_pct"].get<double>(),
                100.0, 1e-9);
    EXPECT_EQ(metrics["verdict_stats"]["by_trial"].size(), 3u);
    EXPECT_FALSE(metrics["ranking_metrics"].empty());
}

TEST_F(SyntheticRun, CostBothPricings) {
    const auto hosted = run_cost(*config_, *ws_, result_->run_id, "self-hosted");
    EXPECT_EQ(hosted.n_pairs, 9);
    EXPECT_GT(hosted.usage.input_tokens, 0u);
    EXPECT_NEAR(hosted.runtime_hours,
                hosted.usage.input_tokens / (1000.0 * 3600) + hosted.usage.output_tokens / (100.0 * 3600), 1e-12);
    EXPECT_NEAR(hosted.total_cost, hosted.runtime_hours * 2.0, 1e-12);
    const auto api = run_cost(*config_, *ws_, result_->run_id, "api");
    EXPECT_NEAR(api.total_cost, api.usage.input_tokens / 1000.0 * 0.01 + api.usage.output_tokens / 1000.0 * 0.03,
                1e-12);
    EXPECT_NEAR(api.per_pair_cost * 9, api.total_cost, 1e-12);
    EXPECT_THROW(run_cost(*config_, *ws_, result_->run_id, "barter"), InputError);
    EXPECT_TRUE(fs::exists(run_file("cost.json")));
}

TEST_F(SyntheticRun, ReportHasTheThreeSections) {
    const auto text = read_text(run_report(*config_, *ws_, result_->run_id));
    EXPECT_NE(text.find(result_->run_id), std::string::npos);
    EXPECT_NE(text.find("Pair scores"), std::string::npos);
    EXPECT_NE(text.find("Verdict statistics"), std::string::npos);
    EXPECT_NE(text.find("NA rate per question"), std::string::npos);
    EXPECT_NE(text.find("Answers and citations"), std::string::npos);
    EXPECT_NE(text.find("NCT90000003-Q08"), std::string::npos);
}

TEST_F(SyntheticRun, LatestRunIsDefault) {
    const auto latest = ws_->resolve_run("");
    EXPECT_TRUE(fs::is_directory(ws_->run_dir(latest)));
    EXPECT_THROW(ws_->resolve_run("../etc"), InputError);
}

// ============================================================================
// Partial runs
// ============================================================================

TEST(PartialRun, TransportFailureMarksPairsIncompleteAndResumes) {
    TempDir dir;
    const auto config = synthetic_config();
    const Workspace ws{dir.path()};
    prepare_workspace(config, ws);

    auto scripted = make_qa_backend(config);
    PartiallyDownBackend flaky(*scripted, "P002");
    auto embedder = make_embedder(config);
    const auto first = run_match(config, ws, {}, flaky, *embedder);
    EXPECT_EQ(first.incomplete.size(), 3u);
    for (const auto& p : first.incomplete) EXPECT_EQ(p.patient_id, "P002");

    const auto manifest = json::parse(read_text(ws.run_dir(first.run_id) / "manifest.json"));
    EXPECT_EQ(manifest["pairs"]["incomplete"].size(), 3u);
    const auto scores = scoring::parse_scores_csv(read_text(ws.run_dir(first.run_id) / "scores.csv"));
    EXPECT_EQ(scores.size(), 18u);
    for (const auto& s : scores) EXPECT_NE(s.patient_id, "P002");

    const auto report = read_text(run_report(config, ws, first.run_id));
    EXPECT_NE(report.find("INCOMPLETE"), std::string::npos);

    auto fresh = make_qa_backend(config);
    const auto second = run_match(config, ws, {}, *fresh, *embedder);
    EXPECT_EQ(second.run_id, first.run_id);
    EXPECT_TRUE(second.incomplete.empty());
    EXPECT_GT(second.questions_reused, 0u);
    EXPECT_GT(second.questions_asked, 0u);
}
