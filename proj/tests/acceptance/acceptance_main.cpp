/**
 * @file acceptance_main.cpp
 * @brief Acceptance suite. Prints one PASS/FAIL line per criterion and exits
 *        non-zero when any criterion fails.
 */

#include "test_support.hpp"

#include "trialmatch/cost_model.hpp"
#include "trialmatch/criteria_logic.hpp"
#include "trialmatch/note_store.hpp"
#include "trialmatch/pipeline.hpp"
#include "trialmatch/scorer_ranker.hpp"
#include "trialmatch/trial_composer.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

using namespace trialmatch;
using namespace trialmatch::testing;
using logic::AnswerValue;
using logic::Verdict;
using nlohmann::json;

namespace {

const std::string kDataDir = TRIALMATCH_DATA_DIR;

using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

/// Outcome of one criterion: pass flag and a one-line detail.
struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// ============================================================================
// 1. Marginalisation oracle
// ============================================================================

Outcome marginalisation_oracle() {
    Outcome out;
    Rng rng(1000);
    const auto start = Clock::now();
    std::size_t with_unknowns = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto dnf = random_dnf(rng, {4, 3, 12});
        const auto answers = random_answers(rng, dnf);
        const auto expected = oracle_enumerate(dnf, answers);
        if (expected.unknowns > 0) ++with_unknowns;
        const double got = logic::marginal_probability(dnf, answers);
        if (got != expected.probability()) {
            out.fail(fmt::format("case {}: library {} vs oracle {}", i, got, expected.probability()));
        }
    }
    const double elapsed = seconds_since(start);
    if (elapsed >= 10.0) out.fail(fmt::format("took {:.2f} s", elapsed));
    if (out.pass) {
        out.detail = fmt::format("1000 random DNFs match exactly ({} with unknowns) in {:.3f} s", with_unknowns,
                                 elapsed);
    }
    return out;
}

// ============================================================================
// 2. Thresholds
// ============================================================================

Outcome thresholds() {
    Outcome out;
    const double p[] = {0.0, 0.33, 0.34, 0.5, 0.66, 0.67, 1.0};
    const Verdict expected[] = {Verdict::NotMet, Verdict::NotMet, Verdict::NA, Verdict::NA,
                                Verdict::NA,     Verdict::Met,    Verdict::Met};
    for (std::size_t i = 0; i < std::size(p); ++i) {
        const auto v = logic::verdict_from_probability(p[i]);
        if (v != expected[i]) {
            out.fail(fmt::format("p={} gave {}, expected {}", p[i], logic::to_string(v), logic::to_string(expected[i])));
        }
    }
    if (out.pass) out.detail = "seven probabilities map to NotMet,NotMet,NA,NA,NA,Met,Met";
    return out;
}

// ============================================================================
// 3. Short circuit
// ============================================================================

Outcome short_circuit() {
    Outcome out;
    const auto dnf = logic::all_of({"Q1", "Q2"});
    const auto answers = all_answers({{"Q1", AnswerValue::No}, {"Q2", AnswerValue::NA}});
    const double p = logic::marginal_probability(dnf, answers);
    const auto v = logic::verdict_from_probability(p);
    if (p != 0.0) out.fail(fmt::format("probability {}", p));
    if (v != Verdict::NotMet) out.fail(fmt::format("verdict {}", logic::to_string(v)));
    if (out.pass) out.detail = "(Q1 AND Q2), Q1=No, Q2=NA gives 0.0 and NotMet";
    return out;
}

// ============================================================================
// 4. Scoring fixtures
// ============================================================================

Outcome scoring_fixtures() {
    Outcome out;
    using scoring::CriterionResult;
    const std::vector<CriterionResult> simple = {{"C1", 4, 1}, {"C2", 4, 0}, {"C3", 4, -1}, {"C4", 4, 1}};
    if (const double s = scoring::score_simple(simple); s != 0.5) out.fail(fmt::format("simple {}", s));

    const std::vector<CriterionResult> iterative = {{"C1", 1, 1}, {"C2", 2, 1}, {"C3", 3, 0}, {"C4", 4, 1}};
    if (const double s = scoring::score_iterative(iterative); s != 0.5) out.fail(fmt::format("iterative {}", s));

    const std::vector<CriterionResult> weighted = {{"C1", 1, 1}, {"C2", 1, 1}, {"C3", 2, -1}, {"C4", 4, 0}};
    const double expected_weighted = (2.0 * 1.0 + 1.5 * 0.5 + 0.5 * 0.0) / 3.0;
    if (const double s = scoring::score_weighted(weighted); std::abs(s - 0.9166666666666666) > 1e-9 ||
                                                           std::abs(s - expected_weighted) > 1e-12) {
        out.fail(fmt::format("weighted {}", s));
    }
    if (const double s = scoring::score_weighted({}); s != 0.0) out.fail(fmt::format("empty weighted {}", s));
    if (const double s = scoring::score_weighted({{"C1", 1, 0}}); std::abs(s + 1.0) > 1e-9) {
        out.fail(fmt::format("single tier-1 NotMet {}", s));
    }
    if (out.pass) out.detail = "simple 0.5, iterative 0.5, weighted 0.916667, empty 0, tier-1 NotMet -1";
    return out;
}

// ============================================================================
// 5. Tier mapping
// ============================================================================

Outcome tier_mapping() {
    Outcome out;
    const std::pair<const char*, int> table[] = {
        {"Cancer Type", 1},
        {"Cancer Subtype", 1},
        {"Cancer Stage", 1},
        {"Cancer Grade/Histology", 1},
        {"Genetic & Biologic Markers", 2},
        {"Lab/Imaging Criteria", 2},
        {"Prior treatment/surgery", 2},
        {"Comorbidities", 3},
        {"Functional Status", 4},
        {"Others", 4},
    };
    for (const auto& [name, tier] : table) {
        const int got = composer::assign_tier(name);
        if (got != tier) out.fail(fmt::format("{} -> {}, expected {}", name, got, tier));
    }
    if (composer::ConceptBook::defaults().names().size() != std::size(table)) {
        out.fail(fmt::format("concept book holds {} names", composer::ConceptBook::defaults().names().size()));
    }
    if (out.pass) out.detail = "ten concept/tier pairs reproduced";
    return out;
}

// ============================================================================
// 6. NDCG
// ============================================================================

Outcome ndcg() {
    Outcome out;
    scoring::Ranking ranking;
    ranking.candidates = {{"A", 0.9}, {"B", 0.8}, {"C", 0.1}};
    const double second = scoring::ndcg_binary(ranking, {"B"});
    const double first = scoring::ndcg_binary(ranking, {"A"});
    if (std::abs(second - 0.6309) > 1e-4) out.fail(fmt::format("rank 2 gives {}", second));
    if (std::abs(first - 1.0) > 1e-12) out.fail(fmt::format("rank 1 gives {}", first));
    if (out.pass) out.detail = fmt::format("rank 2 -> {:.4f}, rank 1 -> {:.1f}", second, first);
    return out;
}

// ============================================================================
// 7. Cost arithmetic
// ============================================================================

Outcome cost_arithmetic() {
    Outcome out;
    const double a = cost::round_cents(cost::per_pair_cost(170, 980));
    const double b = cost::round_cents(cost::per_pair_cost(6055, 980));
    const double hours = cost::runtime_hours({3'600'000, 360'000}, {1000, 100, 0});
    if (std::abs(a - 0.17) > 1e-12) out.fail(fmt::format("170/980 -> {}", a));
    if (std::abs(b - 6.18) > 1e-12) out.fail(fmt::format("6055/980 -> {}", b));
    if (std::abs(hours - 2.0) > 1e-9) out.fail(fmt::format("runtime {} h", hours));
    if (out.pass) out.detail = fmt::format("${:.2f}, ${:.2f} per pair; {} h", a, b, hours);
    return out;
}

// ============================================================================
// 8. Chunking
// ============================================================================

Outcome chunking() {
    Outcome out;
    Rng rng(8);
    std::uniform_int_distribution<std::size_t> slack(0, 60);
    constexpr int kCases = 600;
    for (int i = 0; i < kCases && out.pass; ++i) {
        const auto synthetic = random_note(rng, 2, 50);
        const std::size_t budget = min_feasible_budget(synthetic.tokens) + (i % 3 == 0 ? 0 : slack(rng));
        const auto note = make_note("P1", fmt::format("N{}", i), "Consults", "2023-01-01", synthetic.text);
        const auto chunks = notes::chunk_note(note, budget);
        const std::size_t n = synthetic.sentences.size();
        if (chunks.empty() || chunks.front().sentence_start != 0 || chunks.back().sentence_end != n - 1) {
            out.fail(fmt::format("case {}: chunks do not span the note", i));
            break;
        }
        for (std::size_t c = 0; c < chunks.size(); ++c) {
            std::size_t tokens = 0;
            for (std::size_t s = chunks[c].sentence_start; s <= chunks[c].sentence_end; ++s) tokens += synthetic.tokens[s];
            if (tokens > budget) out.fail(fmt::format("case {}: chunk {} holds {} > {} tokens", i, c, tokens, budget));
            if (c > 0 && chunks[c].sentence_start != chunks[c - 1].sentence_end) {
                out.fail(fmt::format("case {}: chunk {} does not overlap by exactly one sentence", i, c));
            }
            if (c > 0 && chunks[c].sentence_end <= chunks[c - 1].sentence_end) {
                out.fail(fmt::format("case {}: chunk {} does not advance", i, c));
            }
        }
    }
    if (out.pass) out.detail = fmt::format("{} random notes (2-50 sentences, feasible budgets)", kCases);
    return out;
}

// ============================================================================
// 9 and 10. Synthetic corpus
// ============================================================================

struct RunArtifacts {
    std::string run_id;
    std::map<std::string, std::string> files;  ///< name -> bytes
    std::vector<scoring::Ranking> weighted_rankings;
    std::size_t incomplete = 0;
};

RunArtifacts run_synthetic(const fs::path& root) {
    using namespace trialmatch::app;
    const auto config = load_config(kDataDir + "/pipeline.ini", nullptr);
    const Workspace ws{root};
    auto generator = make_generator(config);
    auto classifier = make_classifier(config);
    run_compose(config, kDataDir + "/trials.jsonl", ws.trials_dir(), *generator, *classifier);
    run_ingest(config, ws, kDataDir + "/notes.jsonl", kDataDir + "/headers.jsonl");
    auto embedder = make_embedder(config);
    run_index(config, ws, *embedder);
    auto backend = make_qa_backend(config);
    const auto match = run_match(config, ws, {}, *backend, *embedder);

    RunArtifacts out;
    out.run_id = match.run_id;
    out.incomplete = match.incomplete.size();
    for (auto direction : {scoring::Direction::TrialsForPatient, scoring::Direction::PatientsForTrial}) {
        for (auto method : scoring::kAllMethods) {
            RankRequest request;
            request.run_id = match.run_id;
            request.direction = direction;
            request.method = method;
            request.ground_truth_file = kDataDir + "/ground_truth.jsonl";
            const auto ranked = run_rank(config, ws, request);
            if (direction == scoring::Direction::TrialsForPatient && method == scoring::Method::WeightedTier) {
                out.weighted_rankings = ranked.rankings;
            }
        }
    }
    for (const auto& entry : fs::directory_iterator(ws.run_dir(match.run_id))) {
        const auto name = entry.path().filename().string();
        const bool tracked = name == "answers.jsonl" || name == "verdicts.jsonl" || name == "scores.csv" ||
                             name.rfind("rankings-", 0) == 0;
        if (tracked) out.files[name] = read_text(entry.path());
    }
    return out;
}

Outcome end_to_end_determinism() {
    Outcome out;
    const auto start = Clock::now();
    TempDir first_dir, second_dir;
    const auto first = run_synthetic(first_dir.path());
    const auto second = run_synthetic(second_dir.path());

    if (first.run_id != second.run_id) out.fail("run ids differ: " + first.run_id + " vs " + second.run_id);
    if (first.incomplete != 0) out.fail(fmt::format("{} incomplete pairs", first.incomplete));
    if (first.files.size() != 9) out.fail(fmt::format("expected 9 tracked artifacts, found {}", first.files.size()));
    for (const auto& [name, bytes] : first.files) {
        const auto it = second.files.find(name);
        if (it == second.files.end()) {
            out.fail(name + " missing from the second run");
        } else if (it->second != bytes) {
            out.fail(name + " differs between runs");
        }
    }

    const auto truth = app::load_ground_truth(kDataDir + "/ground_truth.jsonl");
    for (const auto& [patient, trials] : truth.trials_of_patient) {
        const scoring::Ranking* ranking = nullptr;
        for (const auto& r : first.weighted_rankings) {
            if (r.subject_id == patient) ranking = &r;
        }
        if (ranking == nullptr || ranking->candidates.empty()) {
            out.fail("no WeightedTier ranking for " + patient);
            continue;
        }
        const auto& top = ranking->candidates.front();
        const bool strictly_first = trials.count(top.candidate_id) == 1 &&
                                    (ranking->candidates.size() < 2 || ranking->candidates[1].score < top.score);
        if (!strictly_first) out.fail(patient + ": ground-truth trial is not ranked first");
    }

    const double elapsed = seconds_since(start);
    if (elapsed >= 60.0) out.fail(fmt::format("took {:.1f} s", elapsed));
    if (out.pass) {
        out.detail = fmt::format("two runs byte-identical over {} artifacts; ground truth ranks #1 for {} patients; "
                                 "{:.2f} s",
                                 first.files.size(), truth.trials_of_patient.size(), elapsed);
    }
    return out;
}

Outcome tier1_flip_property() {
    Outcome out;
    TempDir dir;
    const auto config = app::load_config(kDataDir + "/pipeline.ini", nullptr);
    const app::Workspace ws{dir.path()};
    auto generator = app::make_generator(config);
    auto classifier = app::make_classifier(config);
    app::run_compose(config, kDataDir + "/trials.jsonl", ws.trials_dir(), *generator, *classifier);
    app::run_ingest(config, ws, kDataDir + "/notes.jsonl", kDataDir + "/headers.jsonl");
    auto embedder = app::make_embedder(config);
    app::run_index(config, ws, *embedder);
    auto backend = app::make_qa_backend(config);
    const auto match = app::run_match(config, ws, {}, *backend, *embedder);

    std::map<std::pair<std::string, std::string>, std::vector<scoring::CriterionResult>> pairs;
    std::istringstream verdicts(read_text(ws.run_dir(match.run_id) / "verdicts.jsonl"));
    std::string line;
    while (std::getline(verdicts, line)) {
        const auto row = json::parse(line);
        const auto verdict = logic::parse_verdict(row.at("verdict").get<std::string>());
        pairs[{row.at("patient_id"), row.at("trial_id")}].push_back(
            {row.at("criterion_id"), row.at("tier").get<int>(), scoring::encode(*verdict)});
    }

    std::size_t flips = 0;
    for (const auto& [pair, results] : pairs) {
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].tier != 1 || results[i].x != 1) continue;
            auto flipped = results;
            flipped[i].x = 0;
            ++flips;
            for (auto method : scoring::kAllMethods) {
                const double before = scoring::score(method, results, config.tier_weights);
                const double after = scoring::score(method, flipped, config.tier_weights);
                if (after > before) {
                    out.fail(fmt::format("{} x {} {}: {} rose from {} to {}", pair.first, pair.second,
                                         results[i].criterion_id, scoring::to_string(method), before, after));
                }
            }
        }
    }
    if (pairs.size() != 9) out.fail(fmt::format("expected 9 complete pairs, found {}", pairs.size()));
    if (flips == 0) out.fail("no tier-1 Met verdict to flip");
    if (out.pass) out.detail = fmt::format("{} tier-1 flips over {} pairs, no score increased", flips, pairs.size());
    return out;
}

Outcome guarded(const std::function<Outcome()>& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        return {false, std::string("exception: ") + e.what()};
    }
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    const std::pair<int, std::function<Outcome()>> criteria[] = {
        {1, marginalisation_oracle}, {2, thresholds}, {3, short_circuit},         {4, scoring_fixtures},
        {5, tier_mapping},           {6, ndcg},       {7, cost_arithmetic},       {8, chunking},
        {9, end_to_end_determinism}, {10, tier1_flip_property},
    };
    int failures = 0;
    for (const auto& [number, body] : criteria) {
        const auto outcome = guarded(body);
        if (!outcome.pass) ++failures;
        std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << number << ": " << outcome.detail
                  << std::endl;
    }
    std::cout << (failures == 0 ? "all acceptance criteria passed" : fmt::format("{} criteria failed", failures))
              << std::endl;
    return failures == 0 ? 0 : 1;
}
