/**
 * @file trialmatch_cli.cpp
 * @brief `trialmatch` command-line entry point.
 *
 * Subcommands mirror the pipeline stages: compose, ingest, index, match,
 * rank, evaluate, cost and report. Exit codes: 0 ok, 2 input error,
 * 3 backend error, 4 partial results.
 */

#include "trialmatch/error.hpp"
#include "trialmatch/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

namespace app = trialmatch::app;
namespace scoring = trialmatch::scoring;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string run_id;
    std::string backend;
    std::string workdir = ".trialmatch";
    std::string log_level = "info";
    std::vector<std::string> overrides;
};

app::PipelineConfig make_config(const GlobalOptions& g) {
    std::vector<std::string> overrides = g.overrides;
    if (!g.backend.empty()) overrides.push_back("backend=" + g.backend);
    return app::load_config(g.config_path, app::process_env, overrides);
}

scoring::Method method_from(const std::string& text) {
    const auto method = scoring::parse_method(text);
    if (!method) throw trialmatch::InputError("unknown scoring method '" + text + "'");
    return *method;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("trialmatch"));

    CLI::App cli{"Match patients to clinical trials from their notes"};
    cli.require_subcommand(1);

    GlobalOptions g;
    cli.add_option("--config", g.config_path, "key=value configuration file");
    cli.add_option("--run-id", g.run_id, "Run identifier (defaults: derived for match, latest run otherwise)");
    cli.add_option("--backend", g.backend, "Model backend")->check(CLI::IsMember({"scripted", "http"}));
    cli.add_option("--workdir", g.workdir, "Work directory holding stage artifacts")->capture_default_str();
    cli.add_option("--set", g.overrides, "Override a config key (key=value); repeatable");
    cli.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    // ---- compose -------------------------------------------------------------
    std::string trials_file, compose_out;
    auto* compose = cli.add_subcommand("compose", "Turn raw trial criteria into TrialSpec files");
    compose->add_option("--trials", trials_file, "JSON Lines of raw trials")->required();
    compose->add_option("--out", compose_out, "Output directory (default: <workdir>/trials)");

    // ---- ingest --------------------------------------------------------------
    std::string notes_file, headers_file;
    auto* ingest = cli.add_subcommand("ingest", "Filter and chunk patient notes");
    ingest->add_option("--notes", notes_file, "JSON Lines of clinical notes")->required();
    ingest->add_option("--headers", headers_file, "JSON Lines of patient headers")->required();

    // ---- index ---------------------------------------------------------------
    auto* index = cli.add_subcommand("index", "Embed the chunk store into a vector index");

    // ---- match ---------------------------------------------------------------
    std::vector<std::string> patient_ids, trial_ids;
    auto* match = cli.add_subcommand("match", "Answer questions, evaluate criteria and score pairs");
    match->add_option("--patients", patient_ids, "Patient ids (default: all)")->delimiter(',');
    match->add_option("--trials", trial_ids, "Trial ids (default: all)")->delimiter(',');

    // ---- rank ----------------------------------------------------------------
    std::string direction_text = "trials-for-patient", method_text, rank_truth;
    std::size_t rank_k = 3;
    auto* rank = cli.add_subcommand("rank", "Rank candidates from a run's scores");
    rank->add_option("--direction", direction_text, "trials-for-patient or patients-for-trial")->capture_default_str()
        ->check(CLI::IsMember({"trials-for-patient", "patients-for-trial"}));
    rank->add_option("--method", method_text, "Simple, IterativeTier or WeightedTier (default: config)");
    rank->add_option("--ground-truth", rank_truth, "JSON Lines of enrolled {patient_id, trial_id}");
    rank->add_option("--k", rank_k, "Cut-off for the hit rate")->capture_default_str();

    // ---- evaluate ------------------------------------------------------------
    std::string eval_truth;
    std::size_t eval_k = 3;
    auto* evaluate = cli.add_subcommand("evaluate", "Verdict statistics and ranking metrics for a run");
    evaluate->add_option("--ground-truth", eval_truth, "JSON Lines of enrolled {patient_id, trial_id}");
    evaluate->add_option("--k", eval_k, "Cut-off for the hit rate")->capture_default_str();

    // ---- cost ----------------------------------------------------------------
    std::string pricing = "self-hosted";
    auto* cost = cli.add_subcommand("cost", "Estimate inference cost from recorded token counts");
    cost->add_option("--pricing", pricing, "self-hosted or api")->capture_default_str()
        ->check(CLI::IsMember({"self-hosted", "api"}));

    // ---- report --------------------------------------------------------------
    auto* report = cli.add_subcommand("report", "Write a Markdown summary of a run");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? app::kExitOk : app::kExitInputError;
    }

    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        const auto config = make_config(g);
        const app::Workspace workspace{g.workdir};

        if (*compose) {
            auto generator = app::make_generator(config);
            auto classifier = app::make_classifier(config);
            const auto out_dir = compose_out.empty() ? workspace.trials_dir() : app::fs::path(compose_out);
            const auto result = app::run_compose(config, trials_file, out_dir, *generator, *classifier);
            for (const auto& path : result.written) std::cout << path.string() << '\n';
            if (result.flagged_criteria > 0) {
                spdlog::warn("{} criteria could not be decomposed and will evaluate to NA", result.flagged_criteria);
            }
        } else if (*ingest) {
            const auto r = app::run_ingest(config, workspace, notes_file, headers_file);
            std::cout << "patients " << r.patients << ", notes read " << r.notes_read << ", kept " << r.notes_kept
                      << ", skipped " << r.notes_skipped << ", chunks " << r.chunks << '\n';
        } else if (*index) {
            auto embedder = app::make_embedder(config);
            const auto r = app::run_index(config, workspace, *embedder);
            std::cout << r.file.string() << " (" << r.entries << " vectors)\n";
        } else if (*match) {
            auto backend = app::make_qa_backend(config);
            auto embedder = app::make_embedder(config);
            const auto r = app::run_match(config, workspace, {patient_ids, trial_ids, g.run_id}, *backend, *embedder);
            std::cout << r.run_id << '\n';
            if (!r.incomplete.empty()) {
                spdlog::error("{} of {} pairs are incomplete; see the run manifest", r.incomplete.size(), r.pairs);
                return app::kExitPartial;
            }
        } else if (*rank) {
            app::RankRequest request;
            request.run_id = g.run_id;
            request.direction = *scoring::parse_direction(direction_text);
            request.method = method_text.empty() ? config.scoring_method : method_from(method_text);
            request.ground_truth_file = rank_truth;
            request.k = rank_k;
            const auto r = app::run_rank(config, workspace, request);
            std::cout << r.file.string() << '\n';
            if (r.metrics) {
                if (r.metrics->hit_rate) std::cout << "hit@" << r.metrics->k << ' ' << *r.metrics->hit_rate << '\n';
                if (r.metrics->mean_ndcg) std::cout << "ndcg " << *r.metrics->mean_ndcg << '\n';
            }
        } else if (*evaluate) {
            std::cout << app::run_evaluate(config, workspace, g.run_id, eval_truth, eval_k).string() << '\n';
        } else if (*cost) {
            const auto r = app::run_cost(config, workspace, g.run_id, pricing);
            std::cout << r.method << ": total " << r.total_cost << ", per pair " << r.per_pair_cost << '\n';
        } else if (*report) {
            std::cout << app::run_report(config, workspace, g.run_id).string() << '\n';
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return app::exit_code_for(e);
    }
    return app::kExitOk;
}
