// Command-line driver for the evaluation pipeline. Stages read and write
// JSONL files under a run directory; a manifest with content hashes makes
// every stage resumable and detects stale inputs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "confsig/config.hpp"
#include "confsig/pipeline.hpp"
#include "confsig/report.hpp"

using namespace confsig;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string run_dir_override;
    std::string cache_dir_override;
    bool offline = false;
};

Config load(const CommonOpts& opts) {
    Config cfg = load_config(opts.config_path);
    if (!opts.run_dir_override.empty()) cfg.run_dir = opts.run_dir_override;
    if (!opts.cache_dir_override.empty()) cfg.cache_dir = opts.cache_dir_override;
    if (opts.offline) cfg.offline = true;
    return cfg;
}

struct Services {
    ResponseCache cache;
    HttpJsonEndpoint model_ep;
    HttpJsonEndpoint judge_ep;
    HttpJsonEndpoint nli_ep;
    GenerationClient gen;
    JudgeClient judge;
    RemoteNliScorer nli;

    explicit Services(const Config& cfg)
        : cache(cfg.cache_dir),
          model_ep(cfg.model, cache, cfg.offline),
          judge_ep(cfg.judge, cache, cfg.offline),
          nli_ep(cfg.nli, cache, cfg.offline),
          gen(model_ep, cfg.prompts),
          judge(judge_ep, cfg.judge_prompt),
          nli(nli_ep, cfg.run_dir + "/entailments.jsonl") {}
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "JSON config file")->required();
    cmd->add_option("--run-dir", opts.run_dir_override, "override run directory");
    cmd->add_option("--cache-dir", opts.cache_dir_override, "override cache directory");
    cmd->add_flag("--offline", opts.offline, "forbid network; require warm caches");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"confidence-signal evaluation harness for closed-book QA"};
    app.require_subcommand(1);

    CommonOpts opts;
    int synth_n = 1000;
    double synth_acc = 0.4, synth_d = 2.0, synth_r = 0.7;
    long long synth_seed = 42;
    std::string synth_out;
    std::string report_json_path;
    std::string report_prefix = "report";

    auto* c_sample = app.add_subcommand("sample", "seeded dataset subsample -> questions.jsonl");
    add_common(c_sample, opts);
    auto* c_generate =
        app.add_subcommand("generate", "greedy + sampled + verbalized decodes per question");
    add_common(c_generate, opts);
    auto* c_judge = app.add_subcommand("judge", "correctness verdicts from the judge model");
    add_common(c_judge, opts);
    auto* c_nli = app.add_subcommand("nli", "semantic clustering of greedy + samples");
    add_common(c_nli, opts);
    auto* c_score = app.add_subcommand("score", "assemble per-question signal rows");
    add_common(c_score, opts);
    auto* c_evaluate = app.add_subcommand("evaluate", "per-cell statistics -> report.json");
    add_common(c_evaluate, opts);
    auto* c_report = app.add_subcommand("report", "render markdown/CSV from a report.json");
    c_report->add_option("--from", report_json_path, "report JSON file")->required();
    c_report->add_option("--prefix", report_prefix, "output path prefix");
    auto* c_cost = app.add_subcommand("cost", "decode/NLI cost ledger for a run");
    add_common(c_cost, opts);
    auto* c_synth = app.add_subcommand("synth", "binormal synthetic rows with known AUROC");
    c_synth->add_option("-n", synth_n, "rows");
    c_synth->add_option("--accuracy", synth_acc, "label rate");
    c_synth->add_option("-d", synth_d, "separation");
    c_synth->add_option("-r", synth_r, "noise correlation between views");
    c_synth->add_option("--seed", synth_seed, "seed");
    c_synth->add_option("-o,--out", synth_out, "output signals JSONL")->required();
    auto* c_run_all = app.add_subcommand("run-all", "sample through report in one go");
    add_common(c_run_all, opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (c_sample->parsed()) {
            stage_sample(load(opts));
        } else if (c_generate->parsed()) {
            Config cfg = load(opts);
            Services s(cfg);
            stage_generate(cfg, s.gen);
        } else if (c_judge->parsed()) {
            Config cfg = load(opts);
            Services s(cfg);
            stage_judge(cfg, s.judge);
        } else if (c_nli->parsed()) {
            Config cfg = load(opts);
            Services s(cfg);
            stage_nli(cfg, s.nli);
        } else if (c_score->parsed()) {
            stage_score(load(opts));
        } else if (c_evaluate->parsed()) {
            Config cfg = load(opts);
            const EvalReport report = evaluate_cells(cfg);
            const std::string prefix = cfg.run_dir + "/" + cfg.report_prefix;
            render_report(report, prefix, {ReportFormat::Json});
            std::printf("wrote %s.json\n", prefix.c_str());
        } else if (c_report->parsed()) {
            std::ifstream in(report_json_path);
            if (!in) throw DataError("cannot open " + report_json_path);
            const EvalReport report = report_from_json(ojson::parse(in));
            for (const auto& f :
                 render_report(report, report_prefix, {ReportFormat::Markdown, ReportFormat::Csv}))
                std::printf("wrote %s\n", f.c_str());
        } else if (c_cost->parsed()) {
            Config cfg = load(opts);
            const CostLedger ledger = cost_report(cfg.run_dir);
            std::printf("%s\n", cost_to_json(ledger).dump(2).c_str());
        } else if (c_synth->parsed()) {
            const auto rows = synth_signal_rows(synth_n, synth_acc, synth_d, synth_r, synth_seed);
            write_jsonl(synth_out, rows);
            std::printf("wrote %d synthetic rows to %s (analytic AUROC %.4f)\n", synth_n,
                        synth_out.c_str(), binormal_auroc(synth_d));
        } else if (c_run_all->parsed()) {
            Config cfg = load(opts);
            Services s(cfg);
            run_all(cfg, s.gen, s.judge, s.nli);
            std::printf("run complete: %s\n", cfg.run_dir.c_str());
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const ServiceError& e) {
        std::fprintf(stderr, "service error: %s\n", e.what());
        return 2;
    } catch (const IntegrityError& e) {
        std::fprintf(stderr, "integrity error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
