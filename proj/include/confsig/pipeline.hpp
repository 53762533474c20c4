#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "confsig/clients.hpp"
#include "confsig/config.hpp"
#include "confsig/error.hpp"
#include "confsig/records.hpp"
#include "confsig/report.hpp"
#include "confsig/semantics.hpp"
#include "confsig/signals.hpp"
#include "confsig/stats.hpp"
#include "confsig/synth.hpp"

namespace confsig {

// Per-question clustering result as persisted between the nli and score
// stages. members[0] is the greedy answer.
struct ClusterRecord {
    std::string question_id;
    std::vector<int> members;
    int greedy_cluster_id = 0;
    int num_clusters = 0;
    int nli_calls = 0;
};

inline ojson to_json(const ClusterRecord& r) {
    return ojson{{"question_id", r.question_id},
                 {"members", r.members},
                 {"greedy_cluster_id", r.greedy_cluster_id},
                 {"num_clusters", r.num_clusters},
                 {"nli_calls", r.nli_calls}};
}
inline void from_json(const ojson& j, ClusterRecord& r) {
    j.at("question_id").get_to(r.question_id);
    j.at("members").get_to(r.members);
    j.at("greedy_cluster_id").get_to(r.greedy_cluster_id);
    j.at("num_clusters").get_to(r.num_clusters);
    j.at("nli_calls").get_to(r.nli_calls);
}

// ---- Manifest plumbing ----

namespace detail {

inline std::string manifest_path(const std::string& run_dir) { return run_dir + "/manifest.json"; }

inline RunManifest load_manifest(const std::string& run_dir) {
    std::ifstream in(manifest_path(run_dir));
    if (!in) throw IntegrityError("missing manifest: " + manifest_path(run_dir));
    ojson j = ojson::parse(in, nullptr, false);
    if (j.is_discarded()) throw IntegrityError("manifest is not valid JSON: " + run_dir);
    RunManifest m;
    from_json(j, m);
    return m;
}

inline void save_manifest(const std::string& run_dir, const RunManifest& m) {
    std::filesystem::create_directories(run_dir);
    std::ofstream out(manifest_path(run_dir), std::ios::binary | std::ios::trunc);
    out << to_json(m).dump(2) << '\n';
}

inline void check_staged_file(const std::string& run_dir, const RunManifest& m,
                              const std::string& name) {
    const auto it = m.file_hashes.find(name);
    if (it == m.file_hashes.end())
        throw IntegrityError("stage output not recorded in manifest: " + name +
                             " (run the upstream stage first)");
    const std::string path = run_dir + "/" + name;
    if (!std::filesystem::exists(path)) throw IntegrityError("missing stage file: " + path);
    const std::string h = file_hash(path);
    if (h != it->second)
        throw IntegrityError("stale stage file (hash mismatch): " + path +
                             " — rerun the stage that produces it");
}

inline void record_staged_file(const std::string& run_dir, RunManifest& m,
                               const std::string& name) {
    m.file_hashes[name] = file_hash(run_dir + "/" + name);
    save_manifest(run_dir, m);
}

// Complete records from a possibly truncated JSONL file; a malformed or
// partial final line is dropped so an interrupted stage resumes cleanly.
template <typename T>
std::vector<T> read_jsonl_resumable(const std::string& path) {
    std::vector<T> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ojson j = ojson::parse(line, nullptr, false);
        if (j.is_discarded()) break;  // truncated tail
        T rec;
        try {
            from_json(j, rec);
        } catch (const Error&) {
            break;
        } catch (const ojson::exception&) {
            break;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Fan work out over a fixed-size worker pool; results land in input order
// so parallelism never changes output bytes. Worker exceptions rethrow.
template <typename Out>
std::vector<Out> parallel_map(size_t count, int workers, const std::function<Out(size_t)>& fn) {
    std::vector<Out> results(count);
    if (count == 0) return results;
    workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= count) return;
                    results[i] = fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
                next.store(count);  // stop other workers
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

}  // namespace detail

// ---- Stages ----

// sample: adapt the source dataset, take the seeded subset, write
// questions.jsonl and the run manifest.
inline RunManifest stage_sample(const Config& cfg) {
    std::vector<QuestionRecord> population;
    if (cfg.dataset.adapter == "popqa")
        population = adapt_popqa(cfg.dataset.path);
    else if (cfg.dataset.adapter == "triviaqa")
        population = adapt_triviaqa(cfg.dataset.path);
    else if (cfg.dataset.adapter == "questions")
        population = read_jsonl<QuestionRecord>(cfg.dataset.path);
    else
        throw ConfigError("unknown dataset adapter: " + cfg.dataset.adapter);

    const auto selected = sample_dataset(population, cfg.sample_n, cfg.sample_seed);

    RunManifest m;
    m.dataset_id = cfg.dataset.id;
    m.dataset_split = cfg.dataset.split;
    m.n = cfg.sample_n;
    m.sample_seed = cfg.sample_seed;
    m.model_id = cfg.model.model_id;
    m.judge_model_id = cfg.judge.model_id;
    m.nli_model_id = cfg.nli.model_id;
    m.sampling = cfg.sampling;
    m.k_top = cfg.k_top;
    m.bootstrap_b = cfg.bootstrap.b;
    if (std::filesystem::exists(detail::manifest_path(cfg.run_dir))) {
        // keep the original creation time on reruns
        m.created_at = detail::load_manifest(cfg.run_dir).created_at;
    } else {
        m.created_at = detail::timestamp_utc();
    }
    write_jsonl(cfg.run_dir + "/questions.jsonl", selected);
    detail::record_staged_file(cfg.run_dir, m, "questions.jsonl");
    return m;
}

// generate: greedy decode with logprobs, N samples, and the verbalized
// probe per question. Resumes from the last complete record; final file is
// rewritten in question order so the bytes are deterministic.
inline void stage_generate(const Config& cfg, GenerationClient& client) {
    RunManifest m = detail::load_manifest(cfg.run_dir);
    detail::check_staged_file(cfg.run_dir, m, "questions.jsonl");
    const auto questions = read_jsonl<QuestionRecord>(cfg.run_dir + "/questions.jsonl");
    const std::string path = cfg.run_dir + "/generations.jsonl";

    std::map<std::string, GenerationRecord> done;
    for (auto& r : detail::read_jsonl_resumable<GenerationRecord>(path))
        done.emplace(r.question_id, std::move(r));

    std::vector<const QuestionRecord*> todo;
    for (const auto& q : questions)
        if (!done.count(q.id)) todo.push_back(&q);

    std::mutex append_mutex;
    detail::parallel_map<int>(todo.size(), cfg.model.max_in_flight, [&](size_t i) {
        const QuestionRecord& q = *todo[i];
        GenerationRecord rec;
        rec.question_id = q.id;
        rec.model_id = cfg.model.model_id;
        rec.sampling = cfg.sampling;
        auto [text, steps] = client.generate_greedy(q.question, cfg.k_top, cfg.sampling.max_tokens);
        rec.greedy_text = std::move(text);
        rec.greedy_steps = std::move(steps);
        rec.sample_texts = client.generate_samples(q.question, cfg.sampling);
        rec.verbalized_raw = client.ask_verbalized(q.question);
        std::lock_guard lk(append_mutex);
        append_jsonl(path, rec);
        done.emplace(q.id, std::move(rec));
        return 0;
    });

    std::vector<GenerationRecord> ordered;
    ordered.reserve(questions.size());
    for (const auto& q : questions) {
        auto it = done.find(q.id);
        if (it == done.end()) throw DataError("generation missing for question " + q.id);
        ordered.push_back(it->second);
    }
    write_jsonl(path, ordered);
    detail::record_staged_file(cfg.run_dir, m, "generations.jsonl");
}

// judge: one correctness verdict per question from the external judge.
inline void stage_judge(const Config& cfg, JudgeClient& client) {
    RunManifest m = detail::load_manifest(cfg.run_dir);
    detail::check_staged_file(cfg.run_dir, m, "questions.jsonl");
    detail::check_staged_file(cfg.run_dir, m, "generations.jsonl");
    const auto questions = read_jsonl<QuestionRecord>(cfg.run_dir + "/questions.jsonl");
    const auto generations = read_jsonl<GenerationRecord>(cfg.run_dir + "/generations.jsonl");
    std::map<std::string, const GenerationRecord*> gen_by_id;
    for (const auto& g : generations) gen_by_id[g.question_id] = &g;

    const std::string path = cfg.run_dir + "/judgments.jsonl";
    std::map<std::string, JudgmentRecord> done;
    for (auto& r : detail::read_jsonl_resumable<JudgmentRecord>(path))
        done.emplace(r.question_id, std::move(r));

    std::vector<const QuestionRecord*> todo;
    for (const auto& q : questions)
        if (!done.count(q.id)) todo.push_back(&q);

    std::mutex append_mutex;
    detail::parallel_map<int>(todo.size(), cfg.judge.max_in_flight, [&](size_t i) {
        const QuestionRecord& q = *todo[i];
        auto it = gen_by_id.find(q.id);
        if (it == gen_by_id.end()) throw DataError("no generation for question " + q.id);
        JudgmentRecord rec =
            client.judge(q.id, q.question, it->second->greedy_text, q.gold_aliases);
        std::lock_guard lk(append_mutex);
        append_jsonl(path, rec);
        done.emplace(q.id, std::move(rec));
        return 0;
    });

    std::vector<JudgmentRecord> ordered;
    for (const auto& q : questions) ordered.push_back(done.at(q.id));
    write_jsonl(path, ordered);
    detail::record_staged_file(cfg.run_dir, m, "judgments.jsonl");
}

// nli: semantic clustering of {greedy, samples} per question.
inline void stage_nli(const Config& cfg, NliScorer& scorer) {
    RunManifest m = detail::load_manifest(cfg.run_dir);
    detail::check_staged_file(cfg.run_dir, m, "questions.jsonl");
    detail::check_staged_file(cfg.run_dir, m, "generations.jsonl");
    const auto questions = read_jsonl<QuestionRecord>(cfg.run_dir + "/questions.jsonl");
    const auto generations = read_jsonl<GenerationRecord>(cfg.run_dir + "/generations.jsonl");
    std::map<std::string, const GenerationRecord*> gen_by_id;
    for (const auto& g : generations) gen_by_id[g.question_id] = &g;

    const std::string path = cfg.run_dir + "/clusters.jsonl";
    std::map<std::string, ClusterRecord> done;
    for (auto& r : detail::read_jsonl_resumable<ClusterRecord>(path))
        done.emplace(r.question_id, std::move(r));

    std::vector<const QuestionRecord*> todo;
    for (const auto& q : questions)
        if (!done.count(q.id)) todo.push_back(&q);

    std::mutex append_mutex;
    detail::parallel_map<int>(todo.size(), cfg.nli.max_in_flight, [&](size_t i) {
        const QuestionRecord& q = *todo[i];
        const GenerationRecord& g = *gen_by_id.at(q.id);
        const ClusterSet cs = cluster_semantic(g.greedy_text, g.sample_texts, q.question, scorer,
                                               cfg.entailment, cfg.normalization);
        ClusterRecord rec;
        rec.question_id = q.id;
        rec.members = cs.members;
        rec.greedy_cluster_id = cs.greedy_cluster_id;
        rec.num_clusters = cs.num_clusters;
        rec.nli_calls = cs.nli_calls;
        std::lock_guard lk(append_mutex);
        append_jsonl(path, rec);
        done.emplace(q.id, std::move(rec));
        return 0;
    });

    std::vector<ClusterRecord> ordered;
    for (const auto& q : questions) ordered.push_back(done.at(q.id));
    write_jsonl(path, ordered);
    detail::record_staged_file(cfg.run_dir, m, "clusters.jsonl");
}

// ---- Signal assembly ----

inline std::vector<SignalRow> build_signal_rows(const std::vector<GenerationRecord>& generations,
                                                const std::vector<JudgmentRecord>& judgments,
                                                const std::vector<ClusterRecord>& clusters,
                                                const Config& cfg) {
    std::map<std::string, const JudgmentRecord*> judg_by_id;
    for (const auto& j : judgments) judg_by_id[j.question_id] = &j;
    std::map<std::string, const ClusterRecord*> clus_by_id;
    for (const auto& c : clusters) clus_by_id[c.question_id] = &c;

    std::vector<std::string> missing;
    std::vector<SignalRow> rows;
    rows.reserve(generations.size());
    for (const auto& g : generations) {
        const auto jit = judg_by_id.find(g.question_id);
        const auto cit = clus_by_id.find(g.question_id);
        if (jit == judg_by_id.end() || cit == clus_by_id.end()) {
            missing.push_back(g.question_id);
            continue;
        }
        SignalRow row;
        row.question_id = g.question_id;
        if (!g.greedy_steps.empty()) {
            const auto loc = locate_first_content_token(g.greedy_steps, cfg.skip_prefixes);
            const auto ft = phi_first(g.greedy_steps[loc.index], cfg.k_top);
            row.phi_first = ft.phi;
            row.first_token_index = loc.index;
            row.effective_k = ft.effective_k;
            row.fallback_used = loc.fallback_used;
        } else {
            // no tokens at all: maximally uncertain, flagged
            row.phi_first = 0.0;
            row.effective_k = 0;
            row.fallback_used = true;
        }
        row.au_1w = surface_agreement(g.greedy_text, g.sample_texts, Granularity::First1Word,
                                      cfg.normalization);
        row.au_3w = surface_agreement(g.greedy_text, g.sample_texts, Granularity::First3Words,
                                      cfg.normalization);
        row.au_full =
            surface_agreement(g.greedy_text, g.sample_texts, Granularity::Full, cfg.normalization);
        const ClusterRecord& cr = *cit->second;
        ClusterSet cs;
        cs.members = cr.members;
        cs.greedy_cluster_id = cr.greedy_cluster_id;
        cs.num_clusters = cr.num_clusters;
        row.sem_au = semantic_au(cs, static_cast<int>(g.sample_texts.size()));
        if (g.verbalized_raw) row.verbalized = parse_verbalized(*g.verbalized_raw);
        row.answer_len_tokens = answer_length(g);
        row.correct = jit->second->correct;
        rows.push_back(std::move(row));
    }
    if (!missing.empty()) {
        std::string ids;
        for (size_t i = 0; i < missing.size() && i < 10; ++i) ids += (i ? ", " : "") + missing[i];
        throw DataError("missing judgment or cluster record for question ids: " + ids +
                        (missing.size() > 10 ? ", ..." : ""));
    }
    return rows;
}

// score: join generations, judgments, and clusters into signals.jsonl.
inline void stage_score(const Config& cfg) {
    RunManifest m = detail::load_manifest(cfg.run_dir);
    detail::check_staged_file(cfg.run_dir, m, "generations.jsonl");
    detail::check_staged_file(cfg.run_dir, m, "judgments.jsonl");
    detail::check_staged_file(cfg.run_dir, m, "clusters.jsonl");
    const auto generations = read_jsonl<GenerationRecord>(cfg.run_dir + "/generations.jsonl");
    const auto judgments = read_jsonl<JudgmentRecord>(cfg.run_dir + "/judgments.jsonl");
    const auto clusters = read_jsonl<ClusterRecord>(cfg.run_dir + "/clusters.jsonl");
    const auto rows = build_signal_rows(generations, judgments, clusters, cfg);
    write_jsonl(cfg.run_dir + "/signals.jsonl", rows);
    detail::record_staged_file(cfg.run_dir, m, "signals.jsonl");
}

// ---- Evaluation ----

inline CellReport evaluate_cell(const std::vector<SignalRow>& rows, const BootstrapConfig& bcfg,
                                const std::string& dataset_id = "",
                                const std::string& model_id = "") {
    if (rows.size() < 2) throw DataError("evaluate_cell: need at least 2 rows");
    CellReport cell;
    cell.dataset_id = dataset_id;
    cell.model_id = model_id;
    cell.n = static_cast<int>(rows.size());

    std::vector<bool> labels;
    std::vector<double> phi, au1, au3, auf, sem, len;
    for (const auto& r : rows) {
        labels.push_back(r.correct);
        phi.push_back(r.phi_first);
        au1.push_back(r.au_1w);
        au3.push_back(r.au_3w);
        auf.push_back(r.au_full);
        sem.push_back(r.sem_au);
        len.push_back(static_cast<double>(r.answer_len_tokens));
    }
    detail::require_both_classes(labels, "evaluate_cell");
    cell.accuracy_value = accuracy(labels);

    auto eval_signal = [&](const std::vector<double>& scores,
                           const std::vector<bool>& lab) -> SignalEval {
        SignalEval s;
        s.n_used = static_cast<int>(scores.size());
        try {
            s.auroc_value = auroc({scores, lab});
            auto [lo, hi] = bootstrap_ci({scores, lab}, bcfg);
            s.ci_low = lo;
            s.ci_high = hi;
        } catch (const Error&) {
            // degenerate signal in this cell; rendered as "--"
        }
        return s;
    };

    cell.signals["phi_first"] = eval_signal(phi, labels);
    cell.signals["au_1w"] = eval_signal(au1, labels);
    cell.signals["au_3w"] = eval_signal(au3, labels);
    cell.signals["au_full"] = eval_signal(auf, labels);
    cell.signals["sem_au"] = eval_signal(sem, labels);

    // Verbalized confidence runs on the parseable subset only, with the
    // exclusion count surfaced in the report.
    std::vector<double> verb;
    std::vector<bool> verb_labels;
    for (const auto& r : rows) {
        if (r.verbalized) {
            verb.push_back(static_cast<double>(*r.verbalized));
            verb_labels.push_back(r.correct);
        }
    }
    cell.verbalized_excluded = cell.n - static_cast<int>(verb.size());
    if (verb.size() >= 2)
        cell.signals["verbalized"] = eval_signal(verb, verb_labels);
    else
        cell.signals["verbalized"] = SignalEval{};

    double best_baseline = -1.0;
    for (const auto& name : {"verbalized", "au_1w", "au_3w", "au_full", "sem_au"}) {
        const double v = cell.signals.at(name).auroc_value;
        if (!std::isnan(v)) best_baseline = std::max(best_baseline, v);
    }
    cell.delta = cell.signals.at("phi_first").auroc_value - best_baseline;

    cell.p_vs_au_full = paired_bootstrap_p(phi, auf, labels, bcfg);
    cell.p_vs_sem_au = paired_bootstrap_p(phi, sem, labels, bcfg);
    cell.p_vs_au_1w = paired_bootstrap_p(phi, au1, labels, bcfg);

    try {
        cell.pearson_phi_sem = pearson(phi, sem);
    } catch (const Error&) {
    }
    try {
        cell.ensemble_gain_value = ensemble_gain(phi, sem, labels);
    } catch (const Error&) {
    }
    try {
        cell.r_len = pearson(phi, len);
    } catch (const Error&) {
    }
    try {
        cell.r_len_partial = partial_correlation(phi, len, labels);
    } catch (const Error&) {
    }
    return cell;
}

inline EvalReport evaluate_cells(const Config& cfg) {
    if (cfg.cells.empty()) throw ConfigError("evaluate: no cells configured");
    EvalReport report;
    for (const auto& cc : cfg.cells) {
        const auto rows = read_jsonl<SignalRow>(cc.signals_path);
        report.cells.push_back(evaluate_cell(rows, cfg.bootstrap, cc.dataset_id, cc.model_id));
        if (!cc.run_dir.empty() && std::filesystem::exists(detail::manifest_path(cc.run_dir))) {
            const CostLedger ledger = [&] {
                CostLedger l;
                const auto gens =
                    read_jsonl<GenerationRecord>(cc.run_dir + "/generations.jsonl");
                for (const auto& g : gens) {
                    if (!g.greedy_text.empty() || !g.greedy_steps.empty()) ++l.greedy_decodes;
                    l.sampled_decodes += static_cast<long long>(g.sample_texts.size());
                    if (g.verbalized_raw) ++l.verbalized_calls;
                }
                const std::string cpath = cc.run_dir + "/clusters.jsonl";
                if (std::filesystem::exists(cpath))
                    for (const auto& c : read_jsonl<ClusterRecord>(cpath))
                        l.nli_directional_calls += c.nli_calls;
                const std::string jpath = cc.run_dir + "/judgments.jsonl";
                if (std::filesystem::exists(jpath))
                    l.judge_calls +=
                        static_cast<long long>(read_jsonl<JudgmentRecord>(jpath).size());
                return l;
            }();
            report.cost.greedy_decodes += ledger.greedy_decodes;
            report.cost.sampled_decodes += ledger.sampled_decodes;
            report.cost.verbalized_calls += ledger.verbalized_calls;
            report.cost.judge_calls += ledger.judge_calls;
            report.cost.nli_directional_calls += ledger.nli_directional_calls;
        }
    }
    return report;
}

// ---- Cost ----

inline CostLedger cost_report(const std::string& run_dir) {
    CostLedger l;
    const std::string gpath = run_dir + "/generations.jsonl";
    if (std::filesystem::exists(gpath)) {
        for (const auto& g : read_jsonl<GenerationRecord>(gpath)) {
            if (!g.greedy_text.empty() || !g.greedy_steps.empty()) ++l.greedy_decodes;
            l.sampled_decodes += static_cast<long long>(g.sample_texts.size());
            if (g.verbalized_raw) ++l.verbalized_calls;
        }
    }
    const std::string jpath = run_dir + "/judgments.jsonl";
    if (std::filesystem::exists(jpath))
        l.judge_calls = static_cast<long long>(read_jsonl<JudgmentRecord>(jpath).size());
    const std::string cpath = run_dir + "/clusters.jsonl";
    if (std::filesystem::exists(cpath))
        for (const auto& c : read_jsonl<ClusterRecord>(cpath))
            l.nli_directional_calls += c.nli_calls;
    return l;
}

// ---- Synthetic evaluation ----

inline std::vector<SignalRow> synth_signal_rows(int n, double accuracy_rate, double d,
                                                double r_views, long long seed) {
    const auto rows = synth_generate(n, accuracy_rate, d, r_views, seed);
    std::vector<SignalRow> out;
    out.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        SignalRow r;
        r.question_id = "synth-" + std::to_string(i);
        // map scores into [0,1] monotonically; AUROC is rank-invariant
        r.phi_first = 1.0 / (1.0 + std::exp(-rows[i].score));
        r.sem_au = 1.0 / (1.0 + std::exp(-rows[i].score2));
        r.au_full = r.au_3w = r.au_1w = r.sem_au;
        r.correct = rows[i].label;
        r.answer_len_tokens = 1;
        r.effective_k = 100;
        out.push_back(std::move(r));
    }
    return out;
}

// ---- Orchestration ----

inline void run_all(const Config& cfg, GenerationClient& gen, JudgeClient& judge,
                    NliScorer& scorer) {
    stage_sample(cfg);
    stage_generate(cfg, gen);
    stage_judge(cfg, judge);
    stage_nli(cfg, scorer);
    stage_score(cfg);
    Config eval_cfg = cfg;
    if (eval_cfg.cells.empty()) {
        CellConfig cc;
        cc.dataset_id = cfg.dataset.id;
        cc.model_id = cfg.model.model_id;
        cc.run_dir = cfg.run_dir;
        cc.signals_path = cfg.run_dir + "/signals.jsonl";
        eval_cfg.cells.push_back(cc);
    }
    const EvalReport report = evaluate_cells(eval_cfg);
    render_report(report, cfg.run_dir + "/" + cfg.report_prefix);
}

}  // namespace confsig
