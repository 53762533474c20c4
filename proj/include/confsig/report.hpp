#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "confsig/error.hpp"
#include "confsig/records.hpp"
#include "confsig/stats.hpp"

namespace confsig {

struct SignalEval {
    double auroc_value = std::nan("");
    double ci_low = std::nan("");
    double ci_high = std::nan("");
    int n_used = 0;
};

struct CostLedger {
    long long greedy_decodes = 0;
    long long sampled_decodes = 0;
    long long verbalized_calls = 0;
    long long judge_calls = 0;
    long long nli_directional_calls = 0;
};

// Fixed signal order used everywhere a table column appears.
inline const std::vector<std::string>& signal_names() {
    static const std::vector<std::string> v = {"verbalized", "au_1w", "au_3w",
                                               "au_full",    "sem_au", "phi_first"};
    return v;
}

struct CellReport {
    std::string dataset_id;
    std::string model_id;
    int n = 0;
    double accuracy_value = 0.0;
    std::map<std::string, SignalEval> signals;  // keyed by signal_names()
    int verbalized_excluded = 0;
    double delta = 0.0;  // phi AUROC - strongest non-phi baseline
    PValue p_vs_au_full, p_vs_sem_au, p_vs_au_1w;
    double pearson_phi_sem = std::nan("");
    double ensemble_gain_value = std::nan("");
    double r_len = std::nan("");
    double r_len_partial = std::nan("");
};

struct EvalReport {
    std::vector<CellReport> cells;
    CostLedger cost;
};

namespace detail {

inline std::string fmt(double v, int decimals) {
    if (std::isnan(v)) return "--";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string fmt_signed(double v, int decimals) {
    if (std::isnan(v)) return "--";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.*f", decimals, v);
    return buf;
}

inline double mean_over(const std::vector<const CellReport*>& cells,
                        const std::string& signal) {
    double sum = 0.0;
    for (const auto* c : cells) sum += c->signals.at(signal).auroc_value;
    return sum / static_cast<double>(cells.size());
}

}  // namespace detail

inline ojson cost_to_json(const CostLedger& c) {
    ojson j{{"greedy_decodes", c.greedy_decodes},
            {"sampled_decodes", c.sampled_decodes},
            {"verbalized_calls", c.verbalized_calls},
            {"judge_calls", c.judge_calls},
            {"nli_directional_calls", c.nli_directional_calls}};
    const long long full = c.greedy_decodes + c.sampled_decodes;
    j["decode_ratio"] = full > 0 ? ojson(static_cast<double>(c.greedy_decodes) /
                                         static_cast<double>(full))
                                 : ojson(nullptr);
    return j;
}

inline ojson report_to_json(const EvalReport& report) {
    ojson cells = ojson::array();
    for (const auto& c : report.cells) {
        ojson jc{{"dataset_id", c.dataset_id},
                 {"model_id", c.model_id},
                 {"n", c.n},
                 {"accuracy", c.accuracy_value}};
        ojson sig = ojson::object();
        for (const auto& name : signal_names()) {
            const auto& s = c.signals.at(name);
            sig[name] = ojson{{"auroc", s.auroc_value},
                              {"ci_low", s.ci_low},
                              {"ci_high", s.ci_high},
                              {"n_used", s.n_used}};
        }
        jc["signals"] = std::move(sig);
        jc["verbalized_excluded"] = c.verbalized_excluded;
        jc["delta"] = c.delta;
        jc["paired_p"] = ojson{{"vs_au_full", c.p_vs_au_full.display()},
                               {"vs_sem_au", c.p_vs_sem_au.display()},
                               {"vs_au_1w", c.p_vs_au_1w.display()}};
        jc["paired_p_counts"] = ojson{{"vs_au_full", c.p_vs_au_full.count},
                                      {"vs_sem_au", c.p_vs_sem_au.count},
                                      {"vs_au_1w", c.p_vs_au_1w.count},
                                      {"b", c.p_vs_au_full.b}};
        jc["pearson_phi_sem"] = c.pearson_phi_sem;
        jc["ensemble_gain"] = c.ensemble_gain_value;
        jc["r_len"] = c.r_len;
        jc["r_len_partial"] = c.r_len_partial;
        cells.push_back(std::move(jc));
    }
    ojson j{{"cells", std::move(cells)}};

    // Unweighted means per dataset and overall.
    std::map<std::string, std::vector<const CellReport*>> by_dataset;
    std::vector<const CellReport*> all;
    for (const auto& c : report.cells) {
        by_dataset[c.dataset_id].push_back(&c);
        all.push_back(&c);
    }
    ojson means = ojson::object();
    auto mean_block = [](const std::vector<const CellReport*>& cells) {
        ojson m = ojson::object();
        for (const auto& name : signal_names()) m[name] = detail::mean_over(cells, name);
        double acc = 0.0, delta = 0.0;
        for (const auto* c : cells) {
            acc += c->accuracy_value;
            delta += c->delta;
        }
        m["accuracy"] = acc / static_cast<double>(cells.size());
        m["delta"] = delta / static_cast<double>(cells.size());
        return m;
    };
    for (const auto& [ds, cells] : by_dataset) means[ds] = mean_block(cells);
    if (!all.empty()) means["overall"] = mean_block(all);
    j["means"] = std::move(means);
    j["cost"] = cost_to_json(report.cost);
    return j;
}

inline EvalReport report_from_json(const ojson& j) {
    EvalReport report;
    auto num = [](const ojson& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
    for (const auto& jc : j.at("cells")) {
        CellReport c;
        jc.at("dataset_id").get_to(c.dataset_id);
        jc.at("model_id").get_to(c.model_id);
        jc.at("n").get_to(c.n);
        c.accuracy_value = num(jc.at("accuracy"));
        for (const auto& name : signal_names()) {
            const auto& js = jc.at("signals").at(name);
            SignalEval s;
            s.auroc_value = num(js.at("auroc"));
            s.ci_low = num(js.at("ci_low"));
            s.ci_high = num(js.at("ci_high"));
            js.at("n_used").get_to(s.n_used);
            c.signals[name] = s;
        }
        jc.at("verbalized_excluded").get_to(c.verbalized_excluded);
        c.delta = num(jc.at("delta"));
        const auto& counts = jc.at("paired_p_counts");
        const int b = counts.at("b").get<int>();
        auto pv = [&](const char* key) {
            PValue p;
            p.b = b;
            p.count = counts.at(key).get<int>();
            p.value = b > 0 ? static_cast<double>(p.count) / b : 1.0;
            return p;
        };
        c.p_vs_au_full = pv("vs_au_full");
        c.p_vs_sem_au = pv("vs_sem_au");
        c.p_vs_au_1w = pv("vs_au_1w");
        c.pearson_phi_sem = num(jc.at("pearson_phi_sem"));
        c.ensemble_gain_value = num(jc.at("ensemble_gain"));
        c.r_len = num(jc.at("r_len"));
        c.r_len_partial = num(jc.at("r_len_partial"));
        report.cells.push_back(std::move(c));
    }
    const auto& cost = j.at("cost");
    cost.at("greedy_decodes").get_to(report.cost.greedy_decodes);
    cost.at("sampled_decodes").get_to(report.cost.sampled_decodes);
    cost.at("verbalized_calls").get_to(report.cost.verbalized_calls);
    cost.at("judge_calls").get_to(report.cost.judge_calls);
    cost.at("nli_directional_calls").get_to(report.cost.nli_directional_calls);
    return report;
}

namespace detail {

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

}  // namespace detail

// Markdown rendering mirrors the result-table layout: AUROC table with the
// best signal per row bolded and a delta column, then the paired-test,
// subsumption, and length tables, then the cost ledger. AUROC uses 3
// decimals, correlations and accuracy 2.
inline std::string render_markdown(const EvalReport& report) {
    std::string md;
    md += "# Evaluation report\n\n";
    md += "## AUROC per cell\n\n";
    md += "| Dataset | Model | Verb. | AU-1w | AU-3w | AU-full | Sem. AU | phi_first | Delta | Acc. |\n";
    md += "|---|---|---|---|---|---|---|---|---|---|\n";

    auto auroc_row = [&](const std::string& a, const std::string& b,
                         const std::map<std::string, double>& vals, double delta, double acc) {
        // Bold the best value in the row.
        std::string best;
        double best_v = -1.0;
        for (const auto& name : signal_names()) {
            const double v = vals.at(name);
            if (!std::isnan(v) && v > best_v) {
                best_v = v;
                best = name;
            }
        }
        std::string row = "| " + a + " | " + b + " |";
        for (const auto& name : signal_names()) {
            std::string cell = detail::fmt(vals.at(name), 3);
            if (name == best) cell = "**" + cell + "**";
            row += " " + cell + " |";
        }
        row += " " + detail::fmt_signed(delta, 3) + " | " + detail::fmt(acc, 2) + " |\n";
        return row;
    };

    std::map<std::string, std::vector<const CellReport*>> by_dataset;
    std::vector<const CellReport*> all;
    for (const auto& c : report.cells) {
        by_dataset[c.dataset_id].push_back(&c);
        all.push_back(&c);
        std::map<std::string, double> vals;
        for (const auto& name : signal_names()) vals[name] = c.signals.at(name).auroc_value;
        md += auroc_row(c.dataset_id, c.model_id, vals, c.delta, c.accuracy_value);
    }
    auto mean_row = [&](const std::string& label, const std::vector<const CellReport*>& cells) {
        std::map<std::string, double> vals;
        for (const auto& name : signal_names()) vals[name] = detail::mean_over(cells, name);
        double acc = 0.0, delta = 0.0;
        for (const auto* c : cells) {
            acc += c->accuracy_value;
            delta += c->delta;
        }
        const double k = static_cast<double>(cells.size());
        md += auroc_row("*" + label + " mean*", "", vals, delta / k, acc / k);
    };
    if (by_dataset.size() > 1)
        for (const auto& [ds, cells] : by_dataset) mean_row(ds, cells);
    if (!all.empty()) mean_row("overall", all);

    md += "\n## 95% bootstrap confidence intervals\n\n";
    md += "| Dataset | Model |";
    for (const auto& name : signal_names()) md += " " + name + " |";
    md += "\n|---|---|";
    for (size_t i = 0; i < signal_names().size(); ++i) md += "---|";
    md += "\n";
    for (const auto& c : report.cells) {
        md += "| " + c.dataset_id + " | " + c.model_id + " |";
        for (const auto& name : signal_names()) {
            const auto& s = c.signals.at(name);
            if (std::isnan(s.auroc_value))
                md += " -- |";
            else
                md += " [" + detail::fmt(s.ci_low, 3) + ", " + detail::fmt(s.ci_high, 3) + "] |";
        }
        md += "\n";
    }

    md += "\n## Paired bootstrap tests (phi_first vs baseline, one-sided p)\n\n";
    md += "| Dataset | Model | vs AU-full | vs Sem. AU | vs AU-1w |\n|---|---|---|---|---|\n";
    for (const auto& c : report.cells) {
        md += "| " + c.dataset_id + " | " + c.model_id + " | " + c.p_vs_au_full.display() +
              " | " + c.p_vs_sem_au.display() + " | " + c.p_vs_au_1w.display() + " |\n";
    }

    md += "\n## Subsumption (phi_first vs semantic AU)\n\n";
    md += "| Dataset | Model | Pearson r | Ensemble gain |\n|---|---|---|---|\n";
    double r_sum = 0.0, g_sum = 0.0;
    for (const auto& c : report.cells) {
        md += "| " + c.dataset_id + " | " + c.model_id + " | " +
              detail::fmt(c.pearson_phi_sem, 2) + " | " +
              detail::fmt_signed(c.ensemble_gain_value, 3) + " |\n";
        r_sum += c.pearson_phi_sem;
        g_sum += c.ensemble_gain_value;
    }
    if (!report.cells.empty()) {
        const double k = static_cast<double>(report.cells.size());
        md += "| *mean* |  | " + detail::fmt(r_sum / k, 2) + " | " +
              detail::fmt_signed(g_sum / k, 3) + " |\n";
    }

    md += "\n## Length confound\n\n";
    md += "| Dataset | Model | r_len | partial r_len |\n|---|---|---|---|\n";
    for (const auto& c : report.cells) {
        md += "| " + c.dataset_id + " | " + c.model_id + " | " + detail::fmt(c.r_len, 2) +
              " | " + detail::fmt(c.r_len_partial, 2) + " |\n";
    }

    md += "\n## Verbalized-confidence exclusions\n\n";
    md += "| Dataset | Model | n | excluded |\n|---|---|---|---|\n";
    for (const auto& c : report.cells) {
        md += "| " + c.dataset_id + " | " + c.model_id + " | " + std::to_string(c.n) + " | " +
              std::to_string(c.verbalized_excluded) + " |\n";
    }

    md += "\n## Cost ledger\n\n";
    const auto& cost = report.cost;
    md += "| greedy decodes | sampled decodes | verbalized | judge | NLI directional |\n";
    md += "|---|---|---|---|---|\n";
    md += "| " + std::to_string(cost.greedy_decodes) + " | " + std::to_string(cost.sampled_decodes) +
          " | " + std::to_string(cost.verbalized_calls) + " | " + std::to_string(cost.judge_calls) +
          " | " + std::to_string(cost.nli_directional_calls) + " |\n";
    const long long full = cost.greedy_decodes + cost.sampled_decodes;
    if (full > 0 && cost.greedy_decodes > 0) {
        md += "\nDecode cost of the single-decode signal relative to the full sampling "
              "pipeline: " + std::to_string(cost.greedy_decodes) + ":" + std::to_string(full) +
              "\n";
    }
    return md;
}

inline std::string render_csv(const EvalReport& report) {
    std::string csv =
        "dataset_id,model_id,n,accuracy,verbalized,au_1w,au_3w,au_full,sem_au,phi_first,"
        "delta,p_vs_au_full,p_vs_sem_au,p_vs_au_1w,pearson_phi_sem,ensemble_gain,"
        "r_len,r_len_partial,verbalized_excluded\n";
    for (const auto& c : report.cells) {
        csv += c.dataset_id + "," + c.model_id + "," + std::to_string(c.n) + "," +
               detail::fmt(c.accuracy_value, 2);
        for (const auto& name : signal_names())
            csv += "," + detail::fmt(c.signals.at(name).auroc_value, 3);
        csv += "," + detail::fmt_signed(c.delta, 3);
        csv += "," + c.p_vs_au_full.display() + "," + c.p_vs_sem_au.display() + "," +
               c.p_vs_au_1w.display();
        csv += "," + detail::fmt(c.pearson_phi_sem, 2) + "," +
               detail::fmt_signed(c.ensemble_gain_value, 3);
        csv += "," + detail::fmt(c.r_len, 2) + "," + detail::fmt(c.r_len_partial, 2);
        csv += "," + std::to_string(c.verbalized_excluded) + "\n";
    }
    return csv;
}

enum class ReportFormat { Markdown, Csv, Json };

/// Writes <prefix>.md / .csv / .json; two renders of the same report are
/// byte-identical.
inline std::vector<std::string> render_report(const EvalReport& report, const std::string& prefix,
                                              const std::vector<ReportFormat>& formats = {
                                                  ReportFormat::Markdown, ReportFormat::Csv,
                                                  ReportFormat::Json}) {
    std::vector<std::string> written;
    for (ReportFormat f : formats) {
        switch (f) {
            case ReportFormat::Markdown:
                detail::write_file(prefix + ".md", render_markdown(report));
                written.push_back(prefix + ".md");
                break;
            case ReportFormat::Csv:
                detail::write_file(prefix + ".csv", render_csv(report));
                written.push_back(prefix + ".csv");
                break;
            case ReportFormat::Json:
                detail::write_file(prefix + ".json", report_to_json(report).dump(2) + "\n");
                written.push_back(prefix + ".json");
                break;
        }
    }
    return written;
}

}  // namespace confsig
