#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "confsig/clients.hpp"
#include "confsig/error.hpp"
#include "confsig/records.hpp"
#include "confsig/semantics.hpp"
#include "confsig/signals.hpp"
#include "confsig/stats.hpp"
#include "confsig/text.hpp"

namespace confsig {

struct DatasetConfig {
    std::string id;
    std::string split;
    std::string path;
    std::string adapter = "questions";  // questions | popqa | triviaqa
};

struct CellConfig {
    std::string dataset_id;
    std::string model_id;
    std::string signals_path;
    std::string run_dir;  // alternative to signals_path: <run_dir>/signals.jsonl
};

struct Config {
    std::string run_dir = "run";
    std::string cache_dir = "cache";
    bool offline = false;

    DatasetConfig dataset;
    int sample_n = 1000;
    long long sample_seed = 1234;

    EndpointConfig model;
    EndpointConfig judge;
    EndpointConfig nli;

    SamplingConfig sampling;
    int k_top = 100;
    BootstrapConfig bootstrap;

    NormalizationRules normalization;
    std::vector<std::string> skip_prefixes = default_skip_prefixes();
    EntailmentConfig entailment;

    PromptTemplates prompts;
    JudgePrompt judge_prompt;

    std::vector<CellConfig> cells;
    std::string report_prefix = "report";
};

namespace detail {

inline void load_endpoint(const ojson& j, EndpointConfig& e) {
    if (j.contains("base_url")) j.at("base_url").get_to(e.base_url);
    if (j.contains("model_id")) j.at("model_id").get_to(e.model_id);
    if (j.contains("api_key_env")) j.at("api_key_env").get_to(e.api_key_env);
    if (j.contains("timeout_seconds")) j.at("timeout_seconds").get_to(e.timeout_seconds);
    if (j.contains("max_retries")) j.at("max_retries").get_to(e.max_retries);
    if (j.contains("max_in_flight")) j.at("max_in_flight").get_to(e.max_in_flight);
    if (j.contains("requests_per_second")) j.at("requests_per_second").get_to(e.requests_per_second);
    if (e.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (e.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
}

}  // namespace detail

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    ojson j = ojson::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);

    Config c;
    try {
        if (j.contains("run_dir")) j.at("run_dir").get_to(c.run_dir);
        if (j.contains("cache_dir")) j.at("cache_dir").get_to(c.cache_dir);
        if (j.contains("offline")) j.at("offline").get_to(c.offline);
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            if (d.contains("id")) d.at("id").get_to(c.dataset.id);
            if (d.contains("split")) d.at("split").get_to(c.dataset.split);
            if (d.contains("path")) d.at("path").get_to(c.dataset.path);
            if (d.contains("adapter")) d.at("adapter").get_to(c.dataset.adapter);
        }
        if (j.contains("sample")) {
            const auto& s = j["sample"];
            if (s.contains("n")) s.at("n").get_to(c.sample_n);
            if (s.contains("seed")) s.at("seed").get_to(c.sample_seed);
        }
        if (j.contains("model")) detail::load_endpoint(j["model"], c.model);
        if (j.contains("judge")) detail::load_endpoint(j["judge"], c.judge);
        if (j.contains("nli")) detail::load_endpoint(j["nli"], c.nli);
        if (j.contains("sampling")) from_json(j["sampling"], c.sampling);
        if (j.contains("k_top")) j.at("k_top").get_to(c.k_top);
        if (j.contains("bootstrap")) {
            const auto& b = j["bootstrap"];
            if (b.contains("b")) b.at("b").get_to(c.bootstrap.b);
            if (b.contains("seed")) b.at("seed").get_to(c.bootstrap.seed);
            if (b.contains("ci_level")) b.at("ci_level").get_to(c.bootstrap.ci_level);
        }
        if (j.contains("normalization")) {
            const auto& nm = j["normalization"];
            auto flag = [&](const char* key, bool& v) {
                if (nm.contains(key)) nm.at(key).get_to(v);
            };
            flag("lowercase", c.normalization.lowercase);
            flag("compat_fold", c.normalization.compat_fold);
            flag("strip_punctuation", c.normalization.strip_punctuation);
            flag("collapse_whitespace", c.normalization.collapse_whitespace);
            flag("drop_leading_articles", c.normalization.drop_leading_articles);
        }
        if (j.contains("skip_prefixes")) j.at("skip_prefixes").get_to(c.skip_prefixes);
        if (j.contains("entailment")) {
            const auto& e = j["entailment"];
            if (e.contains("decision")) {
                const std::string d = e.at("decision").get<std::string>();
                if (d == "argmax")
                    c.entailment.decision = EntailmentDecision::Argmax;
                else if (d == "threshold")
                    c.entailment.decision = EntailmentDecision::Threshold;
                else
                    throw ConfigError("entailment.decision must be 'argmax' or 'threshold'");
            }
            if (e.contains("threshold")) e.at("threshold").get_to(c.entailment.threshold);
        }
        if (j.contains("prompts")) {
            const auto& p = j["prompts"];
            if (p.contains("answer")) p.at("answer").get_to(c.prompts.answer_prompt);
            if (p.contains("verbalized")) p.at("verbalized").get_to(c.prompts.verbalized_prompt);
            if (p.contains("judge")) p.at("judge").get_to(c.judge_prompt.template_text);
        }
        if (j.contains("cells")) {
            for (const auto& cell : j["cells"]) {
                CellConfig cc;
                cell.at("dataset_id").get_to(cc.dataset_id);
                cell.at("model_id").get_to(cc.model_id);
                if (cell.contains("signals_path")) cell.at("signals_path").get_to(cc.signals_path);
                if (cell.contains("run_dir")) cell.at("run_dir").get_to(cc.run_dir);
                if (cc.signals_path.empty() && cc.run_dir.empty())
                    throw ConfigError("cell needs signals_path or run_dir");
                if (cc.signals_path.empty()) cc.signals_path = cc.run_dir + "/signals.jsonl";
                c.cells.push_back(std::move(cc));
            }
        }
        if (j.contains("report_prefix")) j.at("report_prefix").get_to(c.report_prefix);
    } catch (const ojson::exception& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
    if (c.sample_n <= 0) throw ConfigError("sample.n must be > 0");
    if (c.k_top < 2) throw ConfigError("k_top must be >= 2");
    c.judge_prompt.validate();
    return c;
}

}  // namespace confsig
