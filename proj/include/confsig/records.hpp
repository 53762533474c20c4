#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "confsig/error.hpp"
#include "confsig/hash.hpp"
#include "confsig/rng.hpp"

namespace confsig {

// All serialization goes through ordered_json so field order is fixed and
// output files are byte-deterministic.
using ojson = nlohmann::ordered_json;

struct QuestionRecord {
    std::string id;
    std::string question;
    std::vector<std::string> gold_aliases;
};

struct TokenLogprob {
    std::string token_text;
    double logprob = 0.0;  // natural log, <= 0
};

struct TokenStep {
    std::string token_text;
    std::vector<TokenLogprob> top_logprobs;  // descending by logprob
};

struct SamplingConfig {
    int n = 10;
    double temperature = 0.7;
    double top_p = 0.95;
    int max_tokens = 64;
    std::optional<long long> seed;
};

struct GenerationRecord {
    std::string question_id;
    std::string model_id;
    std::string greedy_text;
    std::vector<TokenStep> greedy_steps;
    std::vector<std::string> sample_texts;
    std::optional<std::string> verbalized_raw;
    SamplingConfig sampling;
};

struct JudgmentRecord {
    std::string question_id;
    bool correct = false;
    std::string judge_raw;
    std::string judge_model;
};

struct SignalRow {
    std::string question_id;
    double phi_first = 0.0;
    int first_token_index = 0;
    int effective_k = 0;
    bool fallback_used = false;
    double au_1w = 0.0;
    double au_3w = 0.0;
    double au_full = 0.0;
    double sem_au = 0.0;
    std::optional<int> verbalized;
    int answer_len_tokens = 0;
    bool correct = false;
};

struct RunManifest {
    std::string dataset_id;
    std::string dataset_split;
    int n = 0;
    long long sample_seed = 0;
    std::string model_id;
    std::string judge_model_id;
    std::string nli_model_id;
    SamplingConfig sampling;
    int k_top = 100;
    int bootstrap_b = 1000;
    std::string created_at;
    std::map<std::string, std::string> file_hashes;  // stage file -> content hash
};

// ---- JSON encodings (fixed key order) ----

inline ojson to_json(const QuestionRecord& r) {
    return ojson{{"id", r.id}, {"question", r.question}, {"gold_aliases", r.gold_aliases}};
}
inline void from_json(const ojson& j, QuestionRecord& r) {
    j.at("id").get_to(r.id);
    j.at("question").get_to(r.question);
    j.at("gold_aliases").get_to(r.gold_aliases);
    if (r.id.empty()) throw DataError("QuestionRecord with empty id");
    if (r.question.empty()) throw DataError("QuestionRecord " + r.id + " with empty question");
    if (r.gold_aliases.empty()) throw DataError("QuestionRecord " + r.id + " with no gold aliases");
}

inline ojson to_json(const SamplingConfig& s) {
    ojson j{{"n", s.n},
            {"temperature", s.temperature},
            {"top_p", s.top_p},
            {"max_tokens", s.max_tokens}};
    j["seed"] = s.seed ? ojson(*s.seed) : ojson(nullptr);
    return j;
}
inline void from_json(const ojson& j, SamplingConfig& s) {
    j.at("n").get_to(s.n);
    j.at("temperature").get_to(s.temperature);
    j.at("top_p").get_to(s.top_p);
    j.at("max_tokens").get_to(s.max_tokens);
    s.seed.reset();
    if (j.contains("seed") && !j["seed"].is_null()) s.seed = j["seed"].get<long long>();
    if (s.n < 1) throw DataError("sampling.n must be >= 1");
    if (!(s.top_p > 0.0 && s.top_p <= 1.0)) throw DataError("sampling.top_p out of (0,1]");
    if (s.temperature < 0.0) throw DataError("sampling.temperature negative");
}

inline ojson to_json(const TokenStep& s) {
    ojson lps = ojson::array();
    for (const auto& lp : s.top_logprobs)
        lps.push_back(ojson{{"token_text", lp.token_text}, {"logprob", lp.logprob}});
    return ojson{{"token_text", s.token_text}, {"top_logprobs", std::move(lps)}};
}
inline void from_json(const ojson& j, TokenStep& s) {
    j.at("token_text").get_to(s.token_text);
    s.top_logprobs.clear();
    for (const auto& e : j.at("top_logprobs"))
        s.top_logprobs.push_back({e.at("token_text").get<std::string>(), e.at("logprob").get<double>()});
}

inline ojson to_json(const GenerationRecord& r) {
    ojson steps = ojson::array();
    for (const auto& s : r.greedy_steps) steps.push_back(to_json(s));
    ojson j{{"question_id", r.question_id},
            {"model_id", r.model_id},
            {"greedy_text", r.greedy_text},
            {"greedy_steps", std::move(steps)},
            {"sample_texts", r.sample_texts}};
    j["verbalized_raw"] = r.verbalized_raw ? ojson(*r.verbalized_raw) : ojson(nullptr);
    j["sampling"] = to_json(r.sampling);
    return j;
}
inline void from_json(const ojson& j, GenerationRecord& r) {
    j.at("question_id").get_to(r.question_id);
    j.at("model_id").get_to(r.model_id);
    j.at("greedy_text").get_to(r.greedy_text);
    r.greedy_steps.clear();
    for (const auto& e : j.at("greedy_steps")) {
        TokenStep s;
        from_json(e, s);
        r.greedy_steps.push_back(std::move(s));
    }
    j.at("sample_texts").get_to(r.sample_texts);
    r.verbalized_raw.reset();
    if (j.contains("verbalized_raw") && !j["verbalized_raw"].is_null())
        r.verbalized_raw = j["verbalized_raw"].get<std::string>();
    from_json(j.at("sampling"), r.sampling);
    if (static_cast<int>(r.sample_texts.size()) != r.sampling.n)
        throw DataError("GenerationRecord " + r.question_id + ": sample_texts length != sampling.n");
    if (!r.greedy_text.empty() && r.greedy_steps.empty())
        throw DataError("GenerationRecord " + r.question_id + ": greedy text without steps");
}

inline ojson to_json(const JudgmentRecord& r) {
    return ojson{{"question_id", r.question_id},
                 {"correct", r.correct},
                 {"judge_raw", r.judge_raw},
                 {"judge_model", r.judge_model}};
}
inline void from_json(const ojson& j, JudgmentRecord& r) {
    j.at("question_id").get_to(r.question_id);
    j.at("correct").get_to(r.correct);
    j.at("judge_raw").get_to(r.judge_raw);
    j.at("judge_model").get_to(r.judge_model);
}

inline ojson to_json(const SignalRow& r) {
    ojson j{{"question_id", r.question_id},
            {"phi_first", r.phi_first},
            {"first_token_index", r.first_token_index},
            {"effective_k", r.effective_k},
            {"fallback_used", r.fallback_used},
            {"au_1w", r.au_1w},
            {"au_3w", r.au_3w},
            {"au_full", r.au_full},
            {"sem_au", r.sem_au}};
    j["verbalized"] = r.verbalized ? ojson(*r.verbalized) : ojson(nullptr);
    j["answer_len_tokens"] = r.answer_len_tokens;
    j["correct"] = r.correct;
    return j;
}
inline void from_json(const ojson& j, SignalRow& r) {
    j.at("question_id").get_to(r.question_id);
    j.at("phi_first").get_to(r.phi_first);
    j.at("first_token_index").get_to(r.first_token_index);
    j.at("effective_k").get_to(r.effective_k);
    j.at("fallback_used").get_to(r.fallback_used);
    j.at("au_1w").get_to(r.au_1w);
    j.at("au_3w").get_to(r.au_3w);
    j.at("au_full").get_to(r.au_full);
    j.at("sem_au").get_to(r.sem_au);
    r.verbalized.reset();
    if (j.contains("verbalized") && !j["verbalized"].is_null())
        r.verbalized = j["verbalized"].get<int>();
    j.at("answer_len_tokens").get_to(r.answer_len_tokens);
    j.at("correct").get_to(r.correct);
}

inline ojson to_json(const RunManifest& m) {
    ojson j{{"dataset_id", m.dataset_id},
            {"dataset_split", m.dataset_split},
            {"n", m.n},
            {"sample_seed", m.sample_seed},
            {"model_id", m.model_id},
            {"judge_model_id", m.judge_model_id},
            {"nli_model_id", m.nli_model_id},
            {"sampling", to_json(m.sampling)},
            {"k_top", m.k_top},
            {"bootstrap_b", m.bootstrap_b},
            {"created_at", m.created_at}};
    ojson hashes = ojson::object();
    for (const auto& [k, v] : m.file_hashes) hashes[k] = v;  // std::map is sorted
    j["file_hashes"] = std::move(hashes);
    return j;
}
inline void from_json(const ojson& j, RunManifest& m) {
    j.at("dataset_id").get_to(m.dataset_id);
    j.at("dataset_split").get_to(m.dataset_split);
    j.at("n").get_to(m.n);
    j.at("sample_seed").get_to(m.sample_seed);
    j.at("model_id").get_to(m.model_id);
    j.at("judge_model_id").get_to(m.judge_model_id);
    j.at("nli_model_id").get_to(m.nli_model_id);
    from_json(j.at("sampling"), m.sampling);
    j.at("k_top").get_to(m.k_top);
    j.at("bootstrap_b").get_to(m.bootstrap_b);
    j.at("created_at").get_to(m.created_at);
    m.file_hashes.clear();
    for (auto it = j.at("file_hashes").begin(); it != j.at("file_hashes").end(); ++it)
        m.file_hashes[it.key()] = it.value().get<std::string>();
    if (m.n <= 0) throw DataError("manifest n must be > 0");
}

// ---- JSONL I/O ----

template <typename T>
std::vector<T> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<T> out;
    std::set<std::string> seen_ids;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ojson j = ojson::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError(path + ": malformed JSON at line " + std::to_string(lineno));
        T rec;
        try {
            from_json(j, rec);
        } catch (const ojson::exception& e) {
            throw DataError(path + ": line " + std::to_string(lineno) + ": " + e.what());
        }
        if constexpr (requires { rec.id; }) {
            if (!seen_ids.insert(rec.id).second)
                throw DataError(path + ": duplicate id '" + rec.id + "' at line " +
                                std::to_string(lineno));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& records) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw DataError("cannot create parent directory for " + path);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw DataError("write failed: " + path);
}

template <typename T>
void append_jsonl(const std::string& path, const T& record) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to " + path);
    out << to_json(record).dump() << '\n';
    if (!out) throw DataError("write failed: " + path);
}

// ---- Seeded dataset sampling ----

// Selection is defined over the *sorted* id set, then a seeded shuffle, so
// the chosen subset depends only on (id set, n, seed) and not on source
// file order. Keeps the paired design across models and re-downloads.
inline std::vector<QuestionRecord> sample_dataset(const std::vector<QuestionRecord>& records,
                                                  int n, long long seed) {
    if (n < 0 || static_cast<size_t>(n) > records.size())
        throw DataError("sample size " + std::to_string(n) + " exceeds population " +
                        std::to_string(records.size()));
    std::map<std::string, const QuestionRecord*> by_id;
    for (const auto& r : records) {
        if (!by_id.emplace(r.id, &r).second) throw DataError("duplicate question id: " + r.id);
    }
    std::vector<std::string> ids;
    ids.reserve(by_id.size());
    for (const auto& [id, _] : by_id) ids.push_back(id);  // lexicographic
    Rng rng(static_cast<uint64_t>(seed));
    rng.shuffle(ids);
    std::vector<QuestionRecord> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(*by_id.at(ids[i]));
    return out;
}

// ---- Dataset adapters ----

// PopQA rows (HF test split export): {"id", "question", "possible_answers"}
// where possible_answers is a JSON-encoded list (sometimes a plain list).
inline std::vector<QuestionRecord> adapt_popqa(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<QuestionRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ojson j = ojson::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError(path + ": malformed JSON at line " + std::to_string(lineno));
        QuestionRecord q;
        const auto& id = j.at("id");
        q.id = id.is_string() ? id.get<std::string>() : std::to_string(id.get<long long>());
        q.question = j.at("question").get<std::string>();
        const auto& pa = j.at("possible_answers");
        ojson aliases = pa.is_string() ? ojson::parse(pa.get<std::string>()) : pa;
        for (const auto& a : aliases) q.gold_aliases.push_back(a.get<std::string>());
        if (q.gold_aliases.empty())
            throw DataError(path + ": line " + std::to_string(lineno) + ": no aliases");
        out.push_back(std::move(q));
    }
    return out;
}

// TriviaQA rows (HF validation split export):
// {"question_id", "question", "answer": {"aliases": [...], "value": ...}}
inline std::vector<QuestionRecord> adapt_triviaqa(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<QuestionRecord> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ojson j = ojson::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError(path + ": malformed JSON at line " + std::to_string(lineno));
        QuestionRecord q;
        q.id = j.at("question_id").get<std::string>();
        q.question = j.at("question").get<std::string>();
        const auto& ans = j.at("answer");
        for (const auto& a : ans.at("aliases")) q.gold_aliases.push_back(a.get<std::string>());
        if (q.gold_aliases.empty() && ans.contains("value"))
            q.gold_aliases.push_back(ans.at("value").get<std::string>());
        if (q.gold_aliases.empty())
            throw DataError(path + ": line " + std::to_string(lineno) + ": no aliases");
        out.push_back(std::move(q));
    }
    return out;
}

}  // namespace confsig
