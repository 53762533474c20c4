#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "confsig/error.hpp"
#include "confsig/hash.hpp"
#include "confsig/records.hpp"
#include "confsig/semantics.hpp"

namespace confsig {

struct EndpointConfig {
    std::string base_url;             // e.g. http://localhost:8000
    std::string model_id;
    std::string api_key_env;          // name of the env var holding the key, if any
    double timeout_seconds = 120.0;
    int max_retries = 3;
    int max_in_flight = 4;
    double requests_per_second = 0.0;  // 0 = uncapped
};

namespace detail {

class Semaphore {
public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire() {
        std::unique_lock lk(m_);
        cv_.wait(lk, [&] { return count_ > 0; });
        --count_;
    }
    void release() {
        {
            std::lock_guard lk(m_);
            ++count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex m_;
    std::condition_variable cv_;
    int count_;
};

struct SemaphoreGuard {
    Semaphore& s;
    explicit SemaphoreGuard(Semaphore& sem) : s(sem) { s.acquire(); }
    ~SemaphoreGuard() { s.release(); }
};

}  // namespace detail

// One content-addressed file per response. The key hashes the full request
// body (plus model id), so any prompt or parameter change misses cleanly.
class ResponseCache {
public:
    explicit ResponseCache(std::string dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::optional<std::string> get(const std::string& key) const {
        std::ifstream in(path_for(key), std::ios::binary);
        if (!in) return std::nullopt;
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void put(const std::string& key, const std::string& value) {
        std::lock_guard lk(write_mutex_);
        const std::string tmp = path_for(key) + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw DataError("cannot write cache file " + tmp);
            out << value;
        }
        std::filesystem::rename(tmp, path_for(key));
    }

private:
    std::string path_for(const std::string& key) const { return dir_ + "/" + key + ".json"; }

    std::string dir_;
    std::mutex write_mutex_;
};

// POSTs JSON with retries (exponential backoff + deterministic jitter),
// a per-endpoint in-flight cap, and an optional request-rate cap. In
// offline mode any cache miss is an error.
class HttpJsonEndpoint {
public:
    HttpJsonEndpoint(EndpointConfig cfg, ResponseCache& cache, bool offline = false)
        : cfg_(std::move(cfg)),
          cache_(cache),
          offline_(offline),
          semaphore_(std::max(1, cfg_.max_in_flight)) {}

    const EndpointConfig& config() const { return cfg_; }
    int network_calls() const { return network_calls_.load(); }
    int peak_in_flight() const { return peak_in_flight_.load(); }

    ojson post_cached(const std::string& path, const ojson& body,
                      const std::string& key_suffix = "") {
        const std::string body_str = body.dump();
        const std::string key = content_hash(cfg_.model_id + "|" + path + "|" + body_str +
                                             "|" + key_suffix);
        if (auto hit = cache_.get(key)) return ojson::parse(*hit);
        if (offline_)
            throw ServiceError("offline mode: cache miss for " + path + " (key " + key + ")");
        const std::string resp = post_raw(path, body_str);
        // Parse before caching so a malformed response is never persisted.
        ojson parsed = ojson::parse(resp, nullptr, false);
        if (parsed.is_discarded())
            throw ServiceError(cfg_.base_url + path + ": response is not JSON");
        cache_.put(key, parsed.dump());
        return parsed;
    }

private:
    std::string post_raw(const std::string& path, const std::string& body) {
        detail::SemaphoreGuard guard(semaphore_);
        const int now_in_flight = ++in_flight_;
        int peak = peak_in_flight_.load();
        while (now_in_flight > peak && !peak_in_flight_.compare_exchange_weak(peak, now_in_flight)) {
        }
        struct Dec {
            std::atomic<int>& v;
            ~Dec() { --v; }
        } dec{in_flight_};

        rate_limit_wait();
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) backoff_sleep(attempt, body);
            ++network_calls_;
            httplib::Client cli(cfg_.base_url);
            cli.set_read_timeout(std::chrono::milliseconds(
                static_cast<long long>(cfg_.timeout_seconds * 1000)));
            cli.set_connection_timeout(std::chrono::milliseconds(
                static_cast<long long>(cfg_.timeout_seconds * 1000)));
            httplib::Headers headers;
            if (!cfg_.api_key_env.empty()) {
                if (const char* key = std::getenv(cfg_.api_key_env.c_str()))
                    headers.emplace("Authorization", std::string("Bearer ") + key);
            }
            auto res = cli.Post(path, headers, body, "application/json");
            if (!res) {
                last_error = "connection error (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status >= 500 || res->status == 429) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw ServiceError(cfg_.base_url + path + ": HTTP " +
                                   std::to_string(res->status) + ": " + res->body);
            return res->body;
        }
        throw ServiceError(cfg_.base_url + path + ": " + last_error + " after " +
                           std::to_string(cfg_.max_retries + 1) + " attempts");
    }

    void rate_limit_wait() {
        if (cfg_.requests_per_second <= 0.0) return;
        const auto interval = std::chrono::duration<double>(1.0 / cfg_.requests_per_second);
        std::unique_lock lk(rate_mutex_);
        const auto now = std::chrono::steady_clock::now();
        if (now < next_allowed_) {
            const auto wait = next_allowed_ - now;
            next_allowed_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval);
            lk.unlock();
            std::this_thread::sleep_for(wait);
        } else {
            next_allowed_ = now + std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval);
        }
    }

    void backoff_sleep(int attempt, const std::string& body) {
        // Deterministic jitter derived from the request body.
        const double jitter = static_cast<double>(fnv1a64(body) % 1000) / 1000.0;
        const double seconds = std::min(30.0, 0.25 * (1 << (attempt - 1)) * (1.0 + jitter));
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    }

    EndpointConfig cfg_;
    ResponseCache& cache_;
    bool offline_;
    detail::Semaphore semaphore_;
    std::atomic<int> network_calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_in_flight_{0};
    std::mutex rate_mutex_;
    std::chrono::steady_clock::time_point next_allowed_ = std::chrono::steady_clock::now();
};

struct PromptTemplates {
    std::string answer_prompt =
        "Answer the following question with a short factual answer.\n"
        "Question: {question}\nAnswer:";
    std::string verbalized_prompt =
        "Question: {question}\n"
        "How confident are you that you can answer this question correctly? "
        "Respond with a single integer from 0 to 100 and nothing else.";
};

struct JudgePrompt {
    std::string template_text =
        "You are grading a question-answering system.\n"
        "Question: {question}\n"
        "Gold answers (any counts as correct): {gold_aliases}\n"
        "Model answer: {answer}\n"
        "Does the model answer match any gold answer? "
        "Reply with exactly one word: CORRECT or INCORRECT.";
    std::string correct_token = "CORRECT";
    std::string incorrect_token = "INCORRECT";

    void validate() const {
        for (const char* ph : {"{question}", "{answer}", "{gold_aliases}"})
            if (template_text.find(ph) == std::string::npos)
                throw ConfigError(std::string("judge prompt missing placeholder ") + ph);
    }
};

namespace detail {

inline std::string fill_placeholder(std::string s, const std::string& name,
                                    const std::string& value) {
    const std::string ph = "{" + name + "}";
    size_t pos;
    while ((pos = s.find(ph)) != std::string::npos) s.replace(pos, ph.size(), value);
    return s;
}

}  // namespace detail

// OpenAI-style chat-completion client for the evaluated model: greedy decode
// with per-token top-K logprobs, temperature/top-p sampling, and the
// verbalized-confidence probe.
class GenerationClient {
public:
    GenerationClient(HttpJsonEndpoint& endpoint, PromptTemplates prompts = {})
        : endpoint_(endpoint), prompts_(std::move(prompts)) {}

    std::pair<std::string, std::vector<TokenStep>> generate_greedy(const std::string& question,
                                                                   int k_top, int max_tokens) {
        ojson body = chat_body(detail::fill_placeholder(prompts_.answer_prompt, "question", question));
        body["temperature"] = 0.0;
        body["max_tokens"] = max_tokens;
        body["logprobs"] = true;
        body["top_logprobs"] = k_top;
        const ojson resp = endpoint_.post_cached("/v1/chat/completions", body);
        return parse_with_logprobs(resp);
    }

    std::vector<std::string> generate_samples(const std::string& question,
                                              const SamplingConfig& sampling) {
        if (sampling.n < 1) throw ConfigError("generate_samples: sampling.n must be >= 1");
        ojson body = chat_body(detail::fill_placeholder(prompts_.answer_prompt, "question", question));
        body["temperature"] = sampling.temperature;
        body["top_p"] = sampling.top_p;
        body["max_tokens"] = sampling.max_tokens;
        if (sampling.seed) body["seed"] = *sampling.seed;
        std::vector<std::string> texts;
        texts.reserve(sampling.n);
        for (int i = 0; i < sampling.n; ++i) {
            ojson b = body;
            b["sample_index"] = i;  // distinct cache key and server-side stream per index
            const ojson resp = endpoint_.post_cached("/v1/chat/completions", b,
                                                     "sample:" + std::to_string(i));
            texts.push_back(message_content(resp));
        }
        return texts;
    }

    std::string ask_verbalized(const std::string& question) {
        ojson body =
            chat_body(detail::fill_placeholder(prompts_.verbalized_prompt, "question", question));
        body["temperature"] = 0.0;
        body["max_tokens"] = 16;
        const ojson resp = endpoint_.post_cached("/v1/chat/completions", body);
        return message_content(resp);
    }

private:
    ojson chat_body(const std::string& user_content) const {
        return ojson{{"model", endpoint_.config().model_id},
                     {"messages", ojson::array({ojson{{"role", "user"}, {"content", user_content}}})}};
    }

    static std::string message_content(const ojson& resp) {
        try {
            return resp.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const ojson::exception&) {
            throw ServiceError("malformed chat completion response: " + resp.dump());
        }
    }

    std::pair<std::string, std::vector<TokenStep>> parse_with_logprobs(const ojson& resp) {
        const std::string text = message_content(resp);
        const auto& choice = resp.at("choices").at(0);
        if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
            !choice["logprobs"].contains("content"))
            throw ServiceError("logprobs unavailable: provider did not return token logprobs");
        std::vector<TokenStep> steps;
        for (const auto& entry : choice["logprobs"]["content"]) {
            TokenStep step;
            step.token_text = entry.at("token").get<std::string>();
            for (const auto& lp : entry.at("top_logprobs"))
                step.top_logprobs.push_back(
                    {lp.at("token").get<std::string>(), lp.at("logprob").get<double>()});
            std::stable_sort(step.top_logprobs.begin(), step.top_logprobs.end(),
                             [](const TokenLogprob& a, const TokenLogprob& b) {
                                 return a.logprob > b.logprob;
                             });
            steps.push_back(std::move(step));
        }
        return {text, std::move(steps)};
    }

    HttpJsonEndpoint& endpoint_;
    PromptTemplates prompts_;
};

class JudgeClient {
public:
    JudgeClient(HttpJsonEndpoint& endpoint, JudgePrompt prompt = {})
        : endpoint_(endpoint), prompt_(std::move(prompt)) {
        prompt_.validate();
    }

    JudgmentRecord judge(const std::string& question_id, const std::string& question,
                         const std::string& answer, const std::vector<std::string>& gold_aliases) {
        JudgmentRecord rec;
        rec.question_id = question_id;
        rec.judge_model = endpoint_.config().model_id;
        if (answer.empty()) {
            rec.correct = false;
            rec.judge_raw = "(empty answer, auto-judged incorrect)";
            return rec;
        }
        std::string aliases;
        for (size_t i = 0; i < gold_aliases.size(); ++i) {
            if (i) aliases += "; ";
            aliases += gold_aliases[i];
        }
        std::string filled = prompt_.template_text;
        filled = detail::fill_placeholder(filled, "question", question);
        filled = detail::fill_placeholder(filled, "answer", answer);
        filled = detail::fill_placeholder(filled, "gold_aliases", aliases);

        std::string raw = ask(filled);
        auto verdict = parse_verdict(raw);
        if (!verdict) {
            // One retry with a stricter instruction before giving up.
            raw = ask(filled + "\nYour previous reply was not parseable. Reply with exactly "
                               "one word: CORRECT or INCORRECT.");
            verdict = parse_verdict(raw);
            if (!verdict)
                throw ServiceError("judge verdict unparsable for question " + question_id +
                                   "; raw output: " + raw);
        }
        rec.correct = *verdict;
        rec.judge_raw = raw;
        return rec;
    }

private:
    std::string ask(const std::string& content) {
        ojson body{{"model", endpoint_.config().model_id},
                   {"messages", ojson::array({ojson{{"role", "user"}, {"content", content}}})},
                   {"temperature", 0.0},
                   {"max_tokens", 8}};
        const ojson resp = endpoint_.post_cached("/v1/chat/completions", body);
        try {
            return resp.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const ojson::exception&) {
            throw ServiceError("malformed judge response: " + resp.dump());
        }
    }

    std::optional<bool> parse_verdict(const std::string& raw) const {
        // INCORRECT contains CORRECT, so it must be checked first.
        if (raw.find(prompt_.incorrect_token) != std::string::npos) return false;
        if (raw.find(prompt_.correct_token) != std::string::npos) return true;
        return std::nullopt;
    }

    HttpJsonEndpoint& endpoint_;
    JudgePrompt prompt_;
};

// Remote NLI scorer speaking a minimal {premise, hypothesis} -> three-prob
// JSON contract. Responses are cached by the endpoint; an optional JSONL
// replay log mirrors every judgment for offline auditing.
class RemoteNliScorer : public NliScorer {
public:
    explicit RemoteNliScorer(HttpJsonEndpoint& endpoint, std::string replay_log_path = "")
        : endpoint_(endpoint), replay_log_path_(std::move(replay_log_path)) {}

    EntailmentJudgment score(const std::string& premise, const std::string& hypothesis) override {
        if (premise.empty() || hypothesis.empty())
            throw DataError("nli_score: empty premise or hypothesis");
        ojson body{{"model", endpoint_.config().model_id},
                   {"premise", premise},
                   {"hypothesis", hypothesis}};
        const ojson resp = endpoint_.post_cached("/v1/nli", body);
        EntailmentJudgment j;
        j.premise = premise;
        j.hypothesis = hypothesis;
        try {
            j.p_entail = resp.at("p_entail").get<double>();
            j.p_neutral = resp.at("p_neutral").get<double>();
            j.p_contradict = resp.at("p_contradict").get<double>();
        } catch (const ojson::exception&) {
            throw ServiceError("malformed NLI response: " + resp.dump());
        }
        const double sum = j.p_entail + j.p_neutral + j.p_contradict;
        if (sum <= 0.0) throw ServiceError("NLI response with non-positive probability mass");
        if (std::fabs(sum - 1.0) > 1e-3) {
            std::fprintf(stderr, "warning: NLI probabilities sum to %.6f, renormalizing\n", sum);
        }
        if (std::fabs(sum - 1.0) > 1e-12) {
            j.p_entail /= sum;
            j.p_neutral /= sum;
            j.p_contradict /= sum;
        }
        maybe_log(j);
        return j;
    }

private:
    void maybe_log(const EntailmentJudgment& j) {
        if (replay_log_path_.empty()) return;
        std::lock_guard lk(log_mutex_);
        std::ofstream out(replay_log_path_, std::ios::app);
        ojson rec{{"premise_hash", content_hash(j.premise)},
                  {"hypothesis_hash", content_hash(j.hypothesis)},
                  {"p_entail", j.p_entail},
                  {"p_neutral", j.p_neutral},
                  {"p_contradict", j.p_contradict},
                  {"model_id", endpoint_.config().model_id}};
        out << rec.dump() << '\n';
    }

    HttpJsonEndpoint& endpoint_;
    std::string replay_log_path_;
    std::mutex log_mutex_;
};

}  // namespace confsig
