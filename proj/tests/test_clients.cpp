#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <thread>

#include "confsig/clients.hpp"
#include "support/stub_server.hpp"

using namespace confsig;

namespace {

std::string fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "confsig_test_clients" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

EndpointConfig endpoint_for(const stub::StubServer& server, const std::string& model = "stub-model") {
    EndpointConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model_id = model;
    cfg.max_retries = 0;
    cfg.max_in_flight = 4;
    cfg.timeout_seconds = 10.0;
    return cfg;
}

}  // namespace

TEST_CASE("greedy generation parses token logprobs and caches") {
    stub::StubServer server;
    ResponseCache cache(fresh_dir("greedy"));
    HttpJsonEndpoint ep(endpoint_for(server), cache);
    GenerationClient client(ep);

    auto [text, steps] = client.generate_greedy("What is the capital?", 100, 32);
    CHECK(text == stub::greedy_answer_for("What is the capital?"));
    REQUIRE_FALSE(steps.empty());
    CHECK(steps[0].top_logprobs.size() == 20);  // provider truncation to 20
    // sorted non-increasing
    for (size_t i = 1; i < steps[0].top_logprobs.size(); ++i)
        CHECK(steps[0].top_logprobs[i - 1].logprob >= steps[0].top_logprobs[i].logprob);

    const int calls_before = server.requests_served();
    auto [text2, steps2] = client.generate_greedy("What is the capital?", 100, 32);
    CHECK(text2 == text);
    CHECK(server.requests_served() == calls_before);  // served from cache
}

TEST_CASE("missing logprobs is an error") {
    stub::StubServer server;
    server.set_omit_logprobs(true);
    ResponseCache cache(fresh_dir("nolp"));
    HttpJsonEndpoint ep(endpoint_for(server), cache);
    GenerationClient client(ep);
    CHECK_THROWS_WITH_AS(client.generate_greedy("q", 100, 32),
                         doctest::Contains("logprobs unavailable"), ServiceError);
}

TEST_CASE("samples come back in index order and cache per index") {
    stub::StubServer server;
    ResponseCache cache(fresh_dir("samples"));
    HttpJsonEndpoint ep(endpoint_for(server), cache);
    GenerationClient client(ep);
    SamplingConfig sampling;
    sampling.n = 10;
    const auto texts = client.generate_samples("Some question?", sampling);
    REQUIRE(texts.size() == 10);
    const int before = server.requests_served();
    const auto texts2 = client.generate_samples("Some question?", sampling);
    CHECK(texts2 == texts);
    CHECK(server.requests_served() == before);

    sampling.n = 0;
    CHECK_THROWS_AS(client.generate_samples("q", sampling), ConfigError);
}

TEST_CASE("verbalized probe returns raw text") {
    stub::StubServer server;
    ResponseCache cache(fresh_dir("verb"));
    HttpJsonEndpoint ep(endpoint_for(server), cache);
    GenerationClient client(ep);
    const std::string raw = client.ask_verbalized("Some question?");
    CHECK(raw == std::to_string(stub::verbalized_for("Some question?")));
}

TEST_CASE("offline mode errors on cache miss and works on warm cache") {
    stub::StubServer server;
    const std::string dir = fresh_dir("offline");
    {
        ResponseCache cache(dir);
        HttpJsonEndpoint ep(endpoint_for(server), cache);
        GenerationClient client(ep);
        client.ask_verbalized("warm question");
    }
    ResponseCache cache(dir);
    HttpJsonEndpoint ep(endpoint_for(server), cache, /*offline=*/true);
    GenerationClient client(ep);
    CHECK(client.ask_verbalized("warm question") ==
          std::to_string(stub::verbalized_for("warm question")));
    CHECK_THROWS_WITH_AS(client.ask_verbalized("cold question"), doctest::Contains("offline"),
                         ServiceError);
}

TEST_CASE("judge maps verdicts and skips the call for empty answers") {
    stub::StubServer server;
    ResponseCache cache(fresh_dir("judge"));
    HttpJsonEndpoint ep(endpoint_for(server, "stub-judge"), cache);
    JudgeClient client(ep);

    const auto correct = client.judge("q1", "capital?", "alpha", {"alpha", "beta"});
    CHECK(correct.correct);
    const auto wrong = client.judge("q2", "capital?", "omega", {"alpha"});
    CHECK_FALSE(wrong.correct);

    const int before = server.requests_served();
    const auto empty = client.judge("q3", "capital?", "", {"alpha"});
    CHECK_FALSE(empty.correct);
    CHECK(server.requests_served() == before);  // no network call
}

TEST_CASE("judge prompt must contain all placeholders") {
    stub::StubServer server;
    ResponseCache cache(fresh_dir("judgebad"));
    HttpJsonEndpoint ep(endpoint_for(server), cache);
    JudgePrompt bad;
    bad.template_text = "just {question} and {answer}";
    CHECK_THROWS_AS(JudgeClient(ep, bad), ConfigError);
}

TEST_CASE("nli scorer parses and renormalizes probabilities") {
    stub::StubServer server;
    ResponseCache cache(fresh_dir("nli"));
    HttpJsonEndpoint ep(endpoint_for(server, "stub-nli"), cache);
    RemoteNliScorer scorer(ep);

    const auto j = scorer.score("q alpha", "q alpha");
    CHECK(j.entail_is_argmax());
    CHECK(j.p_entail + j.p_neutral + j.p_contradict == doctest::Approx(1.0).epsilon(1e-9));

    const int before = server.requests_served();
    scorer.score("q alpha", "q alpha");
    CHECK(server.requests_served() == before);  // cached pair
}

TEST_CASE("nli probabilities off by more than tolerance are renormalized") {
    stub::StubServer server;
    server.set_nli_prob_sum(0.98);
    ResponseCache cache(fresh_dir("nli98"));
    HttpJsonEndpoint ep(endpoint_for(server, "stub-nli"), cache);
    RemoteNliScorer scorer(ep);
    const auto j = scorer.score("q alpha", "q beta");
    CHECK(j.p_entail + j.p_neutral + j.p_contradict == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("in-flight requests never exceed the configured cap") {
    stub::StubServer server;
    server.set_handler_delay_ms(30);
    ResponseCache cache(fresh_dir("conc"));
    EndpointConfig cfg = endpoint_for(server);
    cfg.max_in_flight = 3;
    HttpJsonEndpoint ep(cfg, cache);
    GenerationClient client(ep);

    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i)
        threads.emplace_back([&client, i] {
            client.ask_verbalized("concurrent question " + std::to_string(i));
        });
    for (auto& t : threads) t.join();
    CHECK(server.peak_concurrency() <= 3);
    CHECK(ep.peak_in_flight() <= 3);
    CHECK(server.requests_served() == 12);
}

TEST_CASE("unreachable endpoint errors after retries") {
    ResponseCache cache(fresh_dir("down"));
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";  // nothing listens here
    cfg.model_id = "m";
    cfg.max_retries = 1;
    cfg.timeout_seconds = 1.0;
    HttpJsonEndpoint ep(cfg, cache);
    GenerationClient client(ep);
    CHECK_THROWS_AS(client.ask_verbalized("q"), ServiceError);
    CHECK(ep.network_calls() == 2);  // initial attempt + one retry
}
