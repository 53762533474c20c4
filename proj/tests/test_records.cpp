#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "confsig/records.hpp"
#include "confsig/rng.hpp"

using namespace confsig;

namespace {

std::string tmp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "confsig_test_records";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

GenerationRecord random_generation(Rng& rng, int idx) {
    GenerationRecord g;
    g.question_id = "q" + std::to_string(idx);
    g.model_id = "m";
    g.greedy_text = "answer " + std::to_string(rng.bounded(1000));
    const int steps = 1 + static_cast<int>(rng.bounded(5));
    for (int s = 0; s < steps; ++s) {
        TokenStep step;
        step.token_text = "t" + std::to_string(rng.bounded(50));
        const int k = 1 + static_cast<int>(rng.bounded(4));
        double lp = -0.01;
        for (int i = 0; i < k; ++i) {
            step.top_logprobs.push_back({"c" + std::to_string(i), lp});
            lp -= rng.uniform() * 3.0;
        }
        g.greedy_steps.push_back(std::move(step));
    }
    g.sampling.n = 3;
    for (int i = 0; i < 3; ++i) g.sample_texts.push_back("s" + std::to_string(rng.bounded(10)));
    if (rng.bounded(2)) g.verbalized_raw = std::to_string(rng.bounded(101));
    if (rng.bounded(2)) g.sampling.seed = static_cast<long long>(rng.bounded(1000));
    return g;
}

}  // namespace

TEST_CASE("jsonl read preserves order and count") {
    const std::string path = tmp_path("q3.jsonl");
    std::vector<QuestionRecord> qs = {{"a", "qa?", {"x"}}, {"b", "qb?", {"y", "z"}}, {"c", "qc?", {"w"}}};
    write_jsonl(path, qs);
    const auto back = read_jsonl<QuestionRecord>(path);
    REQUIRE(back.size() == 3);
    CHECK(back[0].id == "a");
    CHECK(back[2].gold_aliases == std::vector<std::string>{"w"});
}

TEST_CASE("empty file yields empty list") {
    const std::string path = tmp_path("empty.jsonl");
    std::ofstream(path).close();
    CHECK(read_jsonl<QuestionRecord>(path).empty());
}

TEST_CASE("truncated line reports its line number") {
    const std::string path = tmp_path("bad.jsonl");
    std::ofstream out(path);
    out << R"({"id":"a","question":"q","gold_aliases":["x"]})" << "\n";
    out << R"({"id":"b","question":)" << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(read_jsonl<QuestionRecord>(path), doctest::Contains("line 2"), DataError);
}

TEST_CASE("duplicate ids rejected") {
    const std::string path = tmp_path("dup.jsonl");
    std::ofstream out(path);
    out << R"({"id":"a","question":"q","gold_aliases":["x"]})" << "\n";
    out << R"({"id":"a","question":"q2","gold_aliases":["y"]})" << "\n";
    out.close();
    CHECK_THROWS_AS(read_jsonl<QuestionRecord>(path), DataError);
}

TEST_CASE("generation record round-trip and byte determinism") {
    Rng rng(7);
    std::vector<GenerationRecord> recs;
    for (int i = 0; i < 100; ++i) recs.push_back(random_generation(rng, i));
    const std::string path = tmp_path("gen.jsonl");
    write_jsonl(path, recs);
    const auto back = read_jsonl<GenerationRecord>(path);
    REQUIRE(back.size() == recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        CHECK(to_json(back[i]).dump() == to_json(recs[i]).dump());
    }
    const std::string h1 = file_hash(path);
    write_jsonl(path, back);
    CHECK(file_hash(path) == h1);
}

TEST_CASE("unwritable path errors with the path in the message") {
    CHECK_THROWS_WITH_AS(write_jsonl("/proc/nonexistent/x.jsonl", std::vector<QuestionRecord>{}),
                         doctest::Contains("/proc/nonexistent"), DataError);
}

TEST_CASE("sample_dataset determinism and seed sensitivity") {
    std::vector<QuestionRecord> pop;
    for (int i = 0; i < 10000; ++i)
        pop.push_back({"id" + std::to_string(i), "q" + std::to_string(i), {"a"}});

    const auto s1 = sample_dataset(pop, 1000, 1);
    const auto s1b = sample_dataset(pop, 1000, 1);
    REQUIRE(s1.size() == 1000);
    for (size_t i = 0; i < s1.size(); ++i) CHECK(s1[i].id == s1b[i].id);

    const auto s2 = sample_dataset(pop, 1000, 2);
    std::set<std::string> ids1, ids2;
    for (const auto& q : s1) ids1.insert(q.id);
    for (const auto& q : s2) ids2.insert(q.id);
    size_t overlap = 0;
    for (const auto& id : ids1) overlap += ids2.count(id);
    CHECK(overlap < 1000);  // different seeds pick different subsets
}

TEST_CASE("sample_dataset: n equals population returns a permutation") {
    std::vector<QuestionRecord> pop = {{"b", "q", {"a"}}, {"a", "q", {"a"}}, {"c", "q", {"a"}}};
    const auto s = sample_dataset(pop, 3, 99);
    std::set<std::string> ids;
    for (const auto& q : s) ids.insert(q.id);
    CHECK(ids == std::set<std::string>{"a", "b", "c"});
    CHECK_THROWS_AS(sample_dataset(pop, 4, 0), DataError);
}

TEST_CASE("sample_dataset is invariant to input file order") {
    std::vector<QuestionRecord> pop;
    for (int i = 0; i < 500; ++i)
        pop.push_back({"id" + std::to_string(i), "q", {"a"}});
    auto shuffled = pop;
    Rng rng(5);
    rng.shuffle(shuffled);
    const auto a = sample_dataset(pop, 100, 7);
    const auto b = sample_dataset(shuffled, 100, 7);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
}

TEST_CASE("manifest hash check catches one-byte edits") {
    RunManifest m;
    m.dataset_id = "ds";
    m.dataset_split = "test";
    m.n = 1;
    m.model_id = "m";
    const std::string path = tmp_path("staged.jsonl");
    std::ofstream(path) << "{\"id\":\"a\",\"question\":\"q\",\"gold_aliases\":[\"x\"]}\n";
    m.file_hashes["staged.jsonl"] = file_hash(path);

    // flip one byte
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.put('X');
    f.close();
    CHECK(file_hash(path) != m.file_hashes["staged.jsonl"]);
}

TEST_CASE("manifest json round-trip") {
    RunManifest m;
    m.dataset_id = "popqa";
    m.dataset_split = "test";
    m.n = 1000;
    m.sample_seed = 1234;
    m.model_id = "llama";
    m.judge_model_id = "qwen-14b";
    m.nli_model_id = "deberta";
    m.k_top = 100;
    m.bootstrap_b = 1000;
    m.created_at = "2026-01-01T00:00:00Z";
    m.file_hashes["questions.jsonl"] = "abc";
    RunManifest back;
    from_json(to_json(m), back);
    CHECK(to_json(back).dump() == to_json(m).dump());
}

TEST_CASE("popqa adapter normalizes rows") {
    const std::string path = tmp_path("popqa.jsonl");
    std::ofstream out(path);
    out << R"({"id": 17, "question": "Who wrote Hamlet?", "possible_answers": "[\"Shakespeare\", \"William Shakespeare\"]"})"
        << "\n";
    out.close();
    const auto qs = adapt_popqa(path);
    REQUIRE(qs.size() == 1);
    CHECK(qs[0].id == "17");
    CHECK(qs[0].gold_aliases.size() == 2);
}

TEST_CASE("triviaqa adapter normalizes rows") {
    const std::string path = tmp_path("tqa.jsonl");
    std::ofstream out(path);
    out << R"({"question_id": "tc_1", "question": "Capital of Australia?", "answer": {"aliases": ["Canberra"], "value": "Canberra"}})"
        << "\n";
    out.close();
    const auto qs = adapt_triviaqa(path);
    REQUIRE(qs.size() == 1);
    CHECK(qs[0].id == "tc_1");
    CHECK(qs[0].gold_aliases == std::vector<std::string>{"Canberra"});
}
