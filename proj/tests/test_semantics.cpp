#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "confsig/semantics.hpp"
#include "support/oracles.hpp"

using namespace confsig;
using oracles::PartitionScorer;

namespace {

// Scorer driven by an explicit directional decision matrix over texts.
class MatrixScorer : public NliScorer {
public:
    void set(const std::string& premise, const std::string& hypothesis, bool entails) {
        matrix_[{premise, hypothesis}] = entails;
    }

    EntailmentJudgment score(const std::string& premise, const std::string& hypothesis) override {
        ++calls;
        EntailmentJudgment j;
        j.premise = premise;
        j.hypothesis = hypothesis;
        const auto it = matrix_.find({premise, hypothesis});
        const bool e = it != matrix_.end() && it->second;
        j.p_entail = e ? 0.8 : 0.1;
        j.p_neutral = 0.1;
        j.p_contradict = e ? 0.1 : 0.8;
        return j;
    }

    int calls = 0;

private:
    std::map<std::pair<std::string, std::string>, bool> matrix_;
};

}  // namespace

TEST_CASE("identical strings short-circuit without scorer calls") {
    MatrixScorer scorer;
    CHECK(entail_bidirectional("Paris", "Paris", "capital?", scorer));
    CHECK(scorer.calls == 0);
}

TEST_CASE("one-directional entailment is not enough") {
    MatrixScorer scorer;
    const std::string q = "q?";
    scorer.set(entailment_text(q, "a"), entailment_text(q, "b"), true);
    scorer.set(entailment_text(q, "b"), entailment_text(q, "a"), false);
    CHECK_FALSE(entail_bidirectional("a", "b", q, scorer));
}

TEST_CASE("bidirectional entailment passes") {
    MatrixScorer scorer;
    const std::string q = "q?";
    scorer.set(entailment_text(q, "a"), entailment_text(q, "b"), true);
    scorer.set(entailment_text(q, "b"), entailment_text(q, "a"), true);
    CHECK(entail_bidirectional("a", "b", q, scorer));
}

TEST_CASE("threshold mode uses p_entail directly") {
    MatrixScorer scorer;
    const std::string q = "q?";
    scorer.set(entailment_text(q, "a"), entailment_text(q, "b"), true);
    scorer.set(entailment_text(q, "b"), entailment_text(q, "a"), true);
    EntailmentConfig strict{EntailmentDecision::Threshold, 0.9};
    CHECK_FALSE(entail_bidirectional("a", "b", q, scorer, strict));  // 0.8 < 0.9
    EntailmentConfig loose{EntailmentDecision::Threshold, 0.5};
    CHECK(entail_bidirectional("a", "b", q, scorer, loose));
}

TEST_CASE("all-equivalent answers form one cluster") {
    std::vector<std::string> texts = {"g", "s1", "s2", "s3"};
    PartitionScorer scorer(texts, {0, 0, 0, 0}, "q?");
    const auto cs = cluster_semantic("g", {"s1", "s2", "s3"}, "q?", scorer);
    CHECK(cs.num_clusters == 1);
    CHECK(semantic_au(cs, 3) == 1.0);
}

TEST_CASE("no entailment yields all singletons") {
    std::vector<std::string> texts = {"g", "s1", "s2"};
    PartitionScorer scorer(texts, {0, 1, 2}, "q?");
    const auto cs = cluster_semantic("g", {"s1", "s2"}, "q?", scorer);
    CHECK(cs.num_clusters == 3);
    CHECK(semantic_au(cs, 2) == 0.0);
}

TEST_CASE("hand-traced representative clustering") {
    // Paris-variants mutually entail; London stands alone.
    std::vector<std::string> texts = {"Paris", "the capital is Paris", "London", "paris"};
    PartitionScorer scorer(texts, {0, 0, 1, 0}, "q?");
    const auto cs =
        cluster_semantic("Paris", {"the capital is Paris", "London", "paris"}, "q?", scorer);
    REQUIRE(cs.members.size() == 4);
    CHECK(cs.members[0] == 0);  // greedy
    CHECK(cs.members[1] == 0);
    CHECK(cs.members[2] == 1);
    CHECK(cs.members[3] == 0);
    CHECK(cs.greedy_cluster_id == 0);
    CHECK(cs.num_clusters == 2);
    CHECK(semantic_au(cs, 3) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("empty answers become singleton clusters without NLI calls") {
    std::vector<std::string> texts = {"Paris", "", "Paris", ""};
    PartitionScorer scorer(texts, {0, 1, 0, 2}, "q?");
    const auto cs = cluster_semantic("Paris", {"", "Paris", ""}, "q?", scorer);
    CHECK(cs.num_clusters == 3);  // {greedy, s2}, {s1}, {s3}
    CHECK(cs.members[0] == cs.members[2]);
    CHECK(cs.members[1] != cs.members[3]);
    CHECK(cs.nli_calls == 0);  // identical strings short-circuit, empties skipped
}

TEST_CASE("clusters match the partition oracle on random transitive relations") {
    Rng rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng.bounded(10));  // greedy + up to 10 samples
        const auto truth = oracles::random_partition(n, rng);
        std::vector<std::string> texts;
        for (int i = 0; i < n; ++i) texts.push_back("ans" + std::to_string(i));
        PartitionScorer scorer(texts, truth, "q?");
        std::vector<std::string> samples(texts.begin() + 1, texts.end());
        const auto cs = cluster_semantic(texts[0], samples, "q?", scorer);
        CHECK(oracles::canonical_partition(cs.members) == oracles::canonical_partition(truth));
        CHECK(cs.nli_calls <= 2 * cs.num_clusters * n);
    }
}

TEST_CASE("determinism: identical inputs give identical cluster sets") {
    Rng rng(43);
    const auto truth = oracles::random_partition(6, rng);
    std::vector<std::string> texts;
    for (int i = 0; i < 6; ++i) texts.push_back("a" + std::to_string(i));
    std::vector<std::string> samples(texts.begin() + 1, texts.end());
    PartitionScorer s1(texts, truth, "q?"), s2(texts, truth, "q?");
    const auto c1 = cluster_semantic(texts[0], samples, "q?", s1);
    const auto c2 = cluster_semantic(texts[0], samples, "q?", s2);
    CHECK(c1.members == c2.members);
    CHECK(c1.nli_calls == c2.nli_calls);
    CHECK(c1.greedy_cluster_id == c2.greedy_cluster_id);
}

TEST_CASE("semantic_au domain checks") {
    ClusterSet cs;
    cs.members = {0, 0, 1};
    cs.greedy_cluster_id = 0;
    cs.num_clusters = 2;
    CHECK(semantic_au(cs, 2) == 0.5);
    CHECK_THROWS_AS(semantic_au(cs, 0), DataError);
    CHECK_THROWS_AS(semantic_au(cs, 5), DataError);
}

TEST_CASE("empty sample list errors") {
    MatrixScorer scorer;
    CHECK_THROWS_AS(cluster_semantic("g", {}, "q?", scorer), DataError);
}

TEST_CASE("semantic_au values are multiples of 1/N") {
    Rng rng(47);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.bounded(10));
        const auto truth = oracles::random_partition(n + 1, rng);
        std::vector<std::string> texts;
        for (int i = 0; i <= n; ++i) texts.push_back("a" + std::to_string(i));
        PartitionScorer scorer(texts, truth, "q?");
        std::vector<std::string> samples(texts.begin() + 1, texts.end());
        const auto cs = cluster_semantic(texts[0], samples, "q?", scorer);
        const double au = semantic_au(cs, n);
        const double scaled = au * n;
        CHECK(std::fabs(scaled - std::round(scaled)) < 1e-12);
    }
}
