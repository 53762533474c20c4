#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "confsig/stats.hpp"
#include "confsig/synth.hpp"
#include "support/oracles.hpp"

using namespace confsig;

namespace {

LabeledScores random_instance(Rng& rng, size_t n, bool with_ties) {
    LabeledScores d;
    bool pos = false, neg = false;
    for (size_t i = 0; i < n; ++i) {
        double s = rng.uniform();
        if (with_ties && rng.bounded(3) == 0) s = std::floor(s * 5.0) / 5.0;
        d.scores.push_back(s);
        const bool label = rng.bounded(2) == 1;
        d.labels.push_back(label);
        (label ? pos : neg) = true;
    }
    // force both classes
    if (!pos) d.labels[0] = true;
    if (!neg) d.labels[n - 1 < 1 ? 0 : n - 1] = false;
    if (d.labels[0] == d.labels[n - 1] && n >= 2) d.labels[n - 1] = !d.labels[0];
    return d;
}

}  // namespace

TEST_CASE("auroc hand example") {
    LabeledScores d{{0.1, 0.4, 0.35, 0.8}, {false, true, false, true}};
    // pairs: (0.4,0.1)+ (0.4,0.35)+ (0.8,0.1)+ (0.8,0.35)+ -> 4/4? no:
    // labels [0,1,0,1]: positives 0.4,0.8; negatives 0.1,0.35 -> all 4 wins
    CHECK(auroc(d) == doctest::Approx(1.0));
    LabeledScores d2{{0.1, 0.4, 0.35, 0.8}, {false, false, true, true}};
    CHECK(auroc(d2) == doctest::Approx(0.75));  // 3 wins, 1 loss of 4 pairs
}

TEST_CASE("auroc extremes") {
    LabeledScores sep{{0.9, 0.8, 0.1, 0.2}, {true, true, false, false}};
    CHECK(auroc(sep) == 1.0);
    LabeledScores ties{{0.5, 0.5, 0.5, 0.5}, {true, false, true, false}};
    CHECK(auroc(ties) == 0.5);
    LabeledScores single{{0.1, 0.2}, {true, true}};
    CHECK_THROWS_WITH_AS(auroc(single), doctest::Contains("undefined"), DataError);
}

TEST_CASE("rank auroc equals brute force on random instances") {
    Rng rng(101);
    for (int trial = 0; trial < 400; ++trial) {
        const size_t n = 2 + rng.bounded(199);
        const auto d = random_instance(rng, n, trial % 2 == 0);
        CHECK(std::fabs(auroc(d) - oracles::brute_force_auroc(d.scores, d.labels)) <= 1e-12);
    }
}

TEST_CASE("auroc label-flip identity and monotone invariance") {
    Rng rng(103);
    for (int trial = 0; trial < 100; ++trial) {
        const auto d = random_instance(rng, 50, true);
        LabeledScores flipped = d;
        for (size_t i = 0; i < flipped.labels.size(); ++i) flipped.labels[i] = !flipped.labels[i];
        CHECK(auroc(flipped) == doctest::Approx(1.0 - auroc(d)).epsilon(1e-12));

        LabeledScores warped = d;
        for (auto& s : warped.scores) s = std::exp(3.0 * s) + 1.0;
        CHECK(auroc(warped) == doctest::Approx(auroc(d)).epsilon(1e-12));
    }
}

TEST_CASE("bootstrap ci deterministic given seed") {
    Rng rng(107);
    const auto d = random_instance(rng, 200, false);
    BootstrapConfig cfg{200, 5, 0.95};
    const auto ci1 = bootstrap_ci(d, cfg);
    const auto ci2 = bootstrap_ci(d, cfg);
    CHECK(ci1.first == ci2.first);
    CHECK(ci1.second == ci2.second);
    CHECK(ci1.first <= ci1.second);
}

TEST_CASE("bootstrap interval width shrinks roughly as 1/sqrt(n)") {
    // n vs 4n from the binormal generator; width ratio ~2 within +-30%.
    double ratio_sum = 0.0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        auto make = [&](int n, long long seed) {
            const auto rows = synth_generate(n, 0.4, 1.5, 0.0, seed);
            LabeledScores d;
            for (const auto& r : rows) {
                d.scores.push_back(r.score);
                d.labels.push_back(r.label);
            }
            BootstrapConfig cfg{300, 1000 + t, 0.95};
            const auto ci = bootstrap_ci(d, cfg);
            return ci.second - ci.first;
        };
        ratio_sum += make(250, 11 + t) / make(1000, 900 + t);
    }
    const double mean_ratio = ratio_sum / trials;
    CHECK(mean_ratio > 2.0 * 0.7);
    CHECK(mean_ratio < 2.0 * 1.3);
}

TEST_CASE("bootstrap interval contains the point estimate almost always") {
    Rng rng(109);
    int violations = 0;
    const int trials = 300;
    for (int t = 0; t < trials; ++t) {
        const auto d = random_instance(rng, 30 + rng.bounded(100), true);
        const double a = auroc(d);
        BootstrapConfig cfg{200, static_cast<long long>(t), 0.95};
        const auto ci = bootstrap_ci(d, cfg);
        if (a < ci.first || a > ci.second) ++violations;
    }
    CHECK(violations <= trials / 20);  // percentile-edge rate
}

TEST_CASE("paired bootstrap of a method against itself is 1.0") {
    Rng rng(113);
    const auto d = random_instance(rng, 100, false);
    for (long long seed = 0; seed < 5; ++seed) {
        BootstrapConfig cfg{200, seed, 0.95};
        const auto p = paired_bootstrap_p(d.scores, d.scores, d.labels, cfg);
        CHECK(p.value == 1.0);
    }
}

TEST_CASE("paired bootstrap p formula and display convention") {
    PValue p;
    p.count = 42;
    p.b = 1000;
    p.value = 0.042;
    CHECK(p.display() == "0.042");
    PValue zero;
    zero.count = 0;
    zero.b = 1000;
    zero.value = 0.0;
    CHECK(zero.display() == "<0.001");
}

TEST_CASE("dominating method gets a small p-value") {
    const auto rows = synth_generate(500, 0.4, 3.0, 0.0, 777);
    std::vector<double> method, baseline;
    std::vector<bool> labels;
    Rng noise(779);
    for (const auto& r : rows) {
        method.push_back(r.score);
        baseline.push_back(noise.uniform());  // uninformative baseline
        labels.push_back(r.label);
    }
    BootstrapConfig cfg{1000, 3, 0.95};
    const auto p = paired_bootstrap_p(method, baseline, labels, cfg);
    CHECK(p.count == 0);
    CHECK(p.display() == "<0.001");
}

TEST_CASE("misaligned paired inputs error") {
    CHECK_THROWS_AS(paired_bootstrap_p({1, 2}, {1}, {true, false}, BootstrapConfig{}), DataError);
}

TEST_CASE("pearson basics") {
    std::vector<double> x{1, 2, 3, 4};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v + 1);
    CHECK(pearson(x, y) == doctest::Approx(1.0));
    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    CHECK(pearson(x, neg) == doctest::Approx(-1.0));
    CHECK(pearson(x, {1, 3, 2, 4}) == doctest::Approx(0.8));
    CHECK_THROWS_AS(pearson(x, {2, 2, 2, 2}), DataError);
}

TEST_CASE("partial correlation equals closed form") {
    Rng rng(127);
    for (int trial = 0; trial < 300; ++trial) {
        const size_t n = 10 + rng.bounded(200);
        std::vector<double> x(n), y(n);
        std::vector<bool> c(n);
        for (size_t i = 0; i < n; ++i) {
            c[i] = rng.bounded(2) == 1;
            x[i] = rng.normal() + (c[i] ? 0.5 : 0.0);
            y[i] = rng.normal() + (c[i] ? -0.3 : 0.0) + 0.2 * x[i];
        }
        bool pos = false, neg = false;
        for (bool b : c) (b ? pos : neg) = true;
        if (!pos || !neg) continue;
        const double r1 = partial_correlation(x, y, c);
        const double r2 = partial_correlation_closed_form(x, y, c);
        CHECK(std::fabs(r1 - r2) <= 1e-10);
    }
}

TEST_CASE("partial correlation reduces to pearson when control is orthogonal") {
    // construct x,y with exactly zero in-sample correlation to the control
    std::vector<double> x{1, -1, 2, -2, 3, -3};
    std::vector<double> y{2, -2, 1, -1, 4, -4};
    std::vector<bool> c{true, true, false, false, true, true};
    // group means of x within c=1: (1-1+3-3)/4=0, c=0: (2-2)/2=0; same for y
    CHECK(partial_correlation(x, y, c) == doctest::Approx(pearson(x, y)).epsilon(1e-12));
}

TEST_CASE("control-collinear input errors") {
    std::vector<bool> c{true, false, true, false};
    std::vector<double> x{1, 0, 1, 0};  // equals the control
    std::vector<double> y{1, 2, 3, 4};
    CHECK_THROWS_WITH_AS(partial_correlation(x, y, c), doctest::Contains("residual variance"),
                         DataError);
}

TEST_CASE("confound pattern: raw correlation vanishes after partialling") {
    // x and length both depend on the label only; partial r should be ~0.
    Rng rng(131);
    const size_t n = 5000;
    std::vector<double> x(n), len(n);
    std::vector<bool> correct(n);
    for (size_t i = 0; i < n; ++i) {
        correct[i] = rng.uniform() < 0.4;
        const double c = correct[i] ? 1.0 : 0.0;
        x[i] = -(-c) + rng.normal();       // higher when correct
        len[i] = -c + rng.normal();        // shorter when correct
    }
    const double raw = pearson(x, len);
    const double part = partial_correlation(x, len, correct);
    CHECK(raw < -0.10);
    CHECK(std::fabs(part) < 0.05);
}

TEST_CASE("duplicated feature gives zero ensemble gain") {
    const auto rows = synth_generate(400, 0.5, 1.0, 0.0, 5);
    std::vector<double> f;
    std::vector<bool> labels;
    for (const auto& r : rows) {
        f.push_back(r.score);
        labels.push_back(r.label);
    }
    CHECK(std::fabs(ensemble_gain(f, f, labels)) <= 1e-9);
}

TEST_CASE("perfect second feature lifts ensemble to 1") {
    const auto rows = synth_generate(400, 0.5, 1.0, 0.0, 6);
    std::vector<double> f, perfect;
    std::vector<bool> labels;
    for (const auto& r : rows) {
        f.push_back(r.score);
        perfect.push_back(r.label ? 1.0 : 0.0);
        labels.push_back(r.label);
    }
    const double base = auroc({f, labels});
    CHECK(ensemble_gain(f, perfect, labels) == doctest::Approx(1.0 - base).epsilon(1e-9));
}

TEST_CASE("separable feature still converges with ridge") {
    std::vector<double> f1, f2;
    std::vector<bool> labels;
    Rng rng(137);
    for (int i = 0; i < 200; ++i) {
        const bool l = rng.bounded(2) == 1;
        labels.push_back(l);
        f1.push_back(l ? 1.0 : 0.0);
        f2.push_back(rng.normal());
    }
    const auto fit = fit_logistic_ensemble(f1, f2, labels);
    CHECK(fit.converged);
    std::vector<double> probs;
    for (size_t i = 0; i < labels.size(); ++i) probs.push_back(fit.predict(f1[i], f2[i]));
    CHECK(auroc({probs, labels}) == doctest::Approx(1.0));
}

TEST_CASE("IRLS matches the gradient-descent oracle") {
    Rng rng(139);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 150;
        std::vector<double> f1(n), f2(n);
        std::vector<bool> labels(n);
        for (size_t i = 0; i < n; ++i) {
            labels[i] = rng.bounded(2) == 1;
            const double shift = labels[i] ? 0.8 : 0.0;
            f1[i] = shift + rng.normal();
            f2[i] = 0.5 * shift + rng.normal();
        }
        const auto fit = fit_logistic_ensemble(f1, f2, labels);
        REQUIRE(fit.converged);
        std::vector<double> z1(n), z2(n);
        for (size_t i = 0; i < n; ++i) {
            z1[i] = (f1[i] - fit.mean1) / fit.std1;
            z2[i] = (f2[i] - fit.mean2) / fit.std2;
        }
        const auto gd = oracles::gd_logistic(z1, z2, labels, 1e-9);
        CHECK(std::fabs(fit.intercept - gd.beta[0]) <= 1e-5);
        CHECK(std::fabs(fit.w1 - gd.beta[1]) <= 1e-5);
        CHECK(std::fabs(fit.w2 - gd.beta[2]) <= 1e-5);
    }
}

TEST_CASE("ensemble gain small for correlated noisy views") {
    const auto rows = synth_generate(5000, 0.4, 1.5, 0.7, 7);
    std::vector<double> v1, v2;
    std::vector<bool> labels;
    for (const auto& r : rows) {
        v1.push_back(r.score);
        v2.push_back(r.score2);
        labels.push_back(r.label);
    }
    const double gain = ensemble_gain(v1, v2, labels);
    CHECK(gain >= -1e-9);
    CHECK(gain < 0.05);
}

TEST_CASE("accuracy") {
    CHECK(accuracy({true, true}) == 1.0);
    CHECK(accuracy({true, false, false, true}) == 0.5);
    CHECK_THROWS_AS(accuracy({}), DataError);
}

TEST_CASE("binormal synthetic matches the analytic AUROC") {
    const auto rows = synth_generate(10000, 0.4, 2.0, 0.0, 4242);
    LabeledScores d;
    for (const auto& r : rows) {
        d.scores.push_back(r.score);
        d.labels.push_back(r.label);
    }
    CHECK(std::fabs(auroc(d) - binormal_auroc(2.0)) <= 0.015);
    CHECK(binormal_auroc(0.0) == doctest::Approx(0.5));
    CHECK(binormal_auroc(2.0) == doctest::Approx(0.9214).epsilon(1e-3));
}

TEST_CASE("synth determinism and validation") {
    const auto a = synth_generate(100, 0.3, 1.0, 0.5, 9);
    const auto b = synth_generate(100, 0.3, 1.0, 0.5, 9);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].score == b[i].score);
        CHECK(a[i].label == b[i].label);
    }
    CHECK_THROWS_AS(synth_generate(0, 0.5, 1, 0, 1), DataError);
    CHECK_THROWS_AS(synth_generate(10, 1.5, 1, 0, 1), DataError);
    CHECK_THROWS_AS(synth_generate(10, 0.5, 1, 1.0, 1), DataError);
}
