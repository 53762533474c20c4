#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "confsig/error.hpp"
#include "confsig/rng.hpp"

namespace confsig {

struct LabeledScores {
    std::vector<double> scores;
    std::vector<bool> labels;  // true = correct

    size_t size() const { return scores.size(); }
};

struct BootstrapConfig {
    int b = 1000;
    long long seed = 0;
    double ci_level = 0.95;
};

namespace detail {

inline void require_both_classes(const std::vector<bool>& labels, const char* what) {
    bool pos = false, neg = false;
    for (bool l : labels) (l ? pos : neg) = true;
    if (!pos || !neg) throw DataError(std::string(what) + " undefined: single-class labels");
}

// Midranks (1-based) over the score vector.
inline std::vector<double> midranks(const std::vector<double>& scores) {
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace detail

/// Probability that a random correct-labeled score exceeds a random
/// incorrect-labeled one, ties counting one half. Mann-Whitney rank form;
/// equals the pairwise definition exactly.
inline double auroc(const LabeledScores& data) {
    if (data.scores.size() != data.labels.size() || data.scores.size() < 2)
        throw DataError("AUROC needs paired scores/labels of length >= 2");
    detail::require_both_classes(data.labels, "AUROC");
    const auto rank = detail::midranks(data.scores);
    double pos_rank_sum = 0.0;
    size_t n_pos = 0;
    for (size_t i = 0; i < data.labels.size(); ++i) {
        if (data.labels[i]) {
            pos_rank_sum += rank[i];
            ++n_pos;
        }
    }
    const size_t n_neg = data.labels.size() - n_pos;
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace detail {

// One seeded resample of indices; single-class draws are redrawn so the
// effective B stays fixed.
inline std::vector<size_t> resample_indices(const std::vector<bool>& labels, Rng& rng) {
    const size_t n = labels.size();
    std::vector<size_t> idx(n);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        bool pos = false, neg = false;
        for (size_t i = 0; i < n; ++i) {
            idx[i] = static_cast<size_t>(rng.bounded(n));
            (labels[idx[i]] ? pos : neg) = true;
        }
        if (pos && neg) return idx;
    }
    throw DataError("bootstrap: could not draw a two-class resample");
}

// Linear interpolation between order statistics on a sorted vector.
inline double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw DataError("percentile of empty vector");
    if (sorted.size() == 1) return sorted[0];
    const double h = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Percentile bootstrap interval for AUROC over B seeded resamples of
/// question indices. Deterministic given (data, seed, B); each resample
/// uses its own RNG stream so execution order cannot matter.
inline std::pair<double, double> bootstrap_ci(const LabeledScores& data,
                                              const BootstrapConfig& cfg) {
    if (cfg.b < 1) throw DataError("bootstrap: b must be >= 1");
    if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0))
        throw DataError("bootstrap: ci_level out of (0,1)");
    detail::require_both_classes(data.labels, "bootstrap CI");
    std::vector<double> stats(cfg.b);
    for (int b = 0; b < cfg.b; ++b) {
        Rng rng = Rng::stream(static_cast<uint64_t>(cfg.seed), static_cast<uint64_t>(b));
        const auto idx = detail::resample_indices(data.labels, rng);
        LabeledScores rs;
        rs.scores.reserve(idx.size());
        rs.labels.reserve(idx.size());
        for (size_t i : idx) {
            rs.scores.push_back(data.scores[i]);
            rs.labels.push_back(data.labels[i]);
        }
        stats[b] = auroc(rs);
    }
    std::sort(stats.begin(), stats.end());
    const double alpha = 1.0 - cfg.ci_level;
    return {detail::percentile(stats, alpha / 2.0), detail::percentile(stats, 1.0 - alpha / 2.0)};
}

struct PValue {
    double value = 1.0;      // count / B
    int count = 0;           // resamples with delta <= 0
    int b = 0;

    // Matches the reporting convention: a zero count renders as "<1/B".
    std::string display() const {
        char buf[32];
        if (count == 0) {
            std::snprintf(buf, sizeof buf, "<%.3f", 1.0 / static_cast<double>(b));
            return buf;
        }
        std::snprintf(buf, sizeof buf, "%.3f", value);
        return buf;
    }
};

/// One-sided paired bootstrap test of AUROC(method) > AUROC(baseline).
/// Both methods are evaluated on identical index draws per resample;
/// p is the fraction of resamples where the method fails to beat the
/// baseline (delta <= 0).
inline PValue paired_bootstrap_p(const std::vector<double>& method_scores,
                                 const std::vector<double>& baseline_scores,
                                 const std::vector<bool>& labels, const BootstrapConfig& cfg) {
    if (method_scores.size() != labels.size() || baseline_scores.size() != labels.size())
        throw DataError("paired bootstrap: misaligned vector lengths");
    if (cfg.b < 1) throw DataError("paired bootstrap: b must be >= 1");
    detail::require_both_classes(labels, "paired bootstrap");
    int count = 0;
    for (int b = 0; b < cfg.b; ++b) {
        Rng rng = Rng::stream(static_cast<uint64_t>(cfg.seed), static_cast<uint64_t>(b));
        const auto idx = detail::resample_indices(labels, rng);
        LabeledScores m, base;
        m.scores.reserve(idx.size());
        base.scores.reserve(idx.size());
        for (size_t i : idx) {
            m.scores.push_back(method_scores[i]);
            base.scores.push_back(baseline_scores[i]);
            m.labels.push_back(labels[i]);
            base.labels.push_back(labels[i]);
        }
        const double delta = auroc(m) - auroc(base);
        if (delta <= 0.0) ++count;
    }
    PValue p;
    p.count = count;
    p.b = cfg.b;
    p.value = static_cast<double>(count) / static_cast<double>(cfg.b);
    return p;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3)
        throw DataError("pearson needs equal-length vectors of size >= 3");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw DataError("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

namespace detail {

// Residuals of v after OLS regression on a binary control with intercept,
// i.e. group-mean centering.
inline std::vector<double> residualize_on_binary(const std::vector<double>& v,
                                                 const std::vector<bool>& control) {
    double m0 = 0.0, m1 = 0.0;
    size_t n0 = 0, n1 = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        if (control[i]) {
            m1 += v[i];
            ++n1;
        } else {
            m0 += v[i];
            ++n0;
        }
    }
    m0 /= static_cast<double>(n0);
    m1 /= static_cast<double>(n1);
    std::vector<double> r(v.size());
    for (size_t i = 0; i < v.size(); ++i) r[i] = v[i] - (control[i] ? m1 : m0);
    return r;
}

}  // namespace detail

/// Partial Pearson correlation of x and y controlling for a binary label:
/// regress each on the control (with intercept) and correlate the residuals.
/// Algebraically equal to (r_xy - r_xc r_yc) / sqrt((1-r_xc^2)(1-r_yc^2)).
inline double partial_correlation(const std::vector<double>& x, const std::vector<double>& y,
                                  const std::vector<bool>& control) {
    if (x.size() != y.size() || x.size() != control.size() || x.size() < 4)
        throw DataError("partial correlation needs equal-length vectors of size >= 4");
    detail::require_both_classes(control, "partial correlation");
    const auto rx = detail::residualize_on_binary(x, control);
    const auto ry = detail::residualize_on_binary(y, control);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) {
        sxx += rx[i] * rx[i];
        syy += ry[i] * ry[i];
        sxy += rx[i] * ry[i];
    }
    if (sxx <= 1e-300 || syy <= 1e-300)
        throw DataError("partial correlation: residual variance zero");
    return sxy / std::sqrt(sxx * syy);
}

/// Closed-form route for the same quantity; kept as a second algebraic
/// path for verification.
inline double partial_correlation_closed_form(const std::vector<double>& x,
                                              const std::vector<double>& y,
                                              const std::vector<bool>& control) {
    std::vector<double> c(control.size());
    for (size_t i = 0; i < control.size(); ++i) c[i] = control[i] ? 1.0 : 0.0;
    const double rxy = pearson(x, y);
    const double rxc = pearson(x, c);
    const double ryc = pearson(y, c);
    const double denom = std::sqrt((1.0 - rxc * rxc) * (1.0 - ryc * ryc));
    if (denom <= 1e-150) throw DataError("partial correlation: residual variance zero");
    return (rxy - rxc * ryc) / denom;
}

struct EnsembleFit {
    double mean1 = 0.0, std1 = 1.0;
    double mean2 = 0.0, std2 = 1.0;
    double intercept = 0.0, w1 = 0.0, w2 = 0.0;
    bool converged = false;
    int iterations = 0;

    double predict(double f1, double f2) const {
        const double z = intercept + w1 * (f1 - mean1) / std1 + w2 * (f2 - mean2) / std2;
        return 1.0 / (1.0 + std::exp(-z));
    }
};

namespace detail {

// 3x3 linear solve, partial pivoting.
inline void solve3(double a[3][3], double b[3], double x[3]) {
    int piv[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(a[piv[r]][col]) > std::fabs(a[piv[best]][col])) best = r;
        std::swap(piv[col], piv[best]);
        const double d = a[piv[col]][col];
        if (std::fabs(d) < 1e-300) throw DataError("logistic fit: singular normal equations");
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[piv[r]][col] / d;
            for (int c = col; c < 3; ++c) a[piv[r]][c] -= f * a[piv[col]][c];
            b[piv[r]] -= f * b[piv[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double s = b[piv[col]];
        for (int c = col + 1; c < 3; ++c) s -= a[piv[col]][c] * x[c];
        x[col] = s / a[piv[col]][col];
    }
}

}  // namespace detail

/// Two-feature logistic regression on z-scored features, fit by iteratively
/// reweighted least squares with a 1e-9 ridge on the normal equations so
/// separable data stays finite. Converged when the max coefficient change
/// drops below 1e-8 (up to 100 iterations).
inline EnsembleFit fit_logistic_ensemble(const std::vector<double>& f1,
                                         const std::vector<double>& f2,
                                         const std::vector<bool>& labels) {
    const size_t n = labels.size();
    if (f1.size() != n || f2.size() != n || n < 2)
        throw DataError("logistic fit: misaligned inputs");
    detail::require_both_classes(labels, "logistic fit");

    EnsembleFit fit;
    auto moments = [n](const std::vector<double>& v, double& mean, double& sd) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(n));
        if (sd <= 0.0) throw DataError("logistic fit: feature with zero variance");
    };
    moments(f1, fit.mean1, fit.std1);
    moments(f2, fit.mean2, fit.std2);

    std::vector<double> z1(n), z2(n);
    for (size_t i = 0; i < n; ++i) {
        z1[i] = (f1[i] - fit.mean1) / fit.std1;
        z2[i] = (f2[i] - fit.mean2) / fit.std2;
    }

    const double ridge = 1e-9;
    double beta[3] = {0.0, 0.0, 0.0};
    for (int iter = 1; iter <= 100; ++iter) {
        double xtwx[3][3] = {};
        double grad[3] = {};
        for (size_t i = 0; i < n; ++i) {
            const double eta = beta[0] + beta[1] * z1[i] + beta[2] * z2[i];
            const double mu = 1.0 / (1.0 + std::exp(-eta));
            double w = mu * (1.0 - mu);
            if (w < 1e-12) w = 1e-12;
            const double xi[3] = {1.0, z1[i], z2[i]};
            const double y = labels[i] ? 1.0 : 0.0;
            for (int r = 0; r < 3; ++r) {
                grad[r] += xi[r] * (y - mu);
                for (int c = 0; c < 3; ++c) xtwx[r][c] += w * xi[r] * xi[c];
            }
        }
        for (int r = 0; r < 3; ++r) {
            xtwx[r][r] += ridge;
            grad[r] -= ridge * beta[r];
        }
        double delta[3];
        detail::solve3(xtwx, grad, delta);
        double max_change = 0.0;
        for (int r = 0; r < 3; ++r) {
            beta[r] += delta[r];
            max_change = std::max(max_change, std::fabs(delta[r]));
        }
        fit.iterations = iter;
        if (max_change < 1e-8) {
            fit.converged = true;
            break;
        }
    }
    fit.intercept = beta[0];
    fit.w1 = beta[1];
    fit.w2 = beta[2];
    return fit;
}

/// AUROC of the in-sample ensemble probabilities minus AUROC of the first
/// feature alone.
inline double ensemble_gain(const std::vector<double>& phi, const std::vector<double>& sem_au,
                            const std::vector<bool>& labels) {
    const EnsembleFit fit = fit_logistic_ensemble(phi, sem_au, labels);
    LabeledScores ens, solo;
    ens.labels = labels;
    solo.labels = labels;
    ens.scores.reserve(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) ens.scores.push_back(fit.predict(phi[i], sem_au[i]));
    solo.scores = phi;
    return auroc(ens) - auroc(solo);
}

inline double accuracy(const std::vector<bool>& labels) {
    if (labels.empty()) throw DataError("accuracy of empty label vector");
    size_t c = 0;
    for (bool l : labels) c += l ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(labels.size());
}

}  // namespace confsig
