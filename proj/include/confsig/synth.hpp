#pragma once

#include <cmath>
#include <vector>

#include "confsig/error.hpp"
#include "confsig/rng.hpp"

namespace confsig {

struct SynthRow {
    bool label = false;
    double score = 0.0;   // primary view: Normal(d * label, 1)
    double score2 = 0.0;  // second view with noise correlation r_views
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Analytic AUROC of the binormal model: Phi(d / sqrt(2)).
inline double binormal_auroc(double d) { return normal_cdf(d / std::sqrt(2.0)); }

/// Binormal synthetic generator with known ground truth. label ~
/// Bernoulli(accuracy); score ~ Normal(d*label, 1); score2 shares the label
/// shift but its noise correlates with the primary noise at r_views.
inline std::vector<SynthRow> synth_generate(int n, double accuracy, double d, double r_views,
                                            long long seed) {
    if (n <= 0) throw DataError("synth: n must be > 0");
    if (!(accuracy > 0.0 && accuracy < 1.0)) throw DataError("synth: accuracy out of (0,1)");
    if (!(std::fabs(r_views) < 1.0)) throw DataError("synth: |r_views| must be < 1");
    Rng rng(static_cast<uint64_t>(seed));
    std::vector<SynthRow> rows(n);
    const double ortho = std::sqrt(1.0 - r_views * r_views);
    for (auto& row : rows) {
        row.label = rng.uniform() < accuracy;
        const double z1 = rng.normal();
        const double z2 = r_views * z1 + ortho * rng.normal();
        const double shift = row.label ? d : 0.0;
        row.score = shift + z1;
        row.score2 = shift + z2;
    }
    return rows;
}

}  // namespace confsig
