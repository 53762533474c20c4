#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "confsig/error.hpp"
#include "confsig/text.hpp"

namespace confsig {

struct EntailmentJudgment {
    std::string premise;
    std::string hypothesis;
    double p_entail = 0.0;
    double p_neutral = 0.0;
    double p_contradict = 0.0;

    bool entail_is_argmax() const {
        return p_entail >= p_neutral && p_entail >= p_contradict;
    }
};

// Anything mapping (premise, hypothesis) to three-class probabilities.
// Production is a remote NLI endpoint; tests use stub decision matrices.
class NliScorer {
public:
    virtual ~NliScorer() = default;
    virtual EntailmentJudgment score(const std::string& premise,
                                     const std::string& hypothesis) = 0;
};

enum class EntailmentDecision { Argmax, Threshold };

struct EntailmentConfig {
    EntailmentDecision decision = EntailmentDecision::Argmax;
    double threshold = 0.5;  // used in Threshold mode: p_entail >= tau both ways
};

inline std::string entailment_text(const std::string& question, const std::string& answer) {
    return question + " " + answer;
}

namespace detail {

inline bool directional_entails(const EntailmentJudgment& j, const EntailmentConfig& cfg) {
    if (cfg.decision == EntailmentDecision::Threshold) return j.p_entail >= cfg.threshold;
    return j.entail_is_argmax();
}

}  // namespace detail

/// Two answers are semantically equivalent when each entails the other,
/// with both sides conditioned on the question. Identical strings
/// short-circuit without invoking the scorer. `calls`, when given, is
/// incremented once per directional scorer invocation.
inline bool entail_bidirectional(const std::string& a, const std::string& b,
                                 const std::string& question, NliScorer& scorer,
                                 const EntailmentConfig& cfg = {}, int* calls = nullptr) {
    if (a == b) return true;
    const std::string ta = entailment_text(question, a);
    const std::string tb = entailment_text(question, b);
    EntailmentJudgment fwd = scorer.score(ta, tb);
    if (calls) ++*calls;
    if (!detail::directional_entails(fwd, cfg)) return false;
    EntailmentJudgment bwd = scorer.score(tb, ta);
    if (calls) ++*calls;
    return detail::directional_entails(bwd, cfg);
}

struct ClusterSet {
    std::vector<int> members;            // answer index -> cluster id (greedy is index 0)
    std::map<int, int> representatives;  // cluster id -> first-assigned answer index
    int greedy_cluster_id = 0;
    int num_clusters = 0;
    int nli_calls = 0;
};

/// Representative-based clustering over {greedy, samples}, in fixed order:
/// greedy first, then samples by index. Each answer joins the first
/// existing cluster (creation order) whose representative it bidirectionally
/// entails, else founds a new cluster. Answers that normalize to empty form
/// singleton clusters without any NLI calls. The call count is bounded by
/// 2*C*(N+1) for C discovered clusters.
inline ClusterSet cluster_semantic(const std::string& greedy,
                                   const std::vector<std::string>& samples,
                                   const std::string& question, NliScorer& scorer,
                                   const EntailmentConfig& cfg = {},
                                   const NormalizationRules& rules = {}) {
    if (samples.empty()) throw DataError("cluster_semantic: no samples");

    std::vector<std::string> answers;
    answers.reserve(samples.size() + 1);
    answers.push_back(greedy);
    for (const auto& s : samples) answers.push_back(s);

    ClusterSet cs;
    cs.members.assign(answers.size(), -1);
    std::vector<std::string> norm(answers.size());
    for (size_t i = 0; i < answers.size(); ++i) norm[i] = normalize_answer(answers[i], rules);

    for (size_t i = 0; i < answers.size(); ++i) {
        int assigned = -1;
        if (!norm[i].empty()) {
            for (int c = 0; c < cs.num_clusters && assigned < 0; ++c) {
                const int rep = cs.representatives.at(c);
                if (norm[rep].empty()) continue;  // empties stay singletons
                if (norm[i] == norm[rep]) {
                    assigned = c;  // identical after normalization, no NLI needed
                    break;
                }
                if (entail_bidirectional(answers[i], answers[rep], question, scorer, cfg,
                                         &cs.nli_calls))
                    assigned = c;
            }
        }
        if (assigned < 0) {
            assigned = cs.num_clusters++;
            cs.representatives[assigned] = static_cast<int>(i);
        }
        cs.members[i] = assigned;
    }
    cs.greedy_cluster_id = cs.members[0];
    return cs;
}

/// Fraction of the N samples landing in the greedy answer's cluster; the
/// greedy itself is excluded from both numerator and denominator.
inline double semantic_au(const ClusterSet& clusters, int n_samples) {
    if (n_samples <= 0) throw DataError("semantic_au: n_samples must be > 0");
    if (clusters.members.size() != static_cast<size_t>(n_samples) + 1)
        throw DataError("semantic_au: cluster set does not cover greedy + samples");
    int with_greedy = 0;
    for (int i = 1; i <= n_samples; ++i)
        if (clusters.members[i] == clusters.greedy_cluster_id) ++with_greedy;
    return static_cast<double>(with_greedy) / static_cast<double>(n_samples);
}

}  // namespace confsig
