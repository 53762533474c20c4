#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "confsig/error.hpp"
#include "confsig/records.hpp"
#include "confsig/text.hpp"

namespace confsig {

struct FirstTokenResult {
    int index = 0;          // decode-step index of the first content-bearing token
    double entropy_h = 0.0; // nats
    double phi = 0.0;       // 1 - H / log(effective_k)
    int effective_k = 0;
    bool fallback_used = false;
    bool degenerate = false;  // only one candidate available
};

inline const std::vector<std::string>& default_skip_prefixes() {
    static const std::vector<std::string> v = {"answer", "the answer is", "a:", "answer:"};
    return v;
}

namespace detail {

// Lowercase, collapse whitespace, trim; punctuation kept so prefixes like
// "a:" can match.
inline std::string canon_prefix(std::string_view s) {
    std::string out;
    bool pending = false;
    for (size_t i = 0; i < s.size();) {
        uint32_t cp;
        i += utf8_decode(s, i, cp);
        cp = lower_codepoint(cp);
        if (cp_is_space(cp) || cp_is_control(cp)) {
            if (!out.empty()) pending = true;
            continue;
        }
        if (pending) {
            out.push_back(' ');
            pending = false;
        }
        utf8_encode(cp, out);
    }
    return out;
}

inline bool only_space_or_punct(std::string_view s) {
    for (size_t i = 0; i < s.size();) {
        uint32_t cp;
        i += utf8_decode(s, i, cp);
        if (!cp_is_space(cp) && !cp_is_punct(cp) && !cp_is_control(cp)) return false;
    }
    return true;
}

}  // namespace detail

struct FirstTokenLocation {
    int index = 0;
    bool fallback_used = false;
};

/// Finds the first decode step carrying answer content, skipping whitespace,
/// punctuation, and chat-template prefixes. A token still inside a template
/// phrase is detected by checking whether the accumulated decoded prefix is
/// a prefix of (or equals) one of the configured phrases, case-insensitively.
/// If every token is skipped, falls back to index 0.
inline FirstTokenLocation locate_first_content_token(
    const std::vector<TokenStep>& steps,
    const std::vector<std::string>& skip_prefixes = default_skip_prefixes()) {
    if (steps.empty()) throw DataError("locate_first_content_token: empty step list");

    std::vector<std::string> phrases;
    phrases.reserve(skip_prefixes.size());
    for (const auto& p : skip_prefixes) phrases.push_back(detail::canon_prefix(p));

    std::string acc;
    for (size_t i = 0; i < steps.size(); ++i) {
        acc += steps[i].token_text;
        if (detail::only_space_or_punct(steps[i].token_text)) continue;
        const std::string c = detail::canon_prefix(acc);
        bool in_template = false;
        for (const auto& p : phrases) {
            if (!p.empty() && (c.size() <= p.size() ? p.compare(0, c.size(), c) == 0 : false)) {
                in_template = true;
                break;
            }
        }
        if (!in_template) return {static_cast<int>(i), false};
    }
    return {0, true};
}

/// Confidence of the first content-bearing token: exponentiate the top-K
/// logprobs, renormalize, take Shannon entropy in nats, and map to
/// 1 - H/log(K). 1 means all mass on one token, 0 means uniform over the
/// retained K. When the provider returns fewer than k_top entries the
/// normalizer uses the available count (recorded as effective_k).
inline FirstTokenResult phi_first(const TokenStep& step, int k_top) {
    if (step.top_logprobs.empty()) throw DataError("phi_first: step has no logprobs");
    if (k_top < 2) throw DataError("phi_first: k_top must be >= 2");

    const size_t k = std::min<size_t>(static_cast<size_t>(k_top), step.top_logprobs.size());
    FirstTokenResult res;
    res.effective_k = static_cast<int>(k);
    if (k == 1) {
        res.phi = 1.0;
        res.entropy_h = 0.0;
        res.degenerate = true;
        return res;
    }

    double sum = 0.0;
    std::vector<double> p(k);
    for (size_t i = 0; i < k; ++i) {
        const double lp = step.top_logprobs[i].logprob;
        if (!std::isfinite(lp)) throw DataError("phi_first: non-finite logprob");
        p[i] = std::exp(lp);
        sum += p[i];
    }
    if (sum <= 0.0) throw DataError("phi_first: zero total probability mass");

    double h = 0.0;
    for (size_t i = 0; i < k; ++i) {
        const double q = p[i] / sum;
        if (q > 0.0) h -= q * std::log(q);
    }
    res.entropy_h = h;
    res.phi = 1.0 - h / std::log(static_cast<double>(k));
    if (res.phi < 0.0) res.phi = 0.0;  // guard against rounding just below 0
    if (res.phi > 1.0) res.phi = 1.0;
    return res;
}

enum class Granularity { Full, First3Words, First1Word };

inline std::string agreement_key(std::string_view text, Granularity g,
                                 const NormalizationRules& rules) {
    std::string norm = normalize_answer(text, rules);
    if (g == Granularity::Full) return norm;
    const size_t want = (g == Granularity::First3Words) ? 3 : 1;
    auto words = split_words(norm);
    if (words.size() > want) words.resize(want);
    std::string key;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) key.push_back(' ');
        key += words[i];
    }
    return key;
}

/// Fraction of samples whose normalized comparison key (full string, first
/// three words, or first word) equals the greedy answer's key.
inline double surface_agreement(std::string_view greedy_text,
                                const std::vector<std::string>& sample_texts, Granularity g,
                                const NormalizationRules& rules = {}) {
    if (sample_texts.empty()) throw DataError("surface_agreement: no samples");
    const std::string gkey = agreement_key(greedy_text, g, rules);
    size_t matches = 0;
    for (const auto& s : sample_texts)
        if (agreement_key(s, g, rules) == gkey) ++matches;
    return static_cast<double>(matches) / static_cast<double>(sample_texts.size());
}

/// First integer in the text, if it lies in [0, 100]; otherwise missing.
inline std::optional<int> parse_verbalized(std::string_view text) {
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] >= '0' && text[i] <= '9') {
            bool negative = i > 0 && text[i - 1] == '-';
            long long v = 0;
            size_t j = i;
            while (j < text.size() && text[j] >= '0' && text[j] <= '9') {
                v = v * 10 + (text[j] - '0');
                if (v > 1000000) break;
                ++j;
            }
            if (negative) v = -v;
            if (v >= 0 && v <= 100) return static_cast<int>(v);
            return std::nullopt;
        }
    }
    return std::nullopt;
}

namespace detail {

inline bool is_special_token(std::string_view t) {
    static const char* known[] = {"</s>", "<s>", "<|eot_id|>", "<|endoftext|>", "<|im_end|>",
                                  "<|end|>", "[EOS]", "[SEP]", "<eos>", "<pad>"};
    for (const char* k : known)
        if (t == k) return true;
    // generic <|...|> markers
    return t.size() > 4 && t.substr(0, 2) == "<|" && t.substr(t.size() - 2) == "|>";
}

}  // namespace detail

/// Number of generated answer tokens, excluding end-of-sequence and other
/// special markers. Counts tokens, not content tokens.
inline int answer_length(const GenerationRecord& record) {
    int count = 0;
    for (const auto& s : record.greedy_steps)
        if (!detail::is_special_token(s.token_text)) ++count;
    return count;
}

}  // namespace confsig
