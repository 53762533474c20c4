#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace confsig {

// Minimal UTF-8 handling. Classification covers ASCII plus the Unicode
// punctuation and space blocks that short QA answers actually contain
// (general punctuation, CJK punctuation, fullwidth forms, Latin-1
// punctuation). Malformed bytes are treated as opaque content.

inline size_t utf8_decode(std::string_view s, size_t pos, uint32_t& cp) {
    unsigned char c = static_cast<unsigned char>(s[pos]);
    if (c < 0x80) {
        cp = c;
        return 1;
    }
    size_t len = 0;
    if ((c & 0xE0) == 0xC0) {
        cp = c & 0x1F;
        len = 2;
    } else if ((c & 0xF0) == 0xE0) {
        cp = c & 0x0F;
        len = 3;
    } else if ((c & 0xF8) == 0xF0) {
        cp = c & 0x07;
        len = 4;
    } else {
        cp = 0xFFFD;
        return 1;
    }
    if (pos + len > s.size()) {
        cp = 0xFFFD;
        return 1;
    }
    for (size_t i = 1; i < len; ++i) {
        unsigned char cc = static_cast<unsigned char>(s[pos + i]);
        if ((cc & 0xC0) != 0x80) {
            cp = 0xFFFD;
            return 1;
        }
        cp = (cp << 6) | (cc & 0x3F);
    }
    return len;
}

inline void utf8_encode(uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline bool cp_is_space(uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return (cp >= 0x2000 && cp <= 0x200A);
    }
}

inline bool cp_is_control(uint32_t cp) {
    return cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp <= 0x9F);
}

inline bool cp_is_punct(uint32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    // Latin-1 punctuation and symbols, excluding the letters ª (AA) and º (BA).
    if (cp >= 0xA1 && cp <= 0xBF && cp != 0xAA && cp != 0xBA) return true;
    if (cp == 0xD7 || cp == 0xF7) return true;
    if (cp >= 0x2010 && cp <= 0x2027) return true;   // dashes, quotes, bullets
    if (cp >= 0x2030 && cp <= 0x205E) return true;   // per-mille .. misc
    if (cp >= 0x3001 && cp <= 0x303F) return true;   // CJK punctuation
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;   // fullwidth ! .. /
    if (cp >= 0xFF1A && cp <= 0xFF20) return true;
    if (cp >= 0xFF3B && cp <= 0xFF40) return true;
    if (cp >= 0xFF5B && cp <= 0xFF65) return true;
    return false;
}

// Compatibility fold for the forms that show up in model output: fullwidth
// ASCII, typographic quotes and dashes, ellipsis, no-break spaces, fi/fl
// ligatures. Not a full NFKC pass.
inline void fold_codepoint(uint32_t cp, std::string& out) {
    if (cp >= 0xFF01 && cp <= 0xFF5E) {  // fullwidth ASCII block
        utf8_encode(cp - 0xFF00 + 0x20, out);
        return;
    }
    switch (cp) {
        case 0x2018: case 0x2019: case 0x201A: case 0x201B: case 0x2032:
            out.push_back('\'');
            return;
        case 0x201C: case 0x201D: case 0x201E: case 0x201F: case 0x2033:
            out.push_back('"');
            return;
        case 0x2010: case 0x2011: case 0x2012: case 0x2013: case 0x2014: case 0x2015:
            out.push_back('-');
            return;
        case 0x2026:
            out += "...";
            return;
        case 0xA0: case 0x202F: case 0x2007:
            out.push_back(' ');
            return;
        case 0xFB01:
            out += "fi";
            return;
        case 0xFB02:
            out += "fl";
            return;
        default:
            utf8_encode(cp, out);
    }
}

inline uint32_t lower_codepoint(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    // Latin-1 uppercase letters (except the multiplication sign).
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    return cp;
}

struct NormalizationRules {
    bool lowercase = true;
    bool compat_fold = true;
    bool strip_punctuation = true;
    bool collapse_whitespace = true;
    bool drop_leading_articles = true;
};

/// SQuAD-style answer normalization. Idempotent by construction: fold,
/// lowercase, strip punctuation, collapse whitespace, then drop leading
/// articles (a/an/the) repeatedly.
inline std::string normalize_answer(std::string_view text, const NormalizationRules& rules = {}) {
    std::string folded;
    folded.reserve(text.size());
    for (size_t i = 0; i < text.size();) {
        uint32_t cp;
        i += utf8_decode(text, i, cp);
        if (rules.compat_fold)
            fold_codepoint(cp, folded);
        else
            utf8_encode(cp, folded);
    }

    std::string out;
    out.reserve(folded.size());
    bool pending_space = false;
    for (size_t i = 0; i < folded.size();) {
        uint32_t cp;
        i += utf8_decode(folded, i, cp);
        if (rules.lowercase) cp = lower_codepoint(cp);
        if (cp_is_space(cp) || cp_is_control(cp)) {
            if (rules.collapse_whitespace) {
                if (!out.empty()) pending_space = true;
            } else {
                utf8_encode(cp, out);
            }
            continue;
        }
        if (rules.strip_punctuation && cp_is_punct(cp)) continue;
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        utf8_encode(cp, out);
    }

    if (rules.drop_leading_articles) {
        for (;;) {
            std::string_view v = out;
            size_t cut = 0;
            if (v.rfind("the ", 0) == 0) cut = 4;
            else if (v.rfind("an ", 0) == 0) cut = 3;
            else if (v.rfind("a ", 0) == 0) cut = 2;
            else if (v == "the" || v == "an" || v == "a") cut = v.size();
            else break;
            out.erase(0, cut);
        }
    }
    return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> words;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        size_t start = i;
        while (i < s.size() && s[i] != ' ') ++i;
        if (i > start) words.emplace_back(s.substr(start, i - start));
    }
    return words;
}

}  // namespace confsig
