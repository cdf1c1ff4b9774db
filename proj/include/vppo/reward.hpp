#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vppo {

// Minimalist rule-based reward: pull the text between the answer tags, trim
// whitespace, compare exactly. 1 for a match, 0 for everything else. No format
// rewards of any kind.

inline constexpr std::string_view kAnswerOpenTag = "<answer>";
inline constexpr std::string_view kAnswerCloseTag = "</answer>";

struct RewardOutcome {
    int reward = 0;  // always 0 or 1
    std::optional<std::string> extracted;
    bool well_formatted = false;  // exactly one properly ordered tag pair
};

inline std::string_view trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Inner text of the first well-ordered tag pair; nullopt when the pair is
// missing, unclosed, or reversed. Absence is a value, not an error.
inline std::optional<std::string> extract_answer(std::string_view text) {
    size_t open = text.find(kAnswerOpenTag);
    if (open == std::string_view::npos) return std::nullopt;
    size_t start = open + kAnswerOpenTag.size();
    size_t close = text.find(kAnswerCloseTag, start);
    if (close == std::string_view::npos) return std::nullopt;
    return std::string(text.substr(start, close - start));
}

namespace detail {

inline int count_occurrences(std::string_view text, std::string_view what) {
    int n = 0;
    size_t pos = 0;
    while ((pos = text.find(what, pos)) != std::string_view::npos) {
        ++n;
        pos += what.size();
    }
    return n;
}

}  // namespace detail

inline RewardOutcome score(std::string_view response_text, std::string_view reference) {
    if (trim(reference).empty()) throw std::invalid_argument("score: empty reference answer");
    RewardOutcome out;
    out.extracted = extract_answer(response_text);
    int opens = detail::count_occurrences(response_text, kAnswerOpenTag);
    int closes = detail::count_occurrences(response_text, kAnswerCloseTag);
    out.well_formatted = opens == 1 && closes == 1 && out.extracted.has_value();
    if (out.well_formatted && trim(*out.extracted) == trim(reference)) out.reward = 1;
    return out;
}

inline double format_ratio(std::span<const RewardOutcome> batch) {
    if (batch.empty()) throw std::invalid_argument("format_ratio: empty batch");
    size_t ok = 0;
    for (const RewardOutcome& r : batch)
        if (r.well_formatted) ++ok;
    return static_cast<double>(ok) / static_cast<double>(batch.size());
}

}  // namespace vppo
