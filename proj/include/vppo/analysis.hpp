#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vppo/model.hpp"
#include "vppo/rl.hpp"
#include "vppo/tokenizer.hpp"

namespace vppo {

// The five reflection markers, matched case-insensitively as substrings.
// Trailing commas are part of the patterns.
inline constexpr std::array<std::string_view, 5> kReflectionPatterns = {
    "wait,", "recheck", "retry", "alternatively,", "however,"};

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty() || haystack.size() < needle.size()) return false;
    for (size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool hit = true;
        for (size_t j = 0; j < needle.size(); ++j) {
            if (std::tolower(static_cast<unsigned char>(haystack[i + j])) !=
                std::tolower(static_cast<unsigned char>(needle[j]))) {
                hit = false;
                break;
            }
        }
        if (hit) return true;
    }
    return false;
}

inline std::pair<bool, std::vector<std::string>> detect_reflection(std::string_view text) {
    std::vector<std::string> hits;
    for (std::string_view p : kReflectionPatterns)
        if (contains_ci(text, p)) hits.emplace_back(p);
    return {!hits.empty(), hits};
}

// Repeat-score parameters. The metric is a stand-in for a qualitative notion,
// so everything is configurable: score = max over n in [n_min, n_max] of the
// fraction of positions starting an n-gram that occurs more than once; onset =
// earliest position whose onset_n-gram reoccurs at least onset_min_repeats
// times strictly downstream.
struct RepeatParams {
    int n_min = 4;
    int n_max = 16;
    int onset_n = 8;
    int onset_min_repeats = 3;
};

struct RepetitionReport {
    double repeat_score = 0.0;  // in [0, 1]
    std::optional<int> first_repetition_onset;
    bool truncated = false;
    bool reflective = false;
    std::vector<std::string> reflection_patterns_hit;
};

// Depends only on the equality structure of the ids (invariant under
// relabeling).
inline RepetitionReport repeat_metrics(std::span<const int> gen_tokens,
                                       const RepeatParams& params = {}) {
    if (gen_tokens.empty())
        throw std::invalid_argument("repeat_metrics: empty generation");
    RepetitionReport rep;
    int t_len = static_cast<int>(gen_tokens.size());

    std::map<std::vector<int>, int> counts;
    std::vector<int> gram;
    for (int n = params.n_min; n <= params.n_max; ++n) {
        if (n > t_len) break;
        counts.clear();
        for (int i = 0; i + n <= t_len; ++i) {
            gram.assign(gen_tokens.begin() + i, gen_tokens.begin() + i + n);
            ++counts[gram];
        }
        int dup_positions = 0;
        for (int i = 0; i + n <= t_len; ++i) {
            gram.assign(gen_tokens.begin() + i, gen_tokens.begin() + i + n);
            if (counts[gram] >= 2) ++dup_positions;
        }
        double frac = static_cast<double>(dup_positions) / static_cast<double>(t_len - n + 1);
        rep.repeat_score = std::max(rep.repeat_score, frac);
    }

    int n = params.onset_n;
    if (n <= t_len) {
        for (int i = 0; i + n <= t_len && !rep.first_repetition_onset; ++i) {
            int reoccur = 0;
            for (int j = i + 1; j + n <= t_len; ++j) {
                bool eq = true;
                for (int k = 0; k < n; ++k)
                    if (gen_tokens[static_cast<size_t>(i + k)] !=
                        gen_tokens[static_cast<size_t>(j + k)]) {
                        eq = false;
                        break;
                    }
                if (eq && ++reoccur >= params.onset_min_repeats) {
                    rep.first_repetition_onset = i;
                    break;
                }
            }
        }
    }
    return rep;
}

inline double truncate_rate(std::span<const Trajectory> batch) {
    if (batch.empty()) throw std::invalid_argument("truncate_rate: empty batch");
    size_t n = 0;
    for (const Trajectory& t : batch)
        if (t.truncated) ++n;
    return static_cast<double>(n) / static_cast<double>(batch.size());
}

// Mean generated length over responses that are both correct and reflective;
// absent when none qualify.
inline std::optional<double> avg_correct_reflection_length(
    std::span<const double> rewards, std::span<const char> reflective,
    std::span<const size_t> gen_lengths) {
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < rewards.size(); ++i) {
        if (rewards[i] == 1.0 && reflective[i]) {
            sum += static_cast<double>(gen_lengths[i]);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

// One trajectory of a scored batch, carrying both advantage estimates over the
// same tokens.
struct ScoredTrajectory {
    const Trajectory* traj = nullptr;
    std::span<const double> ppo_advantages;   // normalized, token-level
    std::span<const double> grpo_advantages;  // group-relative, token-level
    std::optional<int> onset;                 // from repeat_metrics
};

struct RepetitiveAdvantageSummary {
    std::optional<double> ppo_mean;
    std::optional<double> grpo_mean;
    size_t token_count = 0;
};

// Means over exactly the tokens at/after each trajectory's repetition onset.
// Both estimators see the identical index set; trajectories without an onset
// contribute nothing.
inline RepetitiveAdvantageSummary advantage_on_repetitive_tokens(
    std::span<const ScoredTrajectory> batch) {
    double ppo_sum = 0.0, grpo_sum = 0.0;
    size_t count = 0;
    for (const ScoredTrajectory& s : batch) {
        if (!s.onset) continue;
        size_t t_len = s.traj->length();
        if (s.ppo_advantages.size() != t_len || s.grpo_advantages.size() != t_len)
            throw std::invalid_argument(
                "advantage_on_repetitive_tokens: advantage lengths disagree");
        for (size_t t = static_cast<size_t>(*s.onset); t < t_len; ++t) {
            ppo_sum += s.ppo_advantages[t];
            grpo_sum += s.grpo_advantages[t];
            ++count;
        }
    }
    RepetitiveAdvantageSummary out;
    out.token_count = count;
    if (count > 0) {
        out.ppo_mean = ppo_sum / static_cast<double>(count);
        out.grpo_mean = grpo_sum / static_cast<double>(count);
    }
    return out;
}

// Per-token critic values of one trajectory as JSONL records
// {position, token_text, value}, for external rendering.
inline std::vector<nlohmann::ordered_json> value_heatmap_dump(const CriticNet& critic,
                                                              const Trajectory& traj,
                                                              const Tokenizer& tok) {
    traj.validate();
    std::vector<int> full = traj.prompt_tokens;
    full.insert(full.end(), traj.gen_tokens.begin(), traj.gen_tokens.end());
    CriticSession session(critic);
    std::vector<double> values;
    values.reserve(full.size());
    for (int t : full) values.push_back(session.step(t));

    // value of state s_t (prompt + t generated tokens) sits at position P-1+t
    size_t p_len = traj.prompt_tokens.size();
    std::vector<nlohmann::ordered_json> out;
    for (size_t t = 0; t < traj.length(); ++t) {
        nlohmann::ordered_json rec;
        rec["position"] = t;
        rec["token_text"] = tok.token_text(traj.gen_tokens[t]);
        rec["value"] = values[p_len - 1 + t];
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace vppo
