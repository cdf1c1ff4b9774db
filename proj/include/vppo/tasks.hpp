#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vppo/rng.hpp"
#include "vppo/tokenizer.hpp"

namespace vppo {

enum class TaskKind { add, mod, compare, sort };

inline const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::add: return "add";
        case TaskKind::mod: return "mod";
        case TaskKind::compare: return "compare";
        case TaskKind::sort: return "sort";
    }
    return "?";
}

inline TaskKind task_kind_from(const std::string& s) {
    if (s == "add") return TaskKind::add;
    if (s == "mod") return TaskKind::mod;
    if (s == "compare") return TaskKind::compare;
    if (s == "sort") return TaskKind::sort;
    throw std::invalid_argument("unknown task kind: " + s);
}

struct TaskInstance {
    TaskKind kind = TaskKind::add;
    int difficulty = 1;
    std::string question;
    std::string answer;  // unique exact-match ground truth
};

namespace detail {

// Number with `digits` decimal digits; difficulty d draws the digit count
// uniformly from 1..d, so harder tasks still contain easy instances.
inline int64_t number_with_digits(Rng& rng, int digits) {
    if (digits == 1) return static_cast<int64_t>(rng.below(10));
    int64_t lo = 1;
    for (int i = 1; i < digits; ++i) lo *= 10;
    return lo + static_cast<int64_t>(rng.below(static_cast<uint64_t>(lo * 10 - lo)));
}

inline int64_t draw_operand(Rng& rng, int difficulty) {
    int digits = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(difficulty)));
    return number_with_digits(rng, digits);
}

}  // namespace detail

inline TaskInstance gen_task(TaskKind kind, int difficulty, uint64_t seed) {
    auto check_range = [&](int lo, int hi) {
        if (difficulty < lo || difficulty > hi)
            throw std::invalid_argument(std::string("gen_task: difficulty ") +
                                        std::to_string(difficulty) + " out of range for " +
                                        to_string(kind));
    };
    Rng rng(mix_seed({seed, stream_id("task"), static_cast<uint64_t>(kind),
                      static_cast<uint64_t>(difficulty)}));
    TaskInstance t;
    t.kind = kind;
    t.difficulty = difficulty;
    switch (kind) {
        case TaskKind::add: {
            check_range(1, 6);
            int64_t a = detail::draw_operand(rng, difficulty);
            int64_t b = detail::draw_operand(rng, difficulty);
            t.question = std::to_string(a) + "+" + std::to_string(b) + "=?";
            t.answer = std::to_string(a + b);
            break;
        }
        case TaskKind::mod: {
            check_range(1, 6);
            int64_t a = detail::draw_operand(rng, difficulty);
            int64_t m = 2 + static_cast<int64_t>(rng.below(8));
            t.question = std::to_string(a) + " mod " + std::to_string(m) + " = ?";
            t.answer = std::to_string(a % m);
            break;
        }
        case TaskKind::compare: {
            check_range(1, 6);
            int64_t a = detail::draw_operand(rng, difficulty);
            int64_t b = a;
            while (b == a) b = detail::draw_operand(rng, difficulty);
            t.question = std::to_string(a) + " or " + std::to_string(b) + "?";
            t.answer = std::to_string(std::max(a, b));
            break;
        }
        case TaskKind::sort: {
            check_range(2, 8);  // difficulty is the list length
            std::vector<int> xs(static_cast<size_t>(difficulty));
            for (int& x : xs) x = static_cast<int>(rng.below(10));
            std::string q = "sort:";
            for (size_t i = 0; i < xs.size(); ++i)
                q += (i ? ", " : " ") + std::to_string(xs[static_cast<size_t>(i)]);
            std::sort(xs.begin(), xs.end());
            std::string a;
            for (size_t i = 0; i < xs.size(); ++i)
                a += (i ? ", " : "") + std::to_string(xs[static_cast<size_t>(i)]);
            t.question = q;
            t.answer = a;
            break;
        }
    }
    return t;
}

// Prompt template. Mirrors the chat structure "preamble explaining the answer
// tags, user turn with the question, assistant turn opening inside the think
// block"; generation therefore starts inside <think>. Kept terse: prompt
// length dominates the per-iteration compute at this scale.
inline constexpr std::string_view kPromptPrefix = "answer in <answer> </answer>. user: ";
inline constexpr std::string_view kPromptSuffix = " assistant: <think>";

inline std::vector<int> render_prompt(const Tokenizer& tok, const std::string& question) {
    if (question.empty()) throw std::invalid_argument("render_prompt: empty question");
    std::string text;
    text.reserve(kPromptPrefix.size() + question.size() + kPromptSuffix.size());
    text.append(kPromptPrefix).append(question).append(kPromptSuffix);
    std::vector<int> ids;
    ids.push_back(Tokenizer::kBos);
    std::vector<int> body = tok.encode(text);
    ids.insert(ids.end(), body.begin(), body.end());
    return ids;
}

inline std::vector<int> render_prompt(const Tokenizer& tok, const TaskInstance& task) {
    return render_prompt(tok, task.question);
}

}  // namespace vppo
