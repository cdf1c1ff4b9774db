#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vppo/rng.hpp"
#include "vppo/tasks.hpp"

namespace vppo {

struct PromptStats {
    int64_t attempts = 0;
    int64_t correct = 0;

    double pass_rate() const {
        return attempts > 0 ? static_cast<double>(correct) / static_cast<double>(attempts) : 0.0;
    }
};

struct PoolEntry {
    std::string id;
    TaskInstance task;
    PromptStats stats;
};

struct PromptPool {
    std::vector<PoolEntry> entries;

    size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }

    const PoolEntry* find(const std::string& id) const {
        for (const PoolEntry& e : entries)
            if (e.id == id) return &e;
        return nullptr;
    }
};

struct PoolSpecEntry {
    TaskKind kind = TaskKind::add;
    int difficulty = 1;
    int count = 0;
};

// Spec string format: "kind:difficulty:count" joined by commas, e.g.
// "add:2:64,mod:1:32".
inline std::vector<PoolSpecEntry> parse_pool_spec(const std::string& spec) {
    std::vector<PoolSpecEntry> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::stringstream is(item);
        std::string kind, diff, count;
        if (!std::getline(is, kind, ':') || !std::getline(is, diff, ':') ||
            !std::getline(is, count, ':'))
            throw std::invalid_argument("pool spec entry must be kind:difficulty:count, got '" +
                                        item + "'");
        PoolSpecEntry e;
        e.kind = task_kind_from(kind);
        e.difficulty = std::stoi(diff);
        e.count = std::stoi(count);
        out.push_back(e);
    }
    if (out.empty()) throw std::invalid_argument("pool spec is empty");
    return out;
}

inline std::string pool_spec_to_string(const std::vector<PoolSpecEntry>& spec) {
    std::string out;
    for (size_t i = 0; i < spec.size(); ++i) {
        if (i) out += ",";
        out += std::string(to_string(spec[i].kind)) + ":" + std::to_string(spec[i].difficulty) +
               ":" + std::to_string(spec[i].count);
    }
    return out;
}

// Deterministic pool; duplicate questions are regenerated away so every id
// maps to a distinct prompt.
inline PromptPool build_pool(const std::vector<PoolSpecEntry>& spec, uint64_t seed) {
    PromptPool pool;
    std::unordered_map<std::string, int> seen;
    for (const PoolSpecEntry& se : spec) {
        if (se.count <= 0) throw std::invalid_argument("build_pool: counts must be positive");
        for (int i = 0; i < se.count; ++i) {
            uint64_t task_seed = mix_seed({seed, stream_id("pool"),
                                           static_cast<uint64_t>(se.kind),
                                           static_cast<uint64_t>(se.difficulty),
                                           static_cast<uint64_t>(i)});
            TaskInstance t = gen_task(se.kind, se.difficulty, task_seed);
            for (uint64_t salt = 1; seen.count(t.question) && salt < 1000; ++salt)
                t = gen_task(se.kind, se.difficulty, mix_seed({task_seed, salt}));
            seen[t.question] = 1;
            PoolEntry e;
            e.id = std::string(to_string(se.kind)) + std::to_string(se.difficulty) + "-" +
                   std::to_string(i);
            e.task = t;
            pool.entries.push_back(std::move(e));
        }
    }
    return pool;
}

// Named pool presets. "large" is the diverse mixed-difficulty corpus; "small"
// is a single-kind hard set an order of magnitude smaller, for the data-scale
// ablation.
inline std::vector<PoolSpecEntry> preset_pool_spec(const std::string& name) {
    if (name == "large")
        return parse_pool_spec(
            "add:1:6250,add:2:6250,mod:1:6250,mod:2:6250,"
            "compare:1:6250,compare:2:6250,sort:3:6250,sort:4:6250");
    if (name == "small") return parse_pool_spec("sort:4:1000");
    // single-digit warmup mass bootstraps the binary reward from random init
    if (name == "small-add") return parse_pool_spec("add:1:64,add:2:64");
    if (name == "small-add-eval") return parse_pool_spec("add:2:32");
    throw std::invalid_argument("unknown pool preset: " + name);
}

// Keeps instances whose pass rate lies in [lo, hi]. Instances with fewer than
// min_attempts attempts are kept: not enough evidence to exclude them.
inline PromptPool filter_by_passrate(const PromptPool& pool, double lo, double hi,
                                     int64_t min_attempts = 8) {
    if (lo > hi) throw std::invalid_argument("filter_by_passrate: lo > hi");
    PromptPool out;
    for (const PoolEntry& e : pool.entries) {
        if (e.stats.attempts < min_attempts) {
            out.entries.push_back(e);
            continue;
        }
        double rate = e.stats.pass_rate();
        if (rate >= lo && rate <= hi) out.entries.push_back(e);
    }
    return out;
}

// Hard-prompt mining for the annealing stage: strictly fewer than
// threshold_correct correct answers, among prompts attempted at least
// attempts_per_prompt times.
inline PromptPool mine_hard_prompts(const PromptPool& pool, int64_t threshold_correct = 4,
                                    int64_t attempts_per_prompt = 64) {
    PromptPool out;
    for (const PoolEntry& e : pool.entries)
        if (e.stats.attempts >= attempts_per_prompt && e.stats.correct < threshold_correct)
            out.entries.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// serialization: pool as JSONL {kind, difficulty, prompt, answer, id}, stats
// as a CSV of id,attempts,correct

inline void save_pool_jsonl(const PromptPool& pool, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("pool: cannot write " + path);
    for (const PoolEntry& e : pool.entries) {
        nlohmann::ordered_json j;
        j["kind"] = to_string(e.task.kind);
        j["difficulty"] = e.task.difficulty;
        j["prompt"] = e.task.question;
        j["answer"] = e.task.answer;
        j["id"] = e.id;
        os << j.dump() << "\n";
    }
}

inline PromptPool load_pool_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("pool: cannot open " + path);
    PromptPool pool;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        PoolEntry e;
        e.id = j.at("id").get<std::string>();
        e.task.kind = task_kind_from(j.at("kind").get<std::string>());
        e.task.difficulty = j.at("difficulty").get<int>();
        e.task.question = j.at("prompt").get<std::string>();
        e.task.answer = j.at("answer").get<std::string>();
        pool.entries.push_back(std::move(e));
    }
    if (pool.empty()) throw std::runtime_error("pool: no entries in " + path);
    return pool;
}

inline void save_pool_stats_csv(const PromptPool& pool, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("pool: cannot write " + path);
    os << "id,attempts,correct\n";
    for (const PoolEntry& e : pool.entries)
        os << e.id << "," << e.stats.attempts << "," << e.stats.correct << "\n";
}

inline void load_pool_stats_csv(PromptPool& pool, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("pool: cannot open " + path);
    std::unordered_map<std::string, PromptStats> stats;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, attempts, correct;
        std::getline(ss, id, ',');
        std::getline(ss, attempts, ',');
        std::getline(ss, correct, ',');
        stats[id] = PromptStats{std::stoll(attempts), std::stoll(correct)};
    }
    for (PoolEntry& e : pool.entries) {
        auto it = stats.find(e.id);
        if (it != stats.end()) e.stats = it->second;
    }
}

}  // namespace vppo
