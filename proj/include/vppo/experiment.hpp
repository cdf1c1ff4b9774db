#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vppo/config.hpp"
#include "vppo/train.hpp"

namespace vppo {

// Artifacts of a run: config snapshot up front, per-iteration stats CSV,
// periodic + final checkpoints, pool JSONL, per-prompt stats CSV, optional
// rollout dumps. Re-running from the snapshot reproduces the CSV bitwise.

namespace detail {

inline void dump_rollouts_jsonl(std::ostream& os, const TrainState& st, int64_t iteration,
                                const std::vector<RolloutItem>& items) {
    for (const RolloutItem& item : items) {
        const PoolEntry& entry = st.pool.entries[item.pool_index];
        nlohmann::ordered_json j;
        j["iteration"] = iteration;
        j["prompt_slot"] = item.prompt_slot;
        j["response_idx"] = item.response_idx;
        j["pool_id"] = entry.id;
        j["question"] = entry.task.question;
        j["answer"] = entry.task.answer;
        j["gen_text"] = item.gen_text;
        j["gen_tokens"] = item.traj.gen_tokens;
        j["prompt_tokens"] = item.traj.prompt_tokens;
        j["reward"] = item.traj.terminal_reward;
        j["truncated"] = item.traj.truncated;
        j["well_formatted"] = item.outcome.well_formatted;
        j["old_values"] = item.traj.old_values;
        j["old_logprobs"] = item.traj.old_logprobs;
        os << j.dump() << "\n";
    }
}

}  // namespace detail

struct RunResult {
    std::string stats_csv_path;
    std::string final_checkpoint_path;
    std::vector<IterationStats> stats;
};

// Optional per-iteration observer; return false to stop the run early.
using IterationObserver = std::function<bool(const IterationStats&, const TrainState&)>;

inline RunResult run_train(const ExperimentConfig& cfg_in,
                           const IterationObserver& observer = {}) {
    ExperimentConfig cfg = cfg_in;
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    fs::path out(cfg.output_dir);

    {
        std::ofstream snap(out / "config.snapshot.cfg", std::ios::trunc);
        if (!snap) throw std::runtime_error("run: cannot write config snapshot");
        snap << serialize_config(cfg);
    }

    TrainState st = cfg.init_checkpoint.empty() ? init_train_state(cfg)
                                                : load_train_state(cfg, cfg.init_checkpoint);
    save_pool_jsonl(st.pool, (out / "pool.jsonl").string());

    RunResult result;
    result.stats_csv_path = (out / "stats.csv").string();
    std::ofstream csv(result.stats_csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("run: cannot write stats.csv");
    csv << stats_csv_header() << "\n";
    csv.flush();

    std::ofstream rollout_os;
    while (st.iteration < cfg.total_iterations) {
        bool dump = cfg.dump_rollouts_every > 0 &&
                    ((st.iteration + 1) % cfg.dump_rollouts_every == 0);
        std::vector<RolloutItem> items;
        IterationStats stats = train_iteration(st, dump ? &items : nullptr);
        csv << stats_csv_row(stats) << "\n";
        csv.flush();
        result.stats.push_back(stats);

        if (dump) {
            char name[64];
            std::snprintf(name, sizeof(name), "rollouts_iter%06lld.jsonl",
                          static_cast<long long>(stats.iteration));
            std::ofstream ros(out / name, std::ios::trunc);
            detail::dump_rollouts_jsonl(ros, st, stats.iteration, items);
        }
        if (cfg.checkpoint_every > 0 && stats.iteration % cfg.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "ckpt_iter%06lld.bin",
                          static_cast<long long>(stats.iteration));
            save_train_state(st, (out / name).string());
        }
        if (observer && !observer(stats, st)) break;
    }

    result.final_checkpoint_path = (out / "ckpt_final.bin").string();
    save_train_state(st, result.final_checkpoint_path);
    save_pool_stats_csv(st.pool, (out / "prompt_stats.csv").string());
    return result;
}

// ---------------------------------------------------------------------------
// evaluation: per-question mean accuracy over n sampled responses

struct EvalReport {
    double mean_accuracy = 0.0;
    int64_t responses_per_question = 0;
    nlohmann::ordered_json json;
};

inline EvalReport evaluate_policy(const PolicyNet& policy, const PromptPool& pool,
                                  const SamplerConfig& sampler_base, int64_t responses,
                                  uint64_t seed) {
    if (pool.empty()) throw std::invalid_argument("eval: empty pool");
    if (responses <= 0) throw std::invalid_argument("eval: responses must be positive");
    Tokenizer tok;
    EvalReport report;
    report.responses_per_question = responses;
    nlohmann::ordered_json results = nlohmann::ordered_json::array();
    double total = 0.0;
    for (size_t q = 0; q < pool.size(); ++q) {
        const PoolEntry& entry = pool.entries[q];
        std::vector<int> prompt = render_prompt(tok, entry.task);
        PolicySession prefill(policy);
        std::vector<double> logits;
        for (int t : prompt) logits = prefill.step(t);
        int correct = 0;
        for (int64_t r = 0; r < responses; ++r) {
            SamplerConfig scfg = sampler_base;
            scfg.seed = mix_seed({seed, stream_id("eval"), static_cast<uint64_t>(q),
                                  static_cast<uint64_t>(r)});
            PolicySession session = prefill;
            SampleResult sample = sample_continue(session, logits, scfg);
            correct += score(tok.decode(sample.gen_tokens), entry.task.answer).reward;
        }
        double acc = static_cast<double>(correct) / static_cast<double>(responses);
        total += acc;
        nlohmann::ordered_json rec;
        rec["id"] = entry.id;
        rec["question"] = entry.task.question;
        rec["accuracy"] = acc;
        results.push_back(std::move(rec));
    }
    report.mean_accuracy = total / static_cast<double>(pool.size());
    report.json["mean_accuracy"] = report.mean_accuracy;
    report.json["responses_per_question"] = responses;
    report.json["seed"] = seed;
    report.json["results"] = std::move(results);
    return report;
}

inline PolicyNet load_policy_from_checkpoint(const std::string& path, Arch* arch_out = nullptr) {
    Checkpoint ck = read_checkpoint(path);
    Arch arch;
    arch.vocab = ck.manifest["arch"]["vocab"].get<int>();
    arch.d_model = ck.manifest["arch"]["d_model"].get<int>();
    arch.n_layers = ck.manifest["arch"]["n_layers"].get<int>();
    arch.n_heads = ck.manifest["arch"]["n_heads"].get<int>();
    arch.max_len = ck.manifest["arch"]["max_len"].get<int>();
    auto [policy, critic] = init_models(0, arch);
    for (auto& [n, t] : named_params(policy)) {
        const Tensor& src = ck.tensor("policy." + n);
        std::copy(src.values().begin(), src.values().end(), t.values().begin());
    }
    if (arch_out) *arch_out = arch;
    return std::move(policy);
}

inline CriticNet load_critic_from_checkpoint(const std::string& path, Arch* arch_out = nullptr) {
    Checkpoint ck = read_checkpoint(path);
    Arch arch;
    arch.vocab = ck.manifest["arch"]["vocab"].get<int>();
    arch.d_model = ck.manifest["arch"]["d_model"].get<int>();
    arch.n_layers = ck.manifest["arch"]["n_layers"].get<int>();
    arch.n_heads = ck.manifest["arch"]["n_heads"].get<int>();
    arch.max_len = ck.manifest["arch"]["max_len"].get<int>();
    auto [policy, critic] = init_models(0, arch);
    for (auto& [n, t] : named_params(critic)) {
        const Tensor& src = ck.tensor("critic." + n);
        std::copy(src.values().begin(), src.values().end(), t.values().begin());
    }
    if (arch_out) *arch_out = arch;
    return std::move(critic);
}

inline EvalReport run_eval(const std::string& checkpoint_path, const PromptPool& pool,
                           int64_t responses, uint64_t seed) {
    PolicyNet policy = load_policy_from_checkpoint(checkpoint_path);
    SamplerConfig sampler;  // recipe sampling: temperature and top-p at 1.0
    sampler.max_new_tokens = 48;
    return evaluate_policy(policy, pool, sampler, responses, seed);
}

// ---------------------------------------------------------------------------
// ablation presets: paired runs with shared seeds, aligned CSVs

struct AblationArm {
    std::string name;
    ExperimentConfig cfg;
};

inline std::vector<AblationArm> ablation_arms(const std::string& preset,
                                              const ExperimentConfig& base) {
    std::vector<AblationArm> arms;
    auto arm = [&](const std::string& name) {
        AblationArm a;
        a.name = name;
        a.cfg = base;
        return a;
    };
    if (preset == "gae_lambda") {
        AblationArm a = arm("lambda_1.0");
        a.cfg.algo.lambda = 1.0;
        AblationArm b = arm("lambda_0.95");
        b.cfg.algo.lambda = 0.95;
        arms = {a, b};
    } else if (preset == "kl_mode") {
        AblationArm none = arm("kl_none");
        AblationArm loss = arm("kl_loss");
        loss.cfg.algo.kl_mode = KlMode::loss;
        loss.cfg.algo.kl_coef = 0.1;
        AblationArm penalty = arm("kl_penalty");
        penalty.cfg.algo.kl_mode = KlMode::penalty;
        penalty.cfg.algo.kl_coef = 0.1;
        arms = {none, loss, penalty};
    } else if (preset == "data_scale") {
        AblationArm large = arm("pool_large");
        large.cfg.pool_preset = "large";
        large.cfg.pool_spec.clear();
        large.cfg.pool_file.clear();
        AblationArm small = arm("pool_small");
        small.cfg.pool_preset = "small";
        small.cfg.pool_spec.clear();
        small.cfg.pool_file.clear();
        arms = {large, small};
    } else if (preset == "algo_ppo_vs_grpo") {
        AblationArm ppo = arm("ppo");
        ppo.cfg.algo.algorithm = Algorithm::PPO;
        AblationArm grpo = arm("grpo");
        grpo.cfg.algo.algorithm = Algorithm::GRPO;
        arms = {ppo, grpo};
    } else {
        throw std::invalid_argument("unknown ablation preset: " + preset);
    }
    return arms;
}

// Runs every arm under the base seed and writes per-arm stats plus a merged
// comparison CSV aligned on iteration.
inline void run_ablation(const std::string& preset, const ExperimentConfig& base,
                         const std::string& output_dir) {
    namespace fs = std::filesystem;
    std::vector<AblationArm> arms = ablation_arms(preset, base);
    std::vector<RunResult> results;
    for (AblationArm& arm : arms) {
        arm.cfg.output_dir = (fs::path(output_dir) / arm.name).string();
        std::cerr << "[ablate] running arm " << arm.name << "\n";
        results.push_back(run_train(arm.cfg));
    }
    fs::create_directories(output_dir);
    std::ofstream cmp(fs::path(output_dir) / "comparison.csv", std::ios::trunc);
    cmp << "iteration";
    for (const AblationArm& arm : arms)
        cmp << "," << arm.name << "_mean_reward," << arm.name << "_mean_resp_len," << arm.name
            << "_repeat_score," << arm.name << "_truncate_rate";
    cmp << "\n";
    size_t rows = 0;
    for (const RunResult& r : results) rows = std::max(rows, r.stats.size());
    for (size_t i = 0; i < rows; ++i) {
        cmp << (i + 1);
        for (const RunResult& r : results) {
            if (i < r.stats.size()) {
                const IterationStats& s = r.stats[i];
                cmp << "," << s.mean_reward << "," << s.mean_resp_len << "," << s.repeat_score
                    << "," << s.truncate_rate;
            } else {
                cmp << ",,,,";
            }
        }
        cmp << "\n";
    }
}

}  // namespace vppo
