#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vppo/tensor.hpp"

namespace vppo {

// One sampled response. Rewards are sparse by construction: a single terminal
// reward R in {0,1}, zero everywhere before the last generated token.
struct Trajectory {
    std::vector<int> prompt_tokens;
    std::vector<int> gen_tokens;        // a_0 .. a_{T-1}
    std::vector<double> old_logprobs;   // log pi_old(a_t | s_t)
    std::vector<double> old_values;     // V_old(s_t), t = 0..T-1
    double terminal_reward = 0.0;
    bool truncated = false;

    size_t length() const { return gen_tokens.size(); }

    void validate() const {
        if (gen_tokens.empty()) throw std::invalid_argument("trajectory: empty generation");
        if (old_logprobs.size() != gen_tokens.size() || old_values.size() != gen_tokens.size())
            throw std::invalid_argument(
                "trajectory: logprobs/values/tokens lengths disagree (" +
                std::to_string(old_logprobs.size()) + "/" + std::to_string(old_values.size()) +
                "/" + std::to_string(gen_tokens.size()) + ")");
    }
};

struct AdvantageRecord {
    std::vector<double> advantages;
    std::vector<double> value_targets;
    bool normalized = false;
};

enum class Algorithm { PPO, GRPO };
enum class KlMode { none, loss, penalty };

inline const char* to_string(Algorithm a) { return a == Algorithm::PPO ? "ppo" : "grpo"; }
inline const char* to_string(KlMode m) {
    switch (m) {
        case KlMode::none: return "none";
        case KlMode::loss: return "loss";
        case KlMode::penalty: return "penalty";
    }
    return "?";
}

struct AlgoConfig {
    Algorithm algorithm = Algorithm::PPO;
    double gamma = 1.0;
    double lambda = 1.0;
    double clip_epsilon = 0.2;
    KlMode kl_mode = KlMode::none;
    double kl_coef = 0.0;
    int prompts_per_step = 128;
    int responses_per_prompt = 64;
    int critic_minibatches = 12;
    bool advantage_norm = true;

    void validate() const {
        if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
            throw std::invalid_argument("algo: clip_epsilon must lie in (0,1)");
        if (algorithm == Algorithm::GRPO && responses_per_prompt < 2)
            throw std::invalid_argument("algo: GRPO needs at least 2 responses per prompt");
        if (prompts_per_step <= 0 || responses_per_prompt <= 0 || critic_minibatches <= 0)
            throw std::invalid_argument("algo: rollout sizes must be positive");
        if (gamma < 0.0 || gamma > 1.0 || lambda < 0.0 || lambda > 1.0)
            throw std::invalid_argument("algo: gamma/lambda must lie in [0,1]");
        if (kl_mode != KlMode::none && kl_coef <= 0.0)
            throw std::invalid_argument("algo: kl_coef must be positive when KL is enabled");
    }
};

// ---------------------------------------------------------------------------
// advantage estimation

// General GAE with terminal bootstrap V(s_T) = 0. Per-token rewards default to
// zeros-with-terminal-R; KL penalty shaping passes explicit rewards.
inline AdvantageRecord gae_general(const Trajectory& traj, double gamma, double lambda,
                                   const std::vector<double>* per_token_rewards = nullptr) {
    traj.validate();
    size_t t_len = traj.length();
    if (per_token_rewards && per_token_rewards->size() != t_len)
        throw std::invalid_argument("gae: reward vector length mismatch");
    AdvantageRecord rec;
    rec.advantages.resize(t_len);
    rec.value_targets.resize(t_len);
    double acc = 0.0;
    for (size_t i = t_len; i-- > 0;) {
        double r = per_token_rewards ? (*per_token_rewards)[i]
                                     : (i + 1 == t_len ? traj.terminal_reward : 0.0);
        double next_v = (i + 1 == t_len) ? 0.0 : traj.old_values[i + 1];
        double delta = r + gamma * next_v - traj.old_values[i];
        acc = delta + gamma * lambda * acc;
        rec.advantages[i] = acc;
        rec.value_targets[i] = acc + traj.old_values[i];
    }
    return rec;
}

// Closed form for gamma = lambda = 1: the TD sum telescopes to R - V(s_t) and
// every value target is exactly the terminal reward.
inline AdvantageRecord gae_simplified(const Trajectory& traj) {
    traj.validate();
    size_t t_len = traj.length();
    AdvantageRecord rec;
    rec.advantages.resize(t_len);
    rec.value_targets.resize(t_len);
    for (size_t i = 0; i < t_len; ++i) {
        rec.advantages[i] = traj.terminal_reward - traj.old_values[i];
        rec.value_targets[i] = traj.terminal_reward;
    }
    return rec;
}

// Batch-level normalization: one mean/std over every generated token in the
// iteration, population std, epsilon 1e-8.
inline void normalize_advantages(std::vector<AdvantageRecord>& batch) {
    size_t total = 0;
    for (const AdvantageRecord& r : batch) total += r.advantages.size();
    if (total < 2)
        throw std::invalid_argument("normalize_advantages: need at least 2 tokens");
    double mean = 0.0;
    for (const AdvantageRecord& r : batch)
        for (double a : r.advantages) mean += a;
    mean /= static_cast<double>(total);
    double var = 0.0;
    for (const AdvantageRecord& r : batch)
        for (double a : r.advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(total);
    double denom = std::sqrt(var) + 1e-8;
    for (AdvantageRecord& r : batch) {
        for (double& a : r.advantages) a = (a - mean) / denom;
        r.normalized = true;
    }
}

// Group-relative advantages: (R_i - mean(R)) / (std(R) + 1e-8), constant over
// all tokens of trajectory i. Population std over the group.
inline std::vector<std::vector<double>> grpo_advantages(std::span<const Trajectory> group) {
    if (group.size() < 2)
        throw std::invalid_argument("grpo_advantages: need a group of at least 2");
    double mean = 0.0;
    for (const Trajectory& t : group) mean += t.terminal_reward;
    mean /= static_cast<double>(group.size());
    double var = 0.0;
    for (const Trajectory& t : group)
        var += (t.terminal_reward - mean) * (t.terminal_reward - mean);
    var /= static_cast<double>(group.size());
    double denom = std::sqrt(var) + 1e-8;
    std::vector<std::vector<double>> out;
    out.reserve(group.size());
    for (const Trajectory& t : group) {
        t.validate();
        double a = (t.terminal_reward - mean) / denom;
        out.emplace_back(t.length(), a);
    }
    return out;
}

// ---------------------------------------------------------------------------
// losses (graph-building; gradients flow only through new_logprobs / pred)

inline Tensor constant_vector(std::span<const double> v) {
    return Tensor::from_data({static_cast<int>(v.size())}, {v.begin(), v.end()});
}

// Clipped surrogate, negated so minimizing it maximizes the PPO objective:
//   loss = -mean_t min(rho_t A_t, clip(rho_t, 1-eps, 1+eps) A_t)
inline Tensor ppo_policy_loss(const Tensor& new_logprobs, std::span<const double> old_logprobs,
                              std::span<const double> advantages, double epsilon) {
    if (new_logprobs.rank() != 1)
        throw std::invalid_argument("ppo_policy_loss: new_logprobs must be rank-1");
    size_t t_len = new_logprobs.numel();
    if (old_logprobs.size() != t_len || advantages.size() != t_len)
        throw std::invalid_argument("ppo_policy_loss: length mismatch (" +
                                    std::to_string(t_len) + "/" +
                                    std::to_string(old_logprobs.size()) + "/" +
                                    std::to_string(advantages.size()) + ")");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("ppo_policy_loss: epsilon out of (0,1)");
    Tensor old_c = constant_vector(old_logprobs);
    Tensor adv_c = constant_vector(advantages);
    Tensor ratio = vppo::exp(sub(new_logprobs, old_c));
    Tensor unclipped = mul(ratio, adv_c);
    Tensor clipped = mul(clamp(ratio, 1.0 - epsilon, 1.0 + epsilon), adv_c);
    return neg(mean_all(minimum(unclipped, clipped)));
}

// 1/2 mean squared error against the value targets (constant R when
// gamma = lambda = 1).
inline Tensor value_loss(const Tensor& pred_values, std::span<const double> value_targets) {
    if (pred_values.rank() != 1)
        throw std::invalid_argument("value_loss: pred_values must be rank-1");
    if (pred_values.numel() != value_targets.size())
        throw std::invalid_argument("value_loss: length mismatch (" +
                                    std::to_string(pred_values.numel()) + "/" +
                                    std::to_string(value_targets.size()) + ")");
    Tensor target_c = constant_vector(value_targets);
    return scale(mean_all(square(sub(pred_values, target_c))), 0.5);
}

// KL regularization exists only for the ablation arms; the recipe runs without
// it. Loss mode uses the non-negative estimator exp(d) - d - 1, d = ref - new.
inline Tensor kl_loss_term(const Tensor& new_logprobs, std::span<const double> ref_logprobs,
                           double coef) {
    if (new_logprobs.numel() != ref_logprobs.size())
        throw std::invalid_argument("kl_loss_term: length mismatch");
    if (!(coef > 0.0)) throw std::invalid_argument("kl_loss_term: coef must be positive");
    Tensor ref_c = constant_vector(ref_logprobs);
    Tensor d = sub(ref_c, new_logprobs);
    Tensor est = sub(vppo::exp(d), add_scalar(d, 1.0));
    return scale(mean_all(est), coef);
}

// Penalty mode shapes per-token rewards before advantage computation:
//   r_t <- r_t - coef * (logpi(a_t) - logpi_ref(a_t))
inline std::vector<double> kl_shaped_rewards(const Trajectory& traj,
                                             std::span<const double> ref_logprobs,
                                             double coef) {
    traj.validate();
    if (ref_logprobs.size() != traj.length())
        throw std::invalid_argument("kl_shaped_rewards: length mismatch");
    std::vector<double> rewards(traj.length(), 0.0);
    rewards.back() = traj.terminal_reward;
    for (size_t i = 0; i < rewards.size(); ++i)
        rewards[i] -= coef * (traj.old_logprobs[i] - ref_logprobs[i]);
    return rewards;
}

}  // namespace vppo
