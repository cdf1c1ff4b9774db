#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vppo/analysis.hpp"
#include "vppo/checkpoint.hpp"
#include "vppo/config.hpp"
#include "vppo/model.hpp"
#include "vppo/optim.hpp"
#include "vppo/pool.hpp"
#include "vppo/reward.hpp"
#include "vppo/rl.hpp"
#include "vppo/sampler.hpp"
#include "vppo/tasks.hpp"
#include "vppo/tokenizer.hpp"

namespace vppo {

struct IterationStats {
    int64_t iteration = 0;
    double mean_reward = 0.0;
    double mean_resp_len = 0.0;
    std::optional<double> mean_correct_reflection_len;
    double format_ratio = 0.0;
    double truncate_rate = 0.0;
    double repeat_score = 0.0;
    double policy_loss = 0.0;
    std::optional<double> value_loss;  // absent in GRPO mode
    std::optional<double> mean_advantage_repetitive;
    std::optional<double> grpo_mean_advantage_repetitive;
};

inline std::string stats_csv_header() {
    return "iteration,mean_reward,mean_resp_len,mean_correct_reflection_len,format_ratio,"
           "truncate_rate,repeat_score,policy_loss,value_loss,mean_advantage_repetitive,"
           "grpo_mean_advantage_repetitive";
}

inline std::string stats_csv_row(const IterationStats& s) {
    auto num = [](double v) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, ptr);
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    std::string row = std::to_string(s.iteration);
    row += "," + num(s.mean_reward);
    row += "," + num(s.mean_resp_len);
    row += "," + opt(s.mean_correct_reflection_len);
    row += "," + num(s.format_ratio);
    row += "," + num(s.truncate_rate);
    row += "," + num(s.repeat_score);
    row += "," + num(s.policy_loss);
    row += "," + opt(s.value_loss);
    row += "," + opt(s.mean_advantage_repetitive);
    row += "," + opt(s.grpo_mean_advantage_repetitive);
    return row;
}

// One sampled response with everything downstream phases need.
struct RolloutItem {
    int prompt_slot = 0;  // group index within the iteration
    int response_idx = 0;
    size_t pool_index = 0;
    Trajectory traj;
    std::string gen_text;
    RewardOutcome outcome;
    RepetitionReport rep;
};

struct TrainState {
    ExperimentConfig cfg;
    Tokenizer tok;
    PromptPool pool;
    PolicyNet policy;
    CriticNet critic;
    AdamW opt_policy;
    AdamW opt_critic;
    int64_t iteration = 0;  // completed iterations

    // reference model for the KL ablations: the frozen initial policy,
    // rebuilt lazily from the seed (never stored)
    std::optional<PolicyNet> ref_policy;
    int64_t ref_forward_count = 0;
    int64_t policy_update_count = 0;
};

inline TrainState init_train_state(const ExperimentConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    if (cfg.arch.vocab != st.tok.vocab_size())
        throw std::invalid_argument("config: arch.vocab must equal the tokenizer vocab (" +
                                    std::to_string(st.tok.vocab_size()) + ")");
    st.pool = materialize_pool(cfg);
    auto [policy, critic] = init_models(cfg.seed, cfg.arch);
    st.policy = std::move(policy);
    st.critic = std::move(critic);
    st.opt_policy = AdamW(0.9, 0.95, cfg.policy_lr);
    st.opt_policy.bind(param_list(named_params(st.policy)));
    st.opt_critic = AdamW(0.9, 0.95, cfg.critic_lr);
    st.opt_critic.bind(param_list(named_params(st.critic)));
    return st;
}

namespace detail {

inline const PolicyNet& reference_policy(TrainState& st) {
    if (!st.ref_policy)
        st.ref_policy = init_models(st.cfg.seed, st.cfg.arch).first;
    return *st.ref_policy;
}

// log pi_ref(a_t|s_t) for each generated token; one reference forward pass
inline std::vector<double> ref_logprobs_for(TrainState& st, const Trajectory& traj) {
    const PolicyNet& ref = reference_policy(st);
    ++st.ref_forward_count;
    PolicySession session(ref);
    std::vector<double> logits;
    for (int t : traj.prompt_tokens) logits = session.step(t);
    std::vector<double> out;
    out.reserve(traj.length());
    std::vector<double> row(logits.size());
    for (size_t i = 0; i < traj.length(); ++i) {
        kern::log_softmax_row(row.data(), logits.data(), static_cast<int>(logits.size()));
        out.push_back(row[static_cast<size_t>(traj.gen_tokens[i])]);
        if (i + 1 < traj.length()) logits = session.step(traj.gen_tokens[i]);
    }
    return out;
}

// graph forward producing log pi(a_t|s_t) for the generated span
inline Tensor gen_logprobs_graph(const PolicyNet& policy, const Trajectory& traj) {
    std::vector<int> full = traj.prompt_tokens;
    full.insert(full.end(), traj.gen_tokens.begin(), traj.gen_tokens.end());
    int n = static_cast<int>(full.size());
    int p = static_cast<int>(traj.prompt_tokens.size());
    Tensor ls = log_softmax(policy_logits(policy, full));
    std::vector<int> next_ids(static_cast<size_t>(n), 0);
    for (int i = 0; i + 1 < n; ++i) next_ids[static_cast<size_t>(i)] = full[static_cast<size_t>(i) + 1];
    Tensor picked = take_per_row(ls, next_ids);
    return slice_vec(picked, p - 1, n - 1);
}

// graph forward producing V(s_t) for the generated span
inline Tensor gen_values_graph(const CriticNet& critic, const Trajectory& traj) {
    std::vector<int> full = traj.prompt_tokens;
    full.insert(full.end(), traj.gen_tokens.begin(), traj.gen_tokens.end());
    int n = static_cast<int>(full.size());
    int p = static_cast<int>(traj.prompt_tokens.size());
    Tensor values = critic_values(critic, full);
    return slice_vec(values, p - 1, n - 1);
}

// Runs per-trajectory loss builders with gradient accumulation split over two
// fixed buckets, the second working on a parameter clone whose grads merge
// back in a fixed order. The bucket boundary never depends on the thread
// count, so results are bitwise identical serial or threaded.
template <typename Net, typename BuildFn>
double accumulate_split(Net& primary, size_t count, BuildFn&& build) {
    if (count == 0) return 0.0;
    size_t mid = count / 2;
    double loss_a = 0.0, loss_b = 0.0;
    if (mid == 0 || count < 4) {
        for (size_t i = 0; i < count; ++i) {
            Tensor loss = build(primary, i);
            backward(loss);
            loss_a += loss.item();
        }
        return loss_a;
    }
    Net copy = clone_net(primary);
#ifdef _OPENMP
#pragma omp parallel sections num_threads(2)
#endif
    {
#ifdef _OPENMP
#pragma omp section
#endif
        {
            for (size_t i = 0; i < mid; ++i) {
                Tensor loss = build(primary, i);
                backward(loss);
                loss_a += loss.item();
            }
        }
#ifdef _OPENMP
#pragma omp section
#endif
        {
            for (size_t i = mid; i < count; ++i) {
                Tensor loss = build(copy, i);
                backward(loss);
                loss_b += loss.item();
            }
        }
    }
    auto main_params = named_params(primary);
    auto copy_params = named_params(copy);
    for (size_t p = 0; p < main_params.size(); ++p) {
        if (!copy_params[p].second.has_grad()) continue;
        auto dst = main_params[p].second.grad();
        auto src = copy_params[p].second.grad_view();
        for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    return loss_a + loss_b;
}

}  // namespace detail

// Rollout phase: prompts_per_step prompts, responses_per_prompt samples each,
// rewards scored, old logprobs/values recorded under the rollout-time
// parameters. Deterministic per-trajectory seeds; safe to fan out.
inline std::vector<RolloutItem> rollout_phase(TrainState& st, int64_t iteration) {
    const ExperimentConfig& cfg = st.cfg;
    int prompts = cfg.algo.prompts_per_step;
    int n_resp = cfg.algo.responses_per_prompt;

    // sample prompt slots: unique when the pool allows it
    Rng prompt_rng(mix_seed({cfg.seed, stream_id("prompts"), static_cast<uint64_t>(iteration)}));
    std::vector<size_t> slots(static_cast<size_t>(prompts));
    if (st.pool.size() >= static_cast<size_t>(prompts)) {
        std::vector<size_t> perm(st.pool.size());
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = 0; i < prompts; ++i) {
            size_t j = static_cast<size_t>(i) +
                       prompt_rng.below(perm.size() - static_cast<size_t>(i));
            std::swap(perm[static_cast<size_t>(i)], perm[j]);
            slots[static_cast<size_t>(i)] = perm[static_cast<size_t>(i)];
        }
    } else {
        for (int i = 0; i < prompts; ++i)
            slots[static_cast<size_t>(i)] = prompt_rng.below(st.pool.size());
    }

    // shared prompt prefills (policy for sampling, critic for old values)
    std::vector<std::vector<int>> prompt_tokens(static_cast<size_t>(prompts));
    std::vector<PolicySession> policy_prefill;
    std::vector<std::vector<double>> prefill_logits(static_cast<size_t>(prompts));
    std::vector<CriticSession> critic_prefill;
    std::vector<double> prompt_value(static_cast<size_t>(prompts));
    policy_prefill.reserve(static_cast<size_t>(prompts));
    critic_prefill.reserve(static_cast<size_t>(prompts));
    for (int p = 0; p < prompts; ++p) {
        const PoolEntry& entry = st.pool.entries[slots[static_cast<size_t>(p)]];
        prompt_tokens[static_cast<size_t>(p)] = render_prompt(st.tok, entry.task);
        if (static_cast<int>(prompt_tokens[static_cast<size_t>(p)].size()) +
                cfg.sampler.max_new_tokens > cfg.arch.max_len)
            throw std::invalid_argument("rollout: prompt for '" + entry.task.question +
                                        "' leaves no room under max_len");
        PolicySession ps(st.policy);
        std::vector<double> logits;
        for (int t : prompt_tokens[static_cast<size_t>(p)]) logits = ps.step(t);
        policy_prefill.push_back(std::move(ps));
        prefill_logits[static_cast<size_t>(p)] = std::move(logits);
        CriticSession cs(st.critic);
        double v = 0.0;
        for (int t : prompt_tokens[static_cast<size_t>(p)]) v = cs.step(t);
        critic_prefill.push_back(std::move(cs));
        prompt_value[static_cast<size_t>(p)] = v;
    }

    int total = prompts * n_resp;
    std::vector<RolloutItem> items(static_cast<size_t>(total));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int r = 0; r < total; ++r) {
        int p = r / n_resp;
        int j = r % n_resp;
        const PoolEntry& entry = st.pool.entries[slots[static_cast<size_t>(p)]];

        SamplerConfig scfg = cfg.sampler;
        scfg.seed = mix_seed({cfg.seed, stream_id("rollout"), static_cast<uint64_t>(iteration),
                              static_cast<uint64_t>(p), static_cast<uint64_t>(j)});
        PolicySession session = policy_prefill[static_cast<size_t>(p)];
        SampleResult sample = sample_continue(session, prefill_logits[static_cast<size_t>(p)], scfg);

        RolloutItem item;
        item.prompt_slot = p;
        item.response_idx = j;
        item.pool_index = slots[static_cast<size_t>(p)];
        item.traj.prompt_tokens = prompt_tokens[static_cast<size_t>(p)];
        item.traj.gen_tokens = std::move(sample.gen_tokens);
        item.traj.old_logprobs = std::move(sample.logprobs);
        item.traj.truncated = sample.truncated;

        // V(s_0) is the prompt prefill; V(s_t) follows each generated token
        CriticSession critic_session = critic_prefill[static_cast<size_t>(p)];
        item.traj.old_values.reserve(item.traj.length());
        item.traj.old_values.push_back(prompt_value[static_cast<size_t>(p)]);
        for (size_t t = 0; t + 1 < item.traj.length(); ++t)
            item.traj.old_values.push_back(critic_session.step(item.traj.gen_tokens[t]));

        item.gen_text = st.tok.decode(item.traj.gen_tokens);
        item.outcome = score(item.gen_text, entry.task.answer);
        item.traj.terminal_reward = item.outcome.reward;

        item.rep = repeat_metrics(item.traj.gen_tokens, cfg.repeat);
        item.rep.truncated = item.traj.truncated;
        auto [reflective, hits] = detect_reflection(item.gen_text);
        item.rep.reflective = reflective;
        item.rep.reflection_patterns_hit = std::move(hits);

        items[static_cast<size_t>(r)] = std::move(item);
    }

    // pool stats update, serialized at the iteration boundary
    for (const RolloutItem& item : items) {
        PromptStats& ps = st.pool.entries[item.pool_index].stats;
        ps.attempts += 1;
        ps.correct += static_cast<int64_t>(item.traj.terminal_reward);
    }
    return items;
}

namespace detail {

// PPO advantages for the batch: simplified closed form at gamma = lambda = 1,
// general GAE otherwise (and always under KL penalty shaping), then
// batch-level normalization when enabled.
inline std::vector<AdvantageRecord> ppo_advantages_for_batch(TrainState& st,
                                                             std::vector<RolloutItem>& items) {
    const AlgoConfig& algo = st.cfg.algo;
    std::vector<AdvantageRecord> recs;
    recs.reserve(items.size());
    bool simplified = algo.gamma == 1.0 && algo.lambda == 1.0 && algo.kl_mode != KlMode::penalty;
    for (RolloutItem& item : items) {
        if (simplified) {
            recs.push_back(gae_simplified(item.traj));
        } else if (algo.kl_mode == KlMode::penalty) {
            std::vector<double> ref = ref_logprobs_for(st, item.traj);
            std::vector<double> shaped = kl_shaped_rewards(item.traj, ref, algo.kl_coef);
            recs.push_back(gae_general(item.traj, algo.gamma, algo.lambda, &shaped));
        } else {
            recs.push_back(gae_general(item.traj, algo.gamma, algo.lambda));
        }
    }
    if (algo.advantage_norm) normalize_advantages(recs);
    return recs;
}

// group-relative advantages over the same rollout (analysis column, and the
// training signal in GRPO mode)
inline std::vector<std::vector<double>> grpo_advantages_for_batch(
    const TrainState& st, const std::vector<RolloutItem>& items) {
    int n_resp = st.cfg.algo.responses_per_prompt;
    std::vector<std::vector<double>> out(items.size());
    if (n_resp < 2) return out;  // no groups to normalize within
    int prompts = st.cfg.algo.prompts_per_step;
    for (int p = 0; p < prompts; ++p) {
        std::vector<Trajectory> group;
        group.reserve(static_cast<size_t>(n_resp));
        for (int j = 0; j < n_resp; ++j)
            group.push_back(items[static_cast<size_t>(p * n_resp + j)].traj);
        auto adv = grpo_advantages(group);
        for (int j = 0; j < n_resp; ++j)
            out[static_cast<size_t>(p * n_resp + j)] = std::move(adv[static_cast<size_t>(j)]);
    }
    return out;
}

// Critic update over critic_minibatches shards. Trajectories are shuffled
// with the iteration seed, their tokens pooled in that order, and the stream
// cut into contiguous equal shards; each shard is one optimizer step.
inline double critic_update(TrainState& st, const std::vector<RolloutItem>& items,
                            const std::vector<AdvantageRecord>& recs, int64_t iteration) {
    Rng shuffle_rng(mix_seed({st.cfg.seed, stream_id("shuffle"), static_cast<uint64_t>(iteration)}));
    std::vector<size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = 0; i + 1 < order.size(); ++i) {
        size_t j = i + shuffle_rng.below(order.size() - i);
        std::swap(order[i], order[j]);
    }

    size_t total_tokens = 0;
    for (const RolloutItem& item : items) total_tokens += item.traj.length();
    int shards = st.cfg.algo.critic_minibatches;
    double loss_weighted = 0.0;

    struct Segment {
        size_t item_idx;
        size_t tok0;
        size_t take;
    };
    size_t cursor_traj = 0;  // index into `order`
    size_t cursor_tok = 0;   // offset within the current trajectory
    for (int s = 0; s < shards; ++s) {
        size_t shard_size = total_tokens / static_cast<size_t>(shards) +
                            (static_cast<size_t>(s) < total_tokens % static_cast<size_t>(shards) ? 1 : 0);
        if (shard_size == 0) continue;
        std::vector<Segment> segments;
        size_t remaining = shard_size;
        while (remaining > 0) {
            const RolloutItem& item = items[order[cursor_traj]];
            size_t avail = item.traj.length() - cursor_tok;
            size_t take = std::min(avail, remaining);
            segments.push_back({order[cursor_traj], cursor_tok, take});
            remaining -= take;
            cursor_tok += take;
            if (cursor_tok == item.traj.length()) {
                ++cursor_traj;
                cursor_tok = 0;
            }
        }
        double shard_loss = accumulate_split(
            st.critic, segments.size(), [&](const CriticNet& net, size_t i) {
                const Segment& seg = segments[i];
                Tensor pred = gen_values_graph(net, items[seg.item_idx].traj);
                Tensor pred_slice = slice_vec(pred, static_cast<int>(seg.tok0),
                                              static_cast<int>(seg.tok0 + seg.take));
                std::span<const double> target(recs[seg.item_idx].value_targets.data() + seg.tok0,
                                               seg.take);
                double w = static_cast<double>(seg.take) / static_cast<double>(shard_size);
                return scale(value_loss(pred_slice, target), w);
            });
        st.opt_critic.learning_rate =
            lr_schedule(st.opt_critic.step_count, st.cfg.critic_lr, st.cfg.warmup_steps,
                        st.cfg.lr_decay,
                        st.cfg.total_iterations * st.cfg.algo.critic_minibatches,
                        st.cfg.critic_lr * st.cfg.lr_decay_final_scale);
        st.opt_critic.step();
        st.opt_critic.zero_grad();
        loss_weighted += shard_loss * static_cast<double>(shard_size);
    }
    return total_tokens > 0 ? loss_weighted / static_cast<double>(total_tokens) : 0.0;
}

// Exactly one policy optimization step on the full batch (strict on-policy).
inline double policy_update(TrainState& st, const std::vector<RolloutItem>& items,
                            const std::vector<std::vector<double>>& advantages) {
    // reference forwards happen up front: the loss builders must stay pure
    std::vector<std::vector<double>> ref_lp(items.size());
    if (st.cfg.algo.kl_mode == KlMode::loss)
        for (size_t i = 0; i < items.size(); ++i)
            ref_lp[i] = ref_logprobs_for(st, items[i].traj);

    // batch loss = mean over trajectories of the per-trajectory token-mean
    double w = 1.0 / static_cast<double>(items.size());
    double total_loss = accumulate_split(
        st.policy, items.size(), [&](const PolicyNet& net, size_t i) {
            const Trajectory& traj = items[i].traj;
            Tensor new_lp = gen_logprobs_graph(net, traj);
            Tensor loss = ppo_policy_loss(new_lp, traj.old_logprobs, advantages[i],
                                          st.cfg.algo.clip_epsilon);
            if (st.cfg.algo.kl_mode == KlMode::loss)
                loss = add(loss, kl_loss_term(new_lp, ref_lp[i], st.cfg.algo.kl_coef));
            return scale(loss, w);
        });
    st.opt_policy.learning_rate =
        lr_schedule(st.opt_policy.step_count, st.cfg.policy_lr, st.cfg.warmup_steps,
                    st.cfg.lr_decay, st.cfg.total_iterations,
                    st.cfg.policy_lr * st.cfg.lr_decay_final_scale);
    st.opt_policy.step();
    st.opt_policy.zero_grad();
    ++st.policy_update_count;
    return total_loss;
}

}  // namespace detail

// One full iteration: rollout, score, advantages, critic update (PPO only,
// before the policy step), one policy step. The parameters used for the
// rollout are the previous iteration's; refreshing theta_old is implicit in
// sampling before updating.
inline IterationStats train_iteration(TrainState& st,
                                      std::vector<RolloutItem>* rollout_out = nullptr) {
    st.cfg.validate();
    if (st.pool.empty()) throw std::invalid_argument("train: empty prompt pool");
    int64_t iteration = st.iteration + 1;

    std::vector<RolloutItem> items = rollout_phase(st, iteration);

    std::vector<AdvantageRecord> ppo_recs = detail::ppo_advantages_for_batch(st, items);
    std::vector<std::vector<double>> grpo_advs = detail::grpo_advantages_for_batch(st, items);

    IterationStats stats;
    stats.iteration = iteration;
    double reward_sum = 0.0, len_sum = 0.0, repeat_sum = 0.0;
    size_t truncated = 0;
    std::vector<RewardOutcome> outcomes;
    std::vector<double> rewards;
    std::vector<char> reflective;
    std::vector<size_t> lengths;
    for (const RolloutItem& item : items) {
        reward_sum += item.traj.terminal_reward;
        len_sum += static_cast<double>(item.traj.length());
        repeat_sum += item.rep.repeat_score;
        if (item.traj.truncated) ++truncated;
        outcomes.push_back(item.outcome);
        rewards.push_back(item.traj.terminal_reward);
        reflective.push_back(item.rep.reflective ? 1 : 0);
        lengths.push_back(item.traj.length());
    }
    double n_items = static_cast<double>(items.size());
    stats.mean_reward = reward_sum / n_items;
    stats.mean_resp_len = len_sum / n_items;
    stats.format_ratio = format_ratio(outcomes);
    stats.truncate_rate = static_cast<double>(truncated) / n_items;
    stats.repeat_score = repeat_sum / n_items;
    stats.mean_correct_reflection_len =
        avg_correct_reflection_length(rewards, reflective, lengths);

    // advantage comparison on repetitive tokens (PPO estimator vs GRPO) over
    // the identical token set; the analysis estimator is always
    // batch-normalized regardless of the training-time flag
    if (st.cfg.algo.responses_per_prompt >= 2) {
        std::vector<AdvantageRecord> analysis_recs = ppo_recs;
        if (!analysis_recs.empty() && !analysis_recs.front().normalized) {
            size_t tokens = 0;
            for (const AdvantageRecord& r : analysis_recs) tokens += r.advantages.size();
            if (tokens >= 2) normalize_advantages(analysis_recs);
        }
        std::vector<ScoredTrajectory> scored;
        for (size_t i = 0; i < items.size(); ++i) {
            ScoredTrajectory s;
            s.traj = &items[i].traj;
            s.ppo_advantages = analysis_recs[i].advantages;
            s.grpo_advantages = grpo_advs[i];
            s.onset = items[i].rep.first_repetition_onset;
            scored.push_back(s);
        }
        RepetitiveAdvantageSummary summary = advantage_on_repetitive_tokens(scored);
        stats.mean_advantage_repetitive = summary.ppo_mean;
        stats.grpo_mean_advantage_repetitive = summary.grpo_mean;
    }

    // update phase: critic first, then exactly one policy step
    if (st.cfg.algo.algorithm == Algorithm::PPO) {
        stats.value_loss = detail::critic_update(st, items, ppo_recs, iteration);
        std::vector<std::vector<double>> adv(items.size());
        for (size_t i = 0; i < items.size(); ++i) adv[i] = ppo_recs[i].advantages;
        stats.policy_loss = detail::policy_update(st, items, adv);
    } else {
        // GRPO: no critic involved in training; group statistics are the
        // advantage (already group-normalized, the batch-norm flag is moot)
        stats.policy_loss = detail::policy_update(st, items, grpo_advs);
    }

    st.iteration = iteration;
    if (rollout_out) *rollout_out = std::move(items);
    return stats;
}

// ---------------------------------------------------------------------------
// full-state checkpointing (models, optimizer moments, pool statistics)

inline void save_train_state(const TrainState& st, const std::string& path) {
    nlohmann::ordered_json manifest;
    manifest["seed"] = st.cfg.seed;
    manifest["iteration"] = st.iteration;
    manifest["arch"] = {{"vocab", st.cfg.arch.vocab},
                        {"d_model", st.cfg.arch.d_model},
                        {"n_layers", st.cfg.arch.n_layers},
                        {"n_heads", st.cfg.arch.n_heads},
                        {"max_len", st.cfg.arch.max_len}};
    manifest["algorithm"] = to_string(st.cfg.algo.algorithm);
    manifest["config"] = serialize_config(st.cfg);
    manifest["opt_policy_steps"] = st.opt_policy.step_count;
    manifest["opt_critic_steps"] = st.opt_critic.step_count;
    nlohmann::ordered_json pool_ids = nlohmann::ordered_json::array();
    nlohmann::ordered_json attempts = nlohmann::ordered_json::array();
    nlohmann::ordered_json correct = nlohmann::ordered_json::array();
    for (const PoolEntry& e : st.pool.entries) {
        pool_ids.push_back(e.id);
        attempts.push_back(e.stats.attempts);
        correct.push_back(e.stats.correct);
    }
    manifest["pool_ids"] = std::move(pool_ids);
    manifest["pool_attempts"] = std::move(attempts);
    manifest["pool_correct"] = std::move(correct);

    std::vector<std::pair<std::string, Tensor>> tensors;
    auto add_net = [&](const std::string& prefix, const auto& net, const AdamW& opt) {
        auto named = named_params(net);
        for (auto& [n, t] : named) tensors.emplace_back(prefix + "." + n, t);
        const auto& m = opt.first_moment();
        const auto& v = opt.second_moment();
        for (size_t i = 0; i < named.size(); ++i) {
            tensors.emplace_back("adam." + prefix + ".m." + named[i].first,
                                 Tensor::from_data({static_cast<int>(m[i].size())}, m[i]));
            tensors.emplace_back("adam." + prefix + ".v." + named[i].first,
                                 Tensor::from_data({static_cast<int>(v[i].size())}, v[i]));
        }
    };
    add_net("policy", st.policy, st.opt_policy);
    add_net("critic", st.critic, st.opt_critic);
    write_checkpoint(path, manifest, tensors);
}

inline void load_params_from(const Checkpoint& ck, const std::string& prefix, auto& net,
                             AdamW& opt) {
    auto named = named_params(net);
    for (auto& [n, t] : named) {
        const Tensor& src = ck.tensor(prefix + "." + n);
        if (src.shape() != t.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + prefix + "." + n);
        std::copy(src.values().begin(), src.values().end(), t.values().begin());
    }
    auto& m = opt.first_moment();
    auto& v = opt.second_moment();
    for (size_t i = 0; i < named.size(); ++i) {
        const Tensor& ms = ck.tensor("adam." + prefix + ".m." + named[i].first);
        const Tensor& vs = ck.tensor("adam." + prefix + ".v." + named[i].first);
        if (ms.numel() != m[i].size() || vs.numel() != v[i].size())
            throw std::runtime_error("checkpoint: optimizer state mismatch for " +
                                     named[i].first);
        std::copy(ms.values().begin(), ms.values().end(), m[i].begin());
        std::copy(vs.values().begin(), vs.values().end(), v[i].begin());
    }
}

inline TrainState load_train_state(const ExperimentConfig& cfg, const std::string& path) {
    TrainState st = init_train_state(cfg);
    Checkpoint ck = read_checkpoint(path);
    Arch saved;
    saved.vocab = ck.manifest["arch"]["vocab"].get<int>();
    saved.d_model = ck.manifest["arch"]["d_model"].get<int>();
    saved.n_layers = ck.manifest["arch"]["n_layers"].get<int>();
    saved.n_heads = ck.manifest["arch"]["n_heads"].get<int>();
    saved.max_len = ck.manifest["arch"]["max_len"].get<int>();
    if (!(saved == cfg.arch))
        throw std::runtime_error("checkpoint: architecture does not match the config");
    st.iteration = ck.manifest["iteration"].get<int64_t>();
    load_params_from(ck, "policy", st.policy, st.opt_policy);
    load_params_from(ck, "critic", st.critic, st.opt_critic);
    st.opt_policy.step_count = ck.manifest["opt_policy_steps"].get<int64_t>();
    st.opt_critic.step_count = ck.manifest["opt_critic_steps"].get<int64_t>();

    auto ids = ck.manifest["pool_ids"];
    auto attempts = ck.manifest["pool_attempts"];
    auto correct = ck.manifest["pool_correct"];
    if (ids.size() != st.pool.size())
        throw std::runtime_error("checkpoint: pool size changed since the checkpoint");
    for (size_t i = 0; i < st.pool.size(); ++i) {
        if (st.pool.entries[i].id != ids[i].get<std::string>())
            throw std::runtime_error("checkpoint: pool ids changed since the checkpoint");
        st.pool.entries[i].stats.attempts = attempts[i].get<int64_t>();
        st.pool.entries[i].stats.correct = correct[i].get<int64_t>();
    }
    return st;
}

}  // namespace vppo
