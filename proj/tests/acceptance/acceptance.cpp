// Acceptance gate: runs every criterion end to end and prints one PASS/FAIL
// line each. Exit code is nonzero when any criterion fails.
//
//  1. simplified/general GAE equivalence over randomized trajectories
//  2. value-target constancy at gamma = lambda = 1
//  3. loss gradients vs central finite differences
//  4. learning dynamics on the small-add preset, three seeds
//  5. format adoption early in each small-add run
//  6. PPO vs GRPO advantage on repetitive tokens, trained critic
//  7. critic devalues repetitive spans (paired sign test)
//  8. ablation direction checks (lambda, KL, data scale)
//  9. bitwise determinism and checkpoint resume
// 10. reward purity over fuzzed responses

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vppo/analysis.hpp"
#include "vppo/config.hpp"
#include "vppo/experiment.hpp"
#include "vppo/pool.hpp"
#include "vppo/reward.hpp"
#include "vppo/rl.hpp"
#include "vppo/rng.hpp"
#include "vppo/sampler.hpp"
#include "vppo/train.hpp"

namespace fs = std::filesystem;
using namespace vppo;
using Clock = std::chrono::steady_clock;

namespace {

struct Gate {
    int num;
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<Gate> g_gates;

void report(int num, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", num, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    g_gates.push_back({num, name, pass, detail});
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

fs::path g_work;

// ---------------------------------------------------------------------------
// criteria 1 + 2: GAE equivalence sweep

void criterion_gae_equivalence() {
    auto t0 = Clock::now();
    Rng rng(20250810);
    double max_err = 0.0;
    bool targets_exact = true;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        size_t len = 1 + rng.below(100);
        Trajectory traj;
        traj.gen_tokens.assign(len, 1);
        traj.old_logprobs.assign(len, -1.0);
        traj.old_values.resize(len);
        for (double& v : traj.old_values) v = rng.uniform(-2.0, 2.0);
        traj.terminal_reward = rng.uniform() < 0.5 ? 0.0 : 1.0;

        AdvantageRecord simp = gae_simplified(traj);
        AdvantageRecord gen = gae_general(traj, 1.0, 1.0);
        for (size_t i = 0; i < len; ++i) {
            max_err = std::max(max_err, std::fabs(simp.advantages[i] - gen.advantages[i]));
            if (simp.value_targets[i] != traj.terminal_reward) targets_exact = false;
        }
    }
    double elapsed = seconds_since(t0);
    report(1, "GAE simplified == general(1,1) within 1e-12 over 1000 trajectories",
           max_err <= 1e-12 && elapsed < 5.0,
           "max |diff| = " + fmt(max_err) + ", " + fmt(elapsed, 3) + " s");
    report(2, "value targets equal R exactly at gamma=lambda=1", targets_exact,
           targets_exact ? "bitwise equal in the same sweep" : "mismatch found");
}

// ---------------------------------------------------------------------------
// criterion 3: loss gradients against central finite differences

struct FdOutcome {
    double max_rel = 0.0;
    int instances = 0;
};

template <typename MakeLoss>
FdOutcome fd_sweep(Rng& rng, int instances, MakeLoss&& make) {
    FdOutcome out;
    out.instances = instances;
    const double h = 1e-5;
    for (int inst = 0; inst < instances; ++inst) {
        auto [leaf, build] = make(inst);
        Tensor loss = build();
        backward(loss);
        std::vector<double> ad(leaf.grad().begin(), leaf.grad().end());
        leaf.zero_grad();
        NoGradGuard ng;
        for (size_t i = 0; i < leaf.numel(); ++i) {
            double keep = leaf.data()[i];
            leaf.data()[i] = keep + h;
            double up = build().item();
            leaf.data()[i] = keep - h;
            double down = build().item();
            leaf.data()[i] = keep;
            double numeric = (up - down) / (2.0 * h);
            double rel = std::fabs(ad[i] - numeric) /
                         std::max({std::fabs(ad[i]), std::fabs(numeric), 1e-6});
            out.max_rel = std::max(out.max_rel, rel);
        }
    }
    return out;
}

void criterion_loss_gradients() {
    auto t0 = Clock::now();
    Rng rng(777);

    auto ppo_case = [&](int) {
        size_t n = 4 + rng.below(10);
        std::vector<double> old_lp(n), lp(n), adv(n);
        for (size_t i = 0; i < n; ++i) {
            old_lp[i] = -rng.uniform(0.5, 3.0);
            double rho;
            // keep every token away from the clip kinks and the min tie
            do {
                rho = rng.uniform(0.5, 1.6);
            } while (std::fabs(rho - 0.8) < 0.02 || std::fabs(rho - 1.2) < 0.02 ||
                     std::fabs(rho - 1.0) < 0.02);
            lp[i] = old_lp[i] + std::log(rho);
            adv[i] = rng.uniform(-2.0, 2.0);
            if (std::fabs(adv[i]) < 0.05) adv[i] = 0.1;
        }
        Tensor leaf = Tensor::from_data({static_cast<int>(n)}, lp, true);
        auto build = [leaf, old_lp, adv] {
            return ppo_policy_loss(leaf, old_lp, adv, 0.2);
        };
        return std::make_pair(leaf, std::function<Tensor()>(build));
    };
    FdOutcome ppo = fd_sweep(rng, 20, ppo_case);

    auto value_case = [&](int) {
        size_t n = 3 + rng.below(12);
        std::vector<double> pred(n), target(n);
        for (size_t i = 0; i < n; ++i) {
            pred[i] = rng.uniform(-1.5, 1.5);
            target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        }
        Tensor leaf = Tensor::from_data({static_cast<int>(n)}, pred, true);
        auto build = [leaf, target] { return value_loss(leaf, target); };
        return std::make_pair(leaf, std::function<Tensor()>(build));
    };
    FdOutcome val = fd_sweep(rng, 20, value_case);

    auto kl_case = [&](int) {
        size_t n = 3 + rng.below(10);
        std::vector<double> ref(n), lp(n);
        for (size_t i = 0; i < n; ++i) {
            ref[i] = -rng.uniform(0.2, 3.0);
            lp[i] = -rng.uniform(0.2, 3.0);
        }
        Tensor leaf = Tensor::from_data({static_cast<int>(n)}, lp, true);
        auto build = [leaf, ref] { return kl_loss_term(leaf, ref, 0.7); };
        return std::make_pair(leaf, std::function<Tensor()>(build));
    };
    FdOutcome kl = fd_sweep(rng, 20, kl_case);

    double elapsed = seconds_since(t0);
    bool pass = ppo.max_rel < 1e-4 && val.max_rel < 1e-4 && kl.max_rel < 1e-4 && elapsed < 60.0;
    report(3, "loss gradients match finite differences within 1e-4 relative", pass,
           "ppo " + fmt(ppo.max_rel) + ", value " + fmt(val.max_rel) + ", kl " +
               fmt(kl.max_rel) + " over 20 instances each, " + fmt(elapsed, 3) + " s");
}

// ---------------------------------------------------------------------------
// criterion 10: reward purity over fuzzed strings

void criterion_reward_purity() {
    Rng rng(31337);
    const std::string pieces[] = {"<answer>", "</answer>", "<think>", "</think>", "42", " 42 ",
                                  "4",        "2",          "9",       " ",        "=",  "+",
                                  "answer",   "..",         "?",       "420"};
    const std::string refs[] = {"42", "7", "120", "0"};
    bool pure = true;
    std::string violation;
    for (int trial = 0; trial < 100000 && pure; ++trial) {
        std::string s;
        int n = static_cast<int>(rng.below(12));
        for (int i = 0; i < n; ++i) s += pieces[rng.below(std::size(pieces))];
        const std::string& ref = refs[rng.below(std::size(refs))];
        RewardOutcome out = score(s, ref);
        if (out.reward != 0 && out.reward != 1) {
            pure = false;
            violation = "non-binary reward";
        }
        if (out.reward == 1) {
            auto extracted = extract_answer(s);
            if (!extracted || trim(*extracted) != trim(ref) || !out.well_formatted) {
                pure = false;
                violation = "reward without matching extraction on: " + s;
            }
        }
    }
    report(10, "reward stays binary and implies trimmed-equal extraction (1e5 fuzz)", pure,
           pure ? "no violations" : violation);
}

// ---------------------------------------------------------------------------
// criterion 9: determinism + resume

ExperimentConfig determinism_config(const std::string& tag) {
    ExperimentConfig cfg = preset_config("smoke");
    cfg.algo.prompts_per_step = 4;
    cfg.algo.responses_per_prompt = 4;
    cfg.algo.critic_minibatches = 4;
    cfg.arch.d_model = 32;
    cfg.arch.n_layers = 2;
    cfg.sampler.max_new_tokens = 16;
    cfg.pool_spec = "add:1:8";
    cfg.total_iterations = 4;
    cfg.seed = 11;
    cfg.output_dir = (g_work / tag).string();
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void criterion_determinism() {
    ExperimentConfig a = determinism_config("det_a");
    ExperimentConfig b = determinism_config("det_b");
    RunResult ra = run_train(a);
    RunResult rb = run_train(b);
    bool same = slurp(ra.stats_csv_path) == slurp(rb.stats_csv_path);

    ExperimentConfig full = determinism_config("det_full");
    full.checkpoint_every = 2;
    RunResult rf = run_train(full);
    ExperimentConfig tail = determinism_config("det_tail");
    tail.init_checkpoint = (fs::path(full.output_dir) / "ckpt_iter000002.bin").string();
    RunResult rt = run_train(tail);
    auto lines = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string line;
        while (std::getline(ss, line)) out.push_back(line);
        return out;
    };
    auto lf = lines(slurp(rf.stats_csv_path));
    auto lt = lines(slurp(rt.stats_csv_path));
    bool resume_ok = lf.size() == 5 && lt.size() == 3 && lf[3] == lt[1] && lf[4] == lt[2];

    report(9, "same config+seed is bitwise identical; resume reproduces the continuation",
           same && resume_ok,
           std::string("rerun ") + (same ? "identical" : "differs") + ", resume rows " +
               (resume_ok ? "identical" : "differ"));
}

// ---------------------------------------------------------------------------
// criteria 4 + 5: learning dynamics and format adoption on small-add

struct DynamicsResult {
    uint64_t seed;
    bool started_low = false;
    std::optional<int64_t> hit_iteration;  // first mean_reward >= 0.8
    std::optional<int64_t> format_iteration;  // first format_ratio >= 0.95
    std::string run_dir;
    std::string final_checkpoint;
};

DynamicsResult run_dynamics(uint64_t seed, int64_t min_iterations) {
    ExperimentConfig cfg = preset_config("small-add");
    cfg.seed = seed;
    cfg.output_dir = (g_work / ("dyn_seed" + std::to_string(seed))).string();
    DynamicsResult res;
    res.seed = seed;
    res.run_dir = cfg.output_dir;
    double first10 = 0.0;
    int64_t count10 = 0;
    RunResult rr = run_train(cfg, [&](const IterationStats& s, const TrainState&) {
        if (s.iteration <= 10) {
            first10 += s.mean_reward;
            count10 = s.iteration;
        }
        if (!res.format_iteration && s.format_ratio >= 0.95)
            res.format_iteration = s.iteration;
        if (!res.hit_iteration && s.mean_reward >= 0.8) res.hit_iteration = s.iteration;
        // stop once the threshold is hit and enough critic training happened
        bool done = res.hit_iteration && s.iteration >= min_iterations;
        return !done;
    });
    res.started_low = count10 > 0 && first10 / static_cast<double>(count10) < 0.2;
    res.final_checkpoint = rr.final_checkpoint_path;
    return res;
}

std::vector<DynamicsResult> g_dynamics;

void criterion_learning_dynamics() {
    auto t0 = Clock::now();
    // seed 1 keeps training to >= 200 iterations for the critic-based criteria
    g_dynamics.push_back(run_dynamics(1, 200));
    g_dynamics.push_back(run_dynamics(2, 0));
    g_dynamics.push_back(run_dynamics(3, 0));
    double elapsed = seconds_since(t0);

    bool pass4 = elapsed < 1800.0;
    bool pass5 = true;
    std::string d4, d5;
    for (const DynamicsResult& r : g_dynamics) {
        bool hit = r.started_low && r.hit_iteration && *r.hit_iteration <= 500;
        pass4 = pass4 && hit;
        d4 += "seed " + std::to_string(r.seed) + ": " +
              (r.hit_iteration ? "reward>=0.8 at iter " + std::to_string(*r.hit_iteration)
                               : "never reached 0.8") +
              (r.started_low ? "" : " (started above 0.2!)") + "; ";
        if (r.hit_iteration) {
            int64_t budget = (*r.hit_iteration + 3) / 4;  // first 25%
            bool fmt_ok = r.format_iteration && *r.format_iteration <= budget;
            pass5 = pass5 && fmt_ok;
            d5 += "seed " + std::to_string(r.seed) + ": format>=0.95 at " +
                  (r.format_iteration ? std::to_string(*r.format_iteration) : "never") +
                  " (budget " + std::to_string(budget) + "); ";
        } else {
            pass5 = false;
            d5 += "seed " + std::to_string(r.seed) + ": no reward threshold; ";
        }
    }
    d4 += fmt(elapsed / 60.0, 3) + " min total";
    report(4, "small-add reward rises from <0.2 to >=0.8 within 500 iterations, 3 seeds",
           pass4, d4);
    report(5, "format ratio reaches 0.95 within the first quarter of the reward run-up",
           pass5, d5);
}

// ---------------------------------------------------------------------------
// criteria 6 + 7: repetitive-token advantage comparison and critic credit
// assignment, using the seed-1 trained policy and critic

struct InjectedBatch {
    std::vector<Trajectory> trajs;
    std::vector<int> group_of;           // prompt group per trajectory
    std::vector<std::optional<int>> onsets;
};

// Synthetic repetitive continuation: a plausible answer-like open followed by
// a repeating n-gram loop, never closing the tag, so the reward is 0 by
// construction.
std::vector<int> repetitive_generation(const Tokenizer& tok, Rng& rng, int total_len) {
    std::vector<int> gen;
    std::string digits = "0123456789";
    std::string open = "<answer>";
    for (int ch : tok.encode(open)) gen.push_back(ch);
    std::string gram;
    gram += digits[rng.below(10)];
    gram += digits[rng.below(10)];
    gram += " ";
    gram += "<answer>";
    gram += digits[rng.below(10)];
    std::vector<int> gram_ids = tok.encode(gram);
    while (static_cast<int>(gen.size()) < total_len)
        for (int id : gram_ids) {
            gen.push_back(id);
            if (static_cast<int>(gen.size()) >= total_len) break;
        }
    return gen;
}

void criteria_critic_analysis() {
    if (g_dynamics.empty() || !g_dynamics[0].hit_iteration) {
        report(6, "PPO advantage on repetitive tokens below GRPO in >=80% of batches", false,
               "skipped: no trained seed-1 run");
        report(7, "critic value lower on repetitive spans than pre-onset spans", false,
               "skipped: no trained seed-1 run");
        return;
    }
    auto t0 = Clock::now();
    const std::string ckpt = g_dynamics[0].final_checkpoint;
    PolicyNet policy = load_policy_from_checkpoint(ckpt);
    CriticNet critic = load_critic_from_checkpoint(ckpt);
    Tokenizer tok;
    PromptPool train_pool = load_pool_jsonl(g_dynamics[0].run_dir + "/pool.jsonl");
    load_pool_stats_csv(train_pool, g_dynamics[0].run_dir + "/prompt_stats.csv");
    // easy prompts: mastered training prompts; hard prompts: three-digit sums
    // the desk policy has never seen
    std::vector<size_t> easy;
    for (size_t i = 0; i < train_pool.size(); ++i)
        if (train_pool.entries[i].stats.attempts >= 8 &&
            train_pool.entries[i].stats.pass_rate() >= 0.8)
            easy.push_back(i);
    PromptPool hard_pool = build_pool(parse_pool_spec("add:3:64"), 424242);

    SamplerConfig sampler;
    sampler.max_new_tokens = 44;

    auto sample_traj = [&](const TaskInstance& task, uint64_t seed) {
        std::vector<int> prompt = render_prompt(tok, task);
        SamplerConfig scfg = sampler;
        scfg.seed = seed;
        SampleResult sr = sample_response(policy, prompt, scfg);
        Trajectory t;
        t.prompt_tokens = std::move(prompt);
        t.gen_tokens = std::move(sr.gen_tokens);
        t.old_logprobs = std::move(sr.logprobs);
        t.truncated = sr.truncated;
        t.terminal_reward = score(tok.decode(t.gen_tokens), task.answer).reward;
        CriticSession cs(critic);
        double v = 0.0;
        for (int id : t.prompt_tokens) v = cs.step(id);
        t.old_values.push_back(v);
        for (size_t i = 0; i + 1 < t.gen_tokens.size(); ++i)
            t.old_values.push_back(cs.step(t.gen_tokens[i]));
        return t;
    };

    auto injected_traj = [&](const TaskInstance& task, Rng& rng) {
        Trajectory t;
        t.prompt_tokens = render_prompt(tok, task);
        t.gen_tokens = repetitive_generation(tok, rng, 40 + static_cast<int>(rng.below(5)));
        t.old_logprobs.assign(t.gen_tokens.size(), -1.0);
        t.truncated = true;
        t.terminal_reward = score(tok.decode(t.gen_tokens), task.answer).reward;  // 0
        CriticSession cs(critic);
        double v = 0.0;
        for (int id : t.prompt_tokens) v = cs.step(id);
        t.old_values.push_back(v);
        for (size_t i = 0; i + 1 < t.gen_tokens.size(); ++i)
            t.old_values.push_back(cs.step(t.gen_tokens[i]));
        return t;
    };

    RepeatParams params;
    const int n_batches = 100;
    int ppo_below = 0;
    int comparable = 0;
    for (int b = 0; b < n_batches; ++b) {
        Rng rng(mix_seed({9001, static_cast<uint64_t>(b)}));
        InjectedBatch batch;
        int group_id = 0;
        // easy groups: mastered prompts, sampled responses (mostly correct)
        for (int g = 0; g < 6; ++g, ++group_id) {
            const PoolEntry& e =
                train_pool.entries[easy.empty() ? rng.below(train_pool.size())
                                                : easy[rng.below(easy.size())]];
            for (int j = 0; j < 4; ++j) {
                batch.trajs.push_back(
                    sample_traj(e.task, mix_seed({7331, static_cast<uint64_t>(b),
                                                  static_cast<uint64_t>(group_id),
                                                  static_cast<uint64_t>(j)})));
                batch.group_of.push_back(group_id);
            }
        }
        // hard groups: unseen three-digit prompts (all fail) plus one injected
        // repetitive trajectory each
        for (int g = 0; g < 3; ++g, ++group_id) {
            const PoolEntry& e = hard_pool.entries[rng.below(hard_pool.size())];
            for (int j = 0; j < 3; ++j) {
                Trajectory t = sample_traj(
                    e.task, mix_seed({1212, static_cast<uint64_t>(b),
                                      static_cast<uint64_t>(group_id),
                                      static_cast<uint64_t>(j)}));
                t.terminal_reward = 0.0;  // group stays uniformly failed
                batch.trajs.push_back(std::move(t));
                batch.group_of.push_back(group_id);
            }
            batch.trajs.push_back(injected_traj(e.task, rng));
            batch.group_of.push_back(group_id);
        }

        // PPO pipeline: simplified GAE + batch normalization
        std::vector<AdvantageRecord> recs;
        for (const Trajectory& t : batch.trajs) recs.push_back(gae_simplified(t));
        normalize_advantages(recs);
        // GRPO pipeline on the same groups
        std::vector<std::vector<double>> grpo(batch.trajs.size());
        for (int g = 0; g < group_id; ++g) {
            std::vector<Trajectory> group;
            std::vector<size_t> members;
            for (size_t i = 0; i < batch.trajs.size(); ++i)
                if (batch.group_of[i] == g) {
                    group.push_back(batch.trajs[i]);
                    members.push_back(i);
                }
            auto adv = grpo_advantages(group);
            for (size_t m = 0; m < members.size(); ++m) grpo[members[m]] = std::move(adv[m]);
        }
        std::vector<ScoredTrajectory> scored;
        for (size_t i = 0; i < batch.trajs.size(); ++i) {
            ScoredTrajectory s;
            s.traj = &batch.trajs[i];
            s.ppo_advantages = recs[i].advantages;
            s.grpo_advantages = grpo[i];
            s.onset = repeat_metrics(batch.trajs[i].gen_tokens, params).first_repetition_onset;
            scored.push_back(s);
        }
        RepetitiveAdvantageSummary sum = advantage_on_repetitive_tokens(scored);
        if (sum.ppo_mean && sum.grpo_mean) {
            ++comparable;
            if (*sum.ppo_mean < *sum.grpo_mean) ++ppo_below;
        }
    }
    double frac = comparable > 0 ? static_cast<double>(ppo_below) / comparable : 0.0;
    double elapsed = seconds_since(t0);
    report(6, "PPO advantage on repetitive tokens below GRPO in >=80% of batches",
           comparable >= 100 && frac >= 0.8 && elapsed < 900.0,
           fmt(100.0 * frac, 4) + "% of " + std::to_string(comparable) + " batches, " +
               fmt(elapsed / 60.0, 3) + " min");

    // criterion 7: paired pre-onset vs repetitive-span critic values over
    // injected repetitive trajectories on mastered prompts
    int wins = 0, pairs = 0;
    for (int i = 0; i < 40; ++i) {
        Rng rng(mix_seed({5150, static_cast<uint64_t>(i)}));
        const PoolEntry& e = train_pool.entries[easy.empty() ? rng.below(train_pool.size())
                                                             : easy[rng.below(easy.size())]];
        Trajectory t = injected_traj(e.task, rng);
        auto onset = repeat_metrics(t.gen_tokens, params).first_repetition_onset;
        if (!onset || *onset < 2) continue;
        double pre = 0.0, post = 0.0;
        int pre_n = 0, post_n = 0;
        for (size_t k = 0; k < t.length(); ++k) {
            if (static_cast<int>(k) < *onset) {
                pre += t.old_values[k];
                ++pre_n;
            } else {
                post += t.old_values[k];
                ++post_n;
            }
        }
        if (pre_n == 0 || post_n == 0) continue;
        ++pairs;
        if (post / post_n < pre / pre_n) ++wins;
    }
    // one-sided sign test: P(Binomial(pairs, 1/2) >= wins)
    double p_value = 0.0;
    for (int k = wins; k <= pairs; ++k)
        p_value += std::exp(std::lgamma(pairs + 1) - std::lgamma(k + 1) -
                            std::lgamma(pairs - k + 1) - pairs * std::log(2.0));
    report(7, "critic value lower on repetitive spans than pre-onset spans (sign test)",
           pairs >= 30 && p_value < 0.05,
           std::to_string(wins) + "/" + std::to_string(pairs) + " pairs, p = " + fmt(p_value));
}

// ---------------------------------------------------------------------------
// criterion 8: ablation direction checks

double final_window_mean(const std::vector<IterationStats>& stats, size_t window = 100) {
    if (stats.empty()) return 0.0;
    size_t n = std::min(window, stats.size());
    double sum = 0.0;
    for (size_t i = stats.size() - n; i < stats.size(); ++i) sum += stats[i].mean_reward;
    return sum / static_cast<double>(n);
}

void criterion_ablations() {
    auto t0 = Clock::now();
    ExperimentConfig base = preset_config("small-add");
    base.seed = 5;
    base.total_iterations = 320;

    auto run_arm = [&](const std::string& tag, ExperimentConfig cfg) {
        cfg.output_dir = (g_work / ("abl_" + tag)).string();
        return run_train(cfg);
    };

    // arms run two at a time (independent processes of work, two cores)
    std::vector<std::pair<std::string, ExperimentConfig>> arms;
    {
        ExperimentConfig lam1 = base;
        lam1.algo.lambda = 1.0;
        ExperimentConfig lam95 = base;
        lam95.algo.lambda = 0.95;
        ExperimentConfig klnone = base;
        ExperimentConfig klloss = base;
        klloss.algo.kl_mode = KlMode::loss;
        klloss.algo.kl_coef = 0.1;
        ExperimentConfig klpen = base;
        klpen.algo.kl_mode = KlMode::penalty;
        klpen.algo.kl_coef = 0.1;
        ExperimentConfig large = base;
        large.pool_preset = "large";
        ExperimentConfig small = base;
        small.pool_preset = "small";
        arms = {{"lambda_1.0", lam1},     {"lambda_0.95", lam95}, {"kl_none", klnone},
                {"kl_loss", klloss},      {"kl_penalty", klpen},  {"pool_large", large},
                {"pool_small", small}};
    }
    std::vector<RunResult> results(arms.size());
    for (size_t i = 0; i < arms.size(); i += 2) {
        if (i + 1 < arms.size()) {
            RunResult r2;
            std::thread th([&, i] { results[i + 1] = run_arm(arms[i + 1].first, arms[i + 1].second); });
            results[i] = run_arm(arms[i].first, arms[i].second);
            th.join();
        } else {
            results[i] = run_arm(arms[i].first, arms[i].second);
        }
    }

    double lam1 = final_window_mean(results[0].stats);
    double lam95 = final_window_mean(results[1].stats);
    double none = final_window_mean(results[2].stats);
    double loss = final_window_mean(results[3].stats);
    double pen = final_window_mean(results[4].stats);
    double large = final_window_mean(results[5].stats);
    double small = final_window_mean(results[6].stats);

    bool pass = lam1 >= lam95 && none >= loss && none >= pen && large >= small;
    double elapsed = seconds_since(t0);
    report(8, "ablation directions: lambda 1.0 >= 0.95, no-KL >= KL arms, large >= small pool",
           pass,
           "lambda " + fmt(lam1) + " vs " + fmt(lam95) + "; kl none " + fmt(none) + " vs loss " +
               fmt(loss) + " / penalty " + fmt(pen) + "; pool " + fmt(large) + " vs " +
               fmt(small) + "; " + fmt(elapsed / 60.0, 3) + " min");
}

}  // namespace

int main(int argc, char** argv) {
    g_work = "acceptance_work";
    bool quick = false;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--workdir" && i + 1 < argc) g_work = argv[++i];
        else if (arg == "--quick") quick = true;  // fast criteria only (development aid)
    }
    fs::create_directories(g_work);

    criterion_gae_equivalence();
    criterion_loss_gradients();
    criterion_reward_purity();
    criterion_determinism();
    if (!quick) {
        criterion_learning_dynamics();
        criteria_critic_analysis();
        criterion_ablations();
    }

    int failed = 0;
    for (const Gate& g : g_gates)
        if (!g.pass) ++failed;
    std::printf("%zu criteria checked, %d failed\n", g_gates.size(), failed);
    return failed == 0 ? 0 : 1;
}
