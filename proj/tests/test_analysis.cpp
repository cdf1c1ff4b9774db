#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>

#include "vppo/analysis.hpp"
#include "vppo/model.hpp"
#include "vppo/rl.hpp"
#include "vppo/rng.hpp"
#include "vppo/tokenizer.hpp"

using namespace vppo;

namespace {

// brute-force duplicate-n-gram oracle: direct O(T^2) comparisons, no hashing
double oracle_repeat_score(const std::vector<int>& t, const RepeatParams& p) {
    int len = static_cast<int>(t.size());
    double best = 0.0;
    for (int n = p.n_min; n <= p.n_max && n <= len; ++n) {
        int dup = 0;
        for (int i = 0; i + n <= len; ++i) {
            bool found = false;
            for (int j = 0; j + n <= len && !found; ++j) {
                if (j == i) continue;
                bool eq = true;
                for (int k = 0; k < n; ++k)
                    if (t[static_cast<size_t>(i + k)] != t[static_cast<size_t>(j + k)]) {
                        eq = false;
                        break;
                    }
                found = eq;
            }
            if (found) ++dup;
        }
        best = std::max(best, static_cast<double>(dup) / static_cast<double>(len - n + 1));
    }
    return best;
}

std::optional<int> oracle_onset(const std::vector<int>& t, const RepeatParams& p) {
    int len = static_cast<int>(t.size());
    int n = p.onset_n;
    for (int i = 0; i + n <= len; ++i) {
        int hits = 0;
        for (int j = i + 1; j + n <= len; ++j) {
            bool eq = true;
            for (int k = 0; k < n; ++k)
                if (t[static_cast<size_t>(i + k)] != t[static_cast<size_t>(j + k)]) {
                    eq = false;
                    break;
                }
            if (eq) ++hits;
        }
        if (hits >= p.onset_min_repeats) return i;
    }
    return std::nullopt;
}

}  // namespace

TEST_CASE("reflection detection uses the five fixed patterns") {
    auto [r1, p1] = detect_reflection("Wait, let me recheck the sum");
    REQUIRE(r1);
    REQUIRE(std::find(p1.begin(), p1.end(), "wait,") != p1.end());
    REQUIRE(std::find(p1.begin(), p1.end(), "recheck") != p1.end());

    auto [r2, p2] = detect_reflection("the answer is 5");
    REQUIRE_FALSE(r2);
    REQUIRE(p2.empty());

    REQUIRE(detect_reflection("HOWEVER, note").first);         // case-insensitive
    REQUIRE(detect_reflection("ALTERNATIVELY, try 7").first);
    REQUIRE(detect_reflection("i will retry now").first);
    REQUIRE_FALSE(detect_reflection("wait with no comma").first);
}

TEST_CASE("repeat metrics on canonical sequences") {
    SECTION("all distinct tokens") {
        std::vector<int> t(30);
        for (int i = 0; i < 30; ++i) t[static_cast<size_t>(i)] = i;
        RepetitionReport r = repeat_metrics(t);
        REQUIRE(r.repeat_score == 0.0);
        REQUIRE_FALSE(r.first_repetition_onset.has_value());
    }
    SECTION("abcd repeated ten times") {
        std::vector<int> t;
        for (int rep = 0; rep < 10; ++rep)
            for (int c = 0; c < 4; ++c) t.push_back(c);
        RepetitionReport r = repeat_metrics(t);
        REQUIRE(r.repeat_score > 0.9);
        REQUIRE(r.first_repetition_onset.has_value());
        REQUIRE(*r.first_repetition_onset <= 4);
        REQUIRE(r.repeat_score == Catch::Approx(oracle_repeat_score(t, {})).margin(1e-12));
    }
    SECTION("single token repeated") {
        std::vector<int> t(40, 9);
        RepetitionReport r = repeat_metrics(t);
        REQUIRE(r.first_repetition_onset == 0);
        REQUIRE(r.repeat_score == 1.0);
    }
}

TEST_CASE("repeat metrics match the brute-force oracle on random sequences") {
    Rng rng(606);
    RepeatParams params;
    for (int trial = 0; trial < 60; ++trial) {
        size_t len = 5 + rng.below(60);
        std::vector<int> t(len);
        int alphabet = 2 + static_cast<int>(rng.below(5));  // small alphabet forces repeats
        for (int& x : t) x = static_cast<int>(rng.below(static_cast<uint64_t>(alphabet)));
        RepetitionReport r = repeat_metrics(t, params);
        REQUIRE(r.repeat_score == Catch::Approx(oracle_repeat_score(t, params)).margin(1e-12));
        REQUIRE(r.first_repetition_onset == oracle_onset(t, params));
    }
}

TEST_CASE("repeat metrics depend only on the equality structure") {
    Rng rng(707);
    std::vector<int> t(50);
    for (int& x : t) x = static_cast<int>(rng.below(4));
    std::map<int, int> relabel = {{0, 17}, {1, 3}, {2, 29}, {3, 8}};
    std::vector<int> relabeled;
    for (int x : t) relabeled.push_back(relabel[x]);
    RepetitionReport a = repeat_metrics(t);
    RepetitionReport b = repeat_metrics(relabeled);
    REQUIRE(a.repeat_score == b.repeat_score);
    REQUIRE(a.first_repetition_onset == b.first_repetition_onset);
}

TEST_CASE("average correct reflection length") {
    std::vector<double> rewards = {1.0, 1.0, 0.0, 1.0};
    std::vector<char> reflective = {1, 0, 1, 1};
    std::vector<size_t> lengths = {40, 10, 99, 20};
    auto v = avg_correct_reflection_length(rewards, reflective, lengths);
    REQUIRE(v.has_value());
    REQUIRE(*v == Catch::Approx((40.0 + 20.0) / 2.0));

    std::vector<double> no_r = {0.0, 0.0};
    std::vector<char> no_f = {1, 1};
    std::vector<size_t> no_l = {5, 6};
    REQUIRE_FALSE(avg_correct_reflection_length(no_r, no_f, no_l).has_value());

    std::vector<double> one_r = {1.0};
    std::vector<char> one_f = {1};
    std::vector<size_t> one_l = {40};
    REQUIRE(avg_correct_reflection_length(one_r, one_f, one_l) == 40.0);
}

TEST_CASE("advantage comparison on repetitive tokens recomputed by hand") {
    // one repetitive R=0 trajectory among three clean R=1 trajectories
    std::vector<Trajectory> batch;
    Rng rng(808);
    auto mk = [&](size_t len, double reward, bool repetitive) {
        Trajectory t;
        for (size_t i = 0; i < len; ++i)
            t.gen_tokens.push_back(repetitive ? static_cast<int>(i % 3)
                                              : static_cast<int>(100 + batch.size() * 100 + i));
        t.old_logprobs.assign(len, -1.0);
        t.old_values.resize(len);
        for (double& v : t.old_values) v = rng.uniform(0.0, 1.0);
        t.terminal_reward = reward;
        return t;
    };
    batch.push_back(mk(10, 1.0, false));
    batch.push_back(mk(40, 0.0, true));
    batch.push_back(mk(12, 1.0, false));
    batch.push_back(mk(9, 1.0, false));

    // pipeline: simplified GAE, batch normalization, GRPO on the same group
    std::vector<AdvantageRecord> recs;
    for (const Trajectory& t : batch) recs.push_back(gae_simplified(t));
    normalize_advantages(recs);
    auto grpo = grpo_advantages(batch);

    RepeatParams params;
    std::vector<ScoredTrajectory> scored;
    for (size_t i = 0; i < batch.size(); ++i) {
        ScoredTrajectory s;
        s.traj = &batch[i];
        s.ppo_advantages = recs[i].advantages;
        s.grpo_advantages = grpo[i];
        s.onset = repeat_metrics(batch[i].gen_tokens, params).first_repetition_onset;
        scored.push_back(s);
    }
    REQUIRE_FALSE(scored[0].onset.has_value());
    REQUIRE(scored[1].onset.has_value());

    RepetitiveAdvantageSummary sum = advantage_on_repetitive_tokens(scored);
    REQUIRE(sum.ppo_mean.has_value());

    // independent recomputation: mean of normalized (0 - V_t) over the span
    double mean_all_adv = 0.0;
    size_t total = 0;
    for (const AdvantageRecord& r : recs)
        for (double a : r.advantages) { ++total; }
    (void)mean_all_adv;
    std::vector<double> raw;
    for (size_t i = 0; i < batch.size(); ++i)
        for (size_t t = 0; t < batch[i].length(); ++t)
            raw.push_back(batch[i].terminal_reward - batch[i].old_values[t]);
    double mu = 0.0;
    for (double a : raw) mu += a;
    mu /= static_cast<double>(raw.size());
    double var = 0.0;
    for (double a : raw) var += (a - mu) * (a - mu);
    var /= static_cast<double>(raw.size());
    double denom = std::sqrt(var) + 1e-8;

    int onset = *scored[1].onset;
    double hand = 0.0;
    size_t hand_n = 0;
    for (size_t t = static_cast<size_t>(onset); t < batch[1].length(); ++t) {
        hand += ((0.0 - batch[1].old_values[t]) - mu) / denom;
        ++hand_n;
    }
    hand /= static_cast<double>(hand_n);
    REQUIRE(*sum.ppo_mean == Catch::Approx(hand).margin(1e-12));
    REQUIRE(sum.token_count == hand_n);

    // GRPO over the identical token set, recomputed from the group statistic
    double gmean = (1.0 + 0.0 + 1.0 + 1.0) / 4.0;
    double gstd = std::sqrt((3 * (1 - gmean) * (1 - gmean) + gmean * gmean) / 4.0);
    double expected_grpo = (0.0 - gmean) / (gstd + 1e-8);
    REQUIRE(*sum.grpo_mean == Catch::Approx(expected_grpo).margin(1e-12));

    REQUIRE(total == raw.size());
}

TEST_CASE("batches without repetitive trajectories yield absent means") {
    Trajectory t;
    t.gen_tokens = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    t.old_logprobs.assign(10, -1.0);
    t.old_values.assign(10, 0.5);
    t.terminal_reward = 1.0;
    std::vector<double> adv(10, 0.1);
    ScoredTrajectory s;
    s.traj = &t;
    s.ppo_advantages = adv;
    s.grpo_advantages = adv;
    s.onset = repeat_metrics(t.gen_tokens).first_repetition_onset;
    std::vector<ScoredTrajectory> batch = {s};
    RepetitiveAdvantageSummary sum = advantage_on_repetitive_tokens(batch);
    REQUIRE_FALSE(sum.ppo_mean.has_value());
    REQUIRE_FALSE(sum.grpo_mean.has_value());
    REQUIRE(sum.token_count == 0);
}

TEST_CASE("value heatmap dump is a bitwise pass-through of critic values") {
    Arch arch;
    arch.vocab = Tokenizer().vocab_size();
    arch.d_model = 16;
    arch.n_layers = 1;
    arch.n_heads = 2;
    arch.max_len = 64;
    auto [policy, critic] = init_models(909, arch);
    Tokenizer tok;

    Trajectory t;
    t.prompt_tokens = tok.encode("1+2=?");
    t.prompt_tokens.insert(t.prompt_tokens.begin(), Tokenizer::kBos);
    t.gen_tokens = tok.encode("<answer>3</answer>");
    t.old_logprobs.assign(t.gen_tokens.size(), -1.0);
    t.old_values.assign(t.gen_tokens.size(), 0.0);
    t.terminal_reward = 1.0;

    auto records = value_heatmap_dump(critic, t, tok);
    REQUIRE(records.size() == t.gen_tokens.size());

    std::vector<int> full = t.prompt_tokens;
    full.insert(full.end(), t.gen_tokens.begin(), t.gen_tokens.end());
    NoGradGuard ng;
    Tensor values = critic_values(critic, full);
    for (size_t i = 0; i < records.size(); ++i) {
        double expected = values.values()[t.prompt_tokens.size() - 1 + i];
        REQUIRE(records[i]["value"].get<double>() == expected);
        REQUIRE(records[i]["position"].get<size_t>() == i);
    }
    REQUIRE(records[0]["token_text"].get<std::string>() == "<answer>");
}

TEST_CASE("truncate rate") {
    std::vector<Trajectory> batch(4);
    for (auto& t : batch) {
        t.gen_tokens = {1};
        t.old_logprobs = {-1.0};
        t.old_values = {0.0};
    }
    batch[1].truncated = true;
    batch[3].truncated = true;
    REQUIRE(truncate_rate(batch) == 0.5);
}
