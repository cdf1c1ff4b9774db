#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vppo/experiment.hpp"
#include "vppo/train.hpp"

using namespace vppo;
namespace fs = std::filesystem;

namespace {

ExperimentConfig smoke_config(const std::string& tag) {
    ExperimentConfig cfg = preset_config("smoke");
    cfg.pool_spec = "add:1:4";
    cfg.output_dir = (fs::temp_directory_path() / ("vppo_" + tag)).string();
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<double> snapshot(const std::vector<std::pair<std::string, Tensor>>& named) {
    std::vector<double> out;
    for (auto& [n, t] : named) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
}

}  // namespace

TEST_CASE("train iteration produces bounded stats and one policy step") {
    ExperimentConfig cfg = smoke_config("iter");
    TrainState st = init_train_state(cfg);
    IterationStats s = train_iteration(st);
    REQUIRE(s.iteration == 1);
    REQUIRE(s.mean_reward >= 0.0);
    REQUIRE(s.mean_reward <= 1.0);
    REQUIRE(s.format_ratio >= 0.0);
    REQUIRE(s.format_ratio <= 1.0);
    REQUIRE(s.truncate_rate >= 0.0);
    REQUIRE(s.truncate_rate <= 1.0);
    REQUIRE(s.mean_resp_len > 0.0);
    REQUIRE(s.value_loss.has_value());
    REQUIRE(st.policy_update_count == 1);
    train_iteration(st);
    REQUIRE(st.policy_update_count == 2);  // one policy step per iteration
    REQUIRE(st.iteration == 2);
}

TEST_CASE("rollout samples from the freshly updated policy") {
    ExperimentConfig cfg = smoke_config("thetaold");
    TrainState st = init_train_state(cfg);
    train_iteration(st);

    // snapshot of theta after iteration 1 == theta_old for iteration 2
    auto [copy, copy_critic] = init_models(cfg.seed, cfg.arch);
    auto dst = named_params(copy);
    auto src = named_params(st.policy);
    for (size_t i = 0; i < src.size(); ++i)
        std::copy(src[i].second.values().begin(), src[i].second.values().end(),
                  dst[i].second.values().begin());

    std::vector<RolloutItem> items;
    train_iteration(st, &items);
    REQUIRE_FALSE(items.empty());
    const Trajectory& traj = items[0].traj;
    PolicySession session(copy);
    std::vector<double> logits;
    for (int t : traj.prompt_tokens) logits = session.step(t);
    std::vector<double> row(logits.size());
    for (size_t t = 0; t < traj.length(); ++t) {
        kern::log_softmax_row(row.data(), logits.data(), static_cast<int>(logits.size()));
        REQUIRE(traj.old_logprobs[t] == row[static_cast<size_t>(traj.gen_tokens[t])]);
        if (t + 1 < traj.length()) logits = session.step(traj.gen_tokens[t]);
    }
}

TEST_CASE("GRPO mode never touches the critic") {
    ExperimentConfig cfg = smoke_config("grpo");
    cfg.algo.algorithm = Algorithm::GRPO;
    TrainState st = init_train_state(cfg);
    std::vector<double> before = snapshot(named_params(st.critic));
    IterationStats s = train_iteration(st);
    std::vector<double> after = snapshot(named_params(st.critic));
    REQUIRE(before.size() == after.size());
    REQUIRE(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0);
    REQUIRE_FALSE(s.value_loss.has_value());
    REQUIRE(st.opt_critic.step_count == 0);
}

TEST_CASE("reference model forwards happen only under KL modes") {
    ExperimentConfig cfg = smoke_config("klnone");
    TrainState st = init_train_state(cfg);
    train_iteration(st);
    train_iteration(st);
    REQUIRE(st.ref_forward_count == 0);
    REQUIRE_FALSE(st.ref_policy.has_value());

    ExperimentConfig cfg2 = smoke_config("klloss");
    cfg2.algo.kl_mode = KlMode::loss;
    cfg2.algo.kl_coef = 0.1;
    TrainState st2 = init_train_state(cfg2);
    train_iteration(st2);
    REQUIRE(st2.ref_forward_count > 0);

    ExperimentConfig cfg3 = smoke_config("klpen");
    cfg3.algo.kl_mode = KlMode::penalty;
    cfg3.algo.kl_coef = 0.1;
    TrainState st3 = init_train_state(cfg3);
    train_iteration(st3);
    REQUIRE(st3.ref_forward_count > 0);
}

TEST_CASE("stats csv schema is fixed") {
    REQUIRE(stats_csv_header() ==
            "iteration,mean_reward,mean_resp_len,mean_correct_reflection_len,format_ratio,"
            "truncate_rate,repeat_score,policy_loss,value_loss,mean_advantage_repetitive,"
            "grpo_mean_advantage_repetitive");
    IterationStats s;
    s.iteration = 3;
    s.mean_reward = 0.5;
    std::string row = stats_csv_row(s);
    // absent optionals serialize as empty fields
    REQUIRE(std::count(row.begin(), row.end(), ',') == 10);
    REQUIRE(row.substr(0, 6) == "3,0.5,");
}

TEST_CASE("run_train writes the full artifact set") {
    ExperimentConfig cfg = smoke_config("artifacts");
    fs::remove_all(cfg.output_dir);
    RunResult res = run_train(cfg);
    REQUIRE(fs::exists(fs::path(cfg.output_dir) / "config.snapshot.cfg"));
    REQUIRE(fs::exists(fs::path(cfg.output_dir) / "pool.jsonl"));
    REQUIRE(fs::exists(fs::path(cfg.output_dir) / "prompt_stats.csv"));
    REQUIRE(fs::exists(res.final_checkpoint_path));
    std::string csv = slurp(res.stats_csv_path);
    // header + exactly 2 data rows for a 2-iteration run
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);
    REQUIRE(csv.substr(0, csv.find('\n')) == stats_csv_header());

    // config snapshot parses back to an equivalent config
    ExperimentConfig back = load_config_file((fs::path(cfg.output_dir) / "config.snapshot.cfg").string());
    REQUIRE(serialize_config(back) == serialize_config(cfg));
    fs::remove_all(cfg.output_dir);
}

TEST_CASE("identical config and seed reproduce the stats bitwise") {
    ExperimentConfig a = smoke_config("det_a");
    ExperimentConfig b = smoke_config("det_b");
    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
    RunResult ra = run_train(a);
    RunResult rb = run_train(b);
    REQUIRE(slurp(ra.stats_csv_path) == slurp(rb.stats_csv_path));
    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
}

TEST_CASE("checkpoint resume reproduces the continuation bitwise") {
    ExperimentConfig full = smoke_config("resume_full");
    full.total_iterations = 4;
    full.checkpoint_every = 2;
    fs::remove_all(full.output_dir);
    RunResult rf = run_train(full);
    std::string full_csv = slurp(rf.stats_csv_path);

    ExperimentConfig resumed = smoke_config("resume_tail");
    resumed.total_iterations = 4;
    resumed.init_checkpoint = (fs::path(full.output_dir) / "ckpt_iter000002.bin").string();
    fs::remove_all(resumed.output_dir);
    RunResult rr = run_train(resumed);
    std::string tail_csv = slurp(rr.stats_csv_path);

    // rows 3 and 4 of the full run == the resumed run's rows
    auto lines = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string line;
        while (std::getline(ss, line)) out.push_back(line);
        return out;
    };
    auto lf = lines(full_csv);
    auto lr = lines(tail_csv);
    REQUIRE(lf.size() == 5);
    REQUIRE(lr.size() == 3);
    REQUIRE(lf[3] == lr[1]);
    REQUIRE(lf[4] == lr[2]);
    fs::remove_all(full.output_dir);
    fs::remove_all(resumed.output_dir);
}

TEST_CASE("eval reports perfect accuracy for a policy rigged to answer") {
    // handcrafted net: all block outputs zero so the residual stream is the
    // positional embedding; three positions are wired to emit <answer>1</answer>
    Tokenizer tok;
    Arch arch;
    arch.vocab = tok.vocab_size();
    arch.d_model = 8;
    arch.n_layers = 1;
    arch.n_heads = 2;
    arch.max_len = 128;
    auto [policy, critic] = init_models(1, arch);
    for (auto& [n, t] : named_params(policy))
        std::fill(t.values().begin(), t.values().end(), 0.0);
    // keep the final norm as a pass-through so the positional signal survives
    std::fill(policy.bb.lnf_g.values().begin(), policy.bb.lnf_g.values().end(), 1.0);

    std::string q = "0+1=?";
    int prompt_len = static_cast<int>(render_prompt(tok, q).size());
    int one_id = tok.encode("1")[0];
    int targets[3] = {Tokenizer::kAnswerOpen, one_id, Tokenizer::kAnswerClose};
    for (int k = 0; k < 3; ++k) {
        policy.bb.pos_emb.values()[static_cast<size_t>(prompt_len - 1 + k) * arch.d_model + k] = 5.0;
        policy.w_out.values()[static_cast<size_t>(k) * arch.vocab + targets[k]] = 50.0;
    }

    PromptPool pool;
    for (int i = 0; i < 2; ++i) {
        PoolEntry e;
        e.id = "rig-" + std::to_string(i);
        e.task.kind = TaskKind::add;
        e.task.difficulty = 1;
        e.task.question = i == 0 ? "0+1=?" : "1+0=?";
        e.task.answer = "1";
        pool.entries.push_back(e);
    }

    SamplerConfig sampler;
    sampler.max_new_tokens = 8;
    EvalReport rep = evaluate_policy(policy, pool, sampler, 16, 99);
    REQUIRE(rep.mean_accuracy == 1.0);
    REQUIRE(rep.json["results"].size() == 2);

    EvalReport rep2 = evaluate_policy(policy, pool, sampler, 16, 99);
    REQUIRE(rep2.mean_accuracy == rep.mean_accuracy);  // deterministic given seed
}

TEST_CASE("eval accuracy is bounded for a random policy") {
    Tokenizer tok;
    Arch arch;
    arch.vocab = tok.vocab_size();
    arch.d_model = 16;
    arch.n_layers = 1;
    arch.n_heads = 2;
    arch.max_len = 128;
    auto [policy, critic] = init_models(7, arch);
    PromptPool pool = build_pool(parse_pool_spec("add:1:3"), 5);
    SamplerConfig sampler;
    sampler.max_new_tokens = 8;
    EvalReport rep = evaluate_policy(policy, pool, sampler, 4, 3);
    REQUIRE(rep.mean_accuracy >= 0.0);
    REQUIRE(rep.mean_accuracy <= 1.0);
}

TEST_CASE("config parsing, presets and overrides") {
    ExperimentConfig def = preset_config("default");
    REQUIRE(def.algo.prompts_per_step == 128);
    REQUIRE(def.algo.responses_per_prompt == 64);
    REQUIRE(def.algo.clip_epsilon == 0.2);
    REQUIRE(def.algo.gamma == 1.0);
    REQUIRE(def.algo.lambda == 1.0);
    REQUIRE(def.algo.kl_mode == KlMode::none);
    REQUIRE(def.policy_lr == 1e-6);
    REQUIRE(def.critic_lr == 5e-6);
    REQUIRE(def.warmup_steps == 50);
    REQUIRE(def.algo.critic_minibatches == 12);
    REQUIRE(def.algo.advantage_norm);
    REQUIRE(def.sampler.temperature == 1.0);
    REQUIRE(def.sampler.top_p == 1.0);

    std::string text = "preset = smoke\nseed = 42\npolicy_lr = 0.005\nkl_mode = loss\nkl_coef = 0.2\n";
    ExperimentConfig cfg = parse_config_text(text);
    REQUIRE(cfg.seed == 42);
    REQUIRE(cfg.policy_lr == 0.005);
    REQUIRE(cfg.algo.kl_mode == KlMode::loss);
    REQUIRE(cfg.algo.prompts_per_step == 2);  // from the smoke preset

    REQUIRE_THROWS_AS(parse_config_text("no_such_key = 1\n"), std::invalid_argument);
    REQUIRE_THROWS_AS(preset_config("bogus"), std::invalid_argument);

    ExperimentConfig round = parse_config_text(serialize_config(cfg));
    REQUIRE(serialize_config(round) == serialize_config(cfg));

    ExperimentConfig bad = preset_config("smoke");
    bad.total_iterations = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}
