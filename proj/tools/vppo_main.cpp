// Command-line driver: train / eval / ablate / analyze / score / mine.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vppo/analysis.hpp"
#include "vppo/config.hpp"
#include "vppo/experiment.hpp"
#include "vppo/pool.hpp"
#include "vppo/reward.hpp"
#include "vppo/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonTrainArgs {
    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    std::string output_dir;
    std::optional<int64_t> iterations;
    std::string init_from;
    std::string pool_file;
};

vppo::ExperimentConfig resolve_config(const CommonTrainArgs& args) {
    if (!args.preset.empty() && !args.config_path.empty())
        throw std::invalid_argument("use either --config or --preset, not both");
    vppo::ExperimentConfig cfg;
    if (!args.config_path.empty())
        cfg = vppo::load_config_file(args.config_path);
    else
        cfg = vppo::preset_config(args.preset.empty() ? "small-add" : args.preset);
    for (const std::string& kv : args.overrides) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        vppo::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed) cfg.seed = *args.seed;
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (args.iterations) cfg.total_iterations = *args.iterations;
    if (!args.init_from.empty()) cfg.init_checkpoint = args.init_from;
    if (!args.pool_file.empty()) cfg.pool_file = args.pool_file;
    cfg.validate();
    return cfg;
}

void add_train_options(CLI::App* cmd, CommonTrainArgs& args,
                       const char* preset_flag = "--preset") {
    cmd->add_option("--config", args.config_path, "flat key=value config file");
    cmd->add_option(preset_flag, args.preset, "config preset (default, small-add, smoke)");
    cmd->add_option("--set", args.overrides, "override a config key, e.g. --set policy_lr=0.002")
        ->take_all();
    cmd->add_option("--seed", args.seed, "root seed");
    cmd->add_option("--output-dir", args.output_dir, "artifact directory");
    cmd->add_option("--iterations", args.iterations, "total training iterations");
    cmd->add_option("--init-from", args.init_from, "checkpoint to resume from");
    cmd->add_option("--pool-file", args.pool_file, "prompt pool JSONL overriding the preset");
}

int cmd_train(const CommonTrainArgs& args) {
    vppo::ExperimentConfig cfg = resolve_config(args);
    std::cerr << "[train] " << cfg.total_iterations << " iterations into " << cfg.output_dir
              << "\n";
    vppo::RunResult res = vppo::run_train(cfg, [](const vppo::IterationStats& s,
                                                  const vppo::TrainState&) {
        if (s.iteration % 10 == 0)
            std::cerr << "[train] iter " << s.iteration << " reward " << s.mean_reward
                      << " len " << s.mean_resp_len << " format " << s.format_ratio << "\n";
        return true;
    });
    std::cout << res.stats_csv_path << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& pool_file,
             const std::string& pool_preset, int64_t responses, uint64_t seed,
             const std::string& out_path) {
    vppo::PromptPool pool;
    if (!pool_file.empty())
        pool = vppo::load_pool_jsonl(pool_file);
    else
        pool = vppo::build_pool(vppo::preset_pool_spec(pool_preset),
                                vppo::mix_seed({seed, vppo::stream_id("evalpool")}));
    vppo::EvalReport rep = vppo::run_eval(checkpoint, pool, responses, seed);
    std::string text = rep.json.dump(2);
    if (!out_path.empty()) {
        std::ofstream os(out_path, std::ios::trunc);
        os << text << "\n";
    }
    std::cout << text << "\n";
    return 0;
}

int cmd_score(const std::string& in_path, const std::string& out_path) {
    std::ifstream is(in_path);
    if (!is) throw std::runtime_error("score: cannot open " + in_path);
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw std::runtime_error("score: cannot write " + out_path);
        os = &file;
    }
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        vppo::RewardOutcome outcome =
            vppo::score(j.at("response").get<std::string>(), j.at("reference").get<std::string>());
        ordered_json rec;
        rec["reward"] = outcome.reward;
        if (outcome.extracted)
            rec["extracted"] = *outcome.extracted;
        else
            rec["extracted"] = nullptr;
        rec["well_formatted"] = outcome.well_formatted;
        (*os) << rec.dump() << "\n";
    }
    return 0;
}

int cmd_mine(const std::string& pool_path, const std::string& stats_path,
             const std::string& out_path, int64_t threshold, int64_t attempts) {
    vppo::PromptPool pool = vppo::load_pool_jsonl(pool_path);
    vppo::load_pool_stats_csv(pool, stats_path);
    vppo::PromptPool hard = vppo::mine_hard_prompts(pool, threshold, attempts);
    vppo::save_pool_jsonl(hard, out_path);
    std::cerr << "[mine] kept " << hard.size() << " of " << pool.size() << " prompts\n";
    return 0;
}

int cmd_ablate(const std::string& preset, const CommonTrainArgs& args,
               const std::string& output_dir) {
    vppo::ExperimentConfig base = resolve_config(args);
    vppo::run_ablation(preset, base, output_dir.empty() ? "runs/ablate_" + preset : output_dir);
    return 0;
}

struct DumpedTrajectory {
    vppo::RolloutItem item;
    int64_t iteration = 0;
    std::string pool_id;
    std::string question;
    std::string answer;
};

int cmd_analyze(const std::string& rollouts_path, const std::string& metrics_path,
                const std::string& heatmap_path, const std::string& checkpoint_path,
                const vppo::RepeatParams& params) {
    std::ifstream is(rollouts_path);
    if (!is) throw std::runtime_error("analyze: cannot open " + rollouts_path);
    std::vector<DumpedTrajectory> all;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        DumpedTrajectory d;
        d.iteration = j.at("iteration").get<int64_t>();
        d.pool_id = j.at("pool_id").get<std::string>();
        d.question = j.at("question").get<std::string>();
        d.answer = j.at("answer").get<std::string>();
        d.item.prompt_slot = j.at("prompt_slot").get<int>();
        d.item.response_idx = j.at("response_idx").get<int>();
        d.item.traj.prompt_tokens = j.at("prompt_tokens").get<std::vector<int>>();
        d.item.traj.gen_tokens = j.at("gen_tokens").get<std::vector<int>>();
        d.item.traj.old_values = j.at("old_values").get<std::vector<double>>();
        d.item.traj.old_logprobs = j.at("old_logprobs").get<std::vector<double>>();
        d.item.traj.terminal_reward = j.at("reward").get<double>();
        d.item.traj.truncated = j.at("truncated").get<bool>();
        d.item.gen_text = j.at("gen_text").get<std::string>();
        all.push_back(std::move(d));
    }
    if (all.empty()) throw std::runtime_error("analyze: no trajectories in " + rollouts_path);

    vppo::Tokenizer tok;
    std::optional<vppo::CriticNet> critic;
    if (!checkpoint_path.empty()) critic = vppo::load_critic_from_checkpoint(checkpoint_path);

    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) throw std::runtime_error("analyze: cannot write " + metrics_path);
    metrics << "iteration,pool_id,prompt_slot,response_idx,reward,gen_len,truncated,"
               "reflective,repeat_score,repetition_onset\n";

    std::ofstream heatmap(heatmap_path, std::ios::trunc);
    if (!heatmap) throw std::runtime_error("analyze: cannot write " + heatmap_path);

    // group by iteration: normalization and the advantage comparison are
    // batch-level statistics
    std::map<int64_t, std::vector<size_t>> batches;
    for (size_t i = 0; i < all.size(); ++i) batches[all[i].iteration].push_back(i);

    ordered_json summary = ordered_json::array();
    for (auto& [iteration, idxs] : batches) {
        std::vector<vppo::AdvantageRecord> recs;
        for (size_t i : idxs) recs.push_back(vppo::gae_simplified(all[i].item.traj));
        vppo::normalize_advantages(recs);

        // rebuild groups by prompt_slot for the GRPO estimator
        std::map<int, std::vector<size_t>> groups;
        for (size_t k = 0; k < idxs.size(); ++k)
            groups[all[idxs[k]].item.prompt_slot].push_back(k);
        std::vector<std::vector<double>> grpo(idxs.size());
        for (auto& [slot, members] : groups) {
            if (members.size() < 2) {
                for (size_t k : members) grpo[k].assign(all[idxs[k]].item.traj.length(), 0.0);
                continue;
            }
            std::vector<vppo::Trajectory> group;
            for (size_t k : members) group.push_back(all[idxs[k]].item.traj);
            auto adv = vppo::grpo_advantages(group);
            for (size_t m = 0; m < members.size(); ++m) grpo[members[m]] = std::move(adv[m]);
        }

        std::vector<vppo::ScoredTrajectory> scored;
        std::vector<vppo::RepetitionReport> reports;
        reports.reserve(idxs.size());
        for (size_t k = 0; k < idxs.size(); ++k) {
            const DumpedTrajectory& d = all[idxs[k]];
            vppo::RepetitionReport rep = vppo::repeat_metrics(d.item.traj.gen_tokens, params);
            rep.truncated = d.item.traj.truncated;
            auto [reflective, hits] = vppo::detect_reflection(d.item.gen_text);
            rep.reflective = reflective;
            rep.reflection_patterns_hit = std::move(hits);
            reports.push_back(rep);
        }
        for (size_t k = 0; k < idxs.size(); ++k) {
            vppo::ScoredTrajectory s;
            s.traj = &all[idxs[k]].item.traj;
            s.ppo_advantages = recs[k].advantages;
            s.grpo_advantages = grpo[k];
            s.onset = reports[k].first_repetition_onset;
            scored.push_back(s);
        }
        vppo::RepetitiveAdvantageSummary cmp = vppo::advantage_on_repetitive_tokens(scored);
        ordered_json srec;
        srec["iteration"] = iteration;
        srec["repetitive_tokens"] = cmp.token_count;
        srec["ppo_mean_advantage_repetitive"] =
            cmp.ppo_mean ? ordered_json(*cmp.ppo_mean) : ordered_json(nullptr);
        srec["grpo_mean_advantage_repetitive"] =
            cmp.grpo_mean ? ordered_json(*cmp.grpo_mean) : ordered_json(nullptr);
        summary.push_back(srec);

        for (size_t k = 0; k < idxs.size(); ++k) {
            const DumpedTrajectory& d = all[idxs[k]];
            const vppo::RepetitionReport& rep = reports[k];
            metrics << iteration << "," << d.pool_id << "," << d.item.prompt_slot << ","
                    << d.item.response_idx << "," << d.item.traj.terminal_reward << ","
                    << d.item.traj.length() << "," << (d.item.traj.truncated ? 1 : 0) << ","
                    << (rep.reflective ? 1 : 0) << "," << rep.repeat_score << ",";
            if (rep.first_repetition_onset) metrics << *rep.first_repetition_onset;
            metrics << "\n";

            if (critic) {
                auto records = vppo::value_heatmap_dump(*critic, d.item.traj, tok);
                for (auto& rec : records) {
                    rec["pool_id"] = d.pool_id;
                    rec["response_idx"] = d.item.response_idx;
                    heatmap << rec.dump() << "\n";
                }
            } else {
                for (size_t t = 0; t < d.item.traj.length(); ++t) {
                    ordered_json rec;
                    rec["position"] = t;
                    rec["token_text"] = tok.token_text(d.item.traj.gen_tokens[t]);
                    rec["value"] = d.item.traj.old_values[t];
                    rec["pool_id"] = d.pool_id;
                    rec["response_idx"] = d.item.response_idx;
                    heatmap << rec.dump() << "\n";
                }
            }
        }
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale PPO trainer for verifiable token tasks"};
    app.require_subcommand(1);

    CommonTrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "run the training loop");
    add_train_options(train, train_args);

    std::string eval_ckpt, eval_pool_file, eval_pool_preset = "small-add-eval", eval_out;
    int64_t eval_responses = 16;
    uint64_t eval_seed = 1;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a pool");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--pool-file", eval_pool_file, "pool JSONL");
    eval->add_option("--pool-preset", eval_pool_preset, "pool preset when no file given");
    eval->add_option("--responses", eval_responses, "responses per question");
    eval->add_option("--seed", eval_seed, "evaluation seed");
    eval->add_option("--out", eval_out, "write the JSON report here");

    std::string ablate_preset, ablate_out;
    CommonTrainArgs ablate_args;
    CLI::App* ablate = app.add_subcommand("ablate", "paired ablation runs with shared seeds");
    ablate->add_option("--preset", ablate_preset,
                       "one of gae_lambda, kl_mode, data_scale, algo_ppo_vs_grpo")
        ->required();
    add_train_options(ablate, ablate_args, "--base-preset");
    ablate->add_option("--arms-dir", ablate_out, "directory for the arm runs");

    std::string an_rollouts, an_metrics = "metrics.csv", an_heatmap = "heatmap.jsonl", an_ckpt;
    vppo::RepeatParams an_params;
    CLI::App* analyze = app.add_subcommand("analyze", "metrics from a rollout dump");
    analyze->add_option("--rollouts", an_rollouts, "rollout JSONL from train")->required();
    analyze->add_option("--out-metrics", an_metrics, "metric CSV path");
    analyze->add_option("--out-heatmap", an_heatmap, "heatmap JSONL path");
    analyze->add_option("--checkpoint", an_ckpt,
                        "recompute critic values from this checkpoint (else stored values)");
    analyze->add_option("--onset-n", an_params.onset_n, "onset n-gram size");
    analyze->add_option("--onset-min-repeats", an_params.onset_min_repeats,
                        "downstream recurrences flagging an onset");

    std::string score_in, score_out;
    CLI::App* score_cmd = app.add_subcommand("score", "grade JSONL {response, reference} pairs");
    score_cmd->add_option("--in", score_in, "input JSONL")->required();
    score_cmd->add_option("--out", score_out, "output JSONL (default stdout)");

    std::string mine_pool, mine_stats, mine_out = "hard_prompts.jsonl";
    int64_t mine_threshold = 4, mine_attempts = 64;
    CLI::App* mine = app.add_subcommand("mine", "select hard prompts from training stats");
    mine->add_option("--pool", mine_pool, "pool JSONL")->required();
    mine->add_option("--stats", mine_stats, "prompt stats CSV from train")->required();
    mine->add_option("--out", mine_out, "output pool JSONL");
    mine->add_option("--threshold", mine_threshold, "keep prompts with fewer correct than this");
    mine->add_option("--attempts", mine_attempts, "minimum attempts for eligibility");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (eval->parsed())
            return cmd_eval(eval_ckpt, eval_pool_file, eval_pool_preset, eval_responses,
                            eval_seed, eval_out);
        if (ablate->parsed()) return cmd_ablate(ablate_preset, ablate_args, ablate_out);
        if (analyze->parsed())
            return cmd_analyze(an_rollouts, an_metrics, an_heatmap, an_ckpt, an_params);
        if (score_cmd->parsed()) return cmd_score(score_in, score_out);
        if (mine->parsed())
            return cmd_mine(mine_pool, mine_stats, mine_out, mine_threshold, mine_attempts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
