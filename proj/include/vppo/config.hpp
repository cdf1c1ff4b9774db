#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vppo/analysis.hpp"
#include "vppo/model.hpp"
#include "vppo/optim.hpp"
#include "vppo/pool.hpp"
#include "vppo/rl.hpp"
#include "vppo/sampler.hpp"
#include "vppo/tokenizer.hpp"

namespace vppo {

// Everything a run needs; (config, seed) fully determine the run. Serialized
// as a flat "key = value" file, CLI flags override file values, the
// environment is never consulted.
struct ExperimentConfig {
    std::string preset;

    AlgoConfig algo;
    Arch arch;
    SamplerConfig sampler;

    // pool selection: explicit file wins, then explicit spec, then preset
    std::string pool_file;
    std::string pool_spec;
    std::string pool_preset = "small-add";

    double policy_lr = 2e-3;
    double critic_lr = 6e-3;
    int64_t warmup_steps = 50;
    LrDecay lr_decay = LrDecay::constant;
    double lr_decay_final_scale = 0.3;  // annealing floor as a fraction of base lr

    int64_t total_iterations = 500;
    int64_t eval_every = 0;       // 0 = off
    int64_t eval_responses = 16;
    int64_t checkpoint_every = 0; // 0 = final only
    int64_t dump_rollouts_every = 0;

    uint64_t seed = 1;
    std::string output_dir = "runs/out";
    std::string init_checkpoint;

    RepeatParams repeat;

    void validate() const {
        algo.validate();
        arch.validate();
        sampler.validate();
        if (total_iterations <= 0) throw std::invalid_argument("config: total_iterations must be positive");
        if (eval_responses <= 0) throw std::invalid_argument("config: eval_responses must be positive");
        if (policy_lr <= 0.0 || critic_lr <= 0.0)
            throw std::invalid_argument("config: learning rates must be positive");
        if (warmup_steps < 0) throw std::invalid_argument("config: warmup_steps must be >= 0");
        if (output_dir.empty()) throw std::invalid_argument("config: output_dir is empty");
        if (pool_file.empty() && pool_spec.empty() && pool_preset.empty())
            throw std::invalid_argument("config: no pool configured");
        if (repeat.n_min < 1 || repeat.n_max < repeat.n_min || repeat.onset_n < 1 ||
            repeat.onset_min_repeats < 1)
            throw std::invalid_argument("config: bad repeat metric parameters");
    }
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

// "default" is the full-scale recipe; "small-add" is the desk-scale preset the
// acceptance dynamics run on; "smoke" exists for fast tests.
inline ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig cfg;
    cfg.preset = name;
    cfg.arch.vocab = Tokenizer().vocab_size();
    if (name == "default") {
        cfg.algo.prompts_per_step = 128;
        cfg.algo.responses_per_prompt = 64;
        cfg.arch.d_model = 64;
        cfg.arch.n_layers = 2;
        cfg.arch.n_heads = 2;
        cfg.arch.max_len = 256;
        cfg.sampler.max_new_tokens = 128;
        cfg.policy_lr = 1e-6;
        cfg.critic_lr = 5e-6;
        cfg.pool_preset = "large";
        cfg.total_iterations = 600;
        cfg.checkpoint_every = 100;
    } else if (name == "small-add") {
        cfg.algo.prompts_per_step = 16;
        cfg.algo.responses_per_prompt = 8;
        // raw R - V advantages: with a cold-started policy whole batches carry
        // zero reward variance, and normalizing those rescales critic noise to
        // full-strength updates that drown the rare early hits
        cfg.algo.advantage_norm = false;
        cfg.arch.d_model = 48;
        cfg.arch.n_layers = 2;
        cfg.arch.n_heads = 2;
        cfg.arch.max_len = 160;
        cfg.sampler.max_new_tokens = 48;
        cfg.policy_lr = 1e-2;
        cfg.critic_lr = 1e-2;
        cfg.pool_preset = "small-add";
        cfg.total_iterations = 500;
    } else if (name == "smoke") {
        cfg.algo.prompts_per_step = 2;
        cfg.algo.responses_per_prompt = 2;
        cfg.algo.critic_minibatches = 3;
        cfg.arch.d_model = 16;
        cfg.arch.n_layers = 1;
        cfg.arch.n_heads = 2;
        cfg.arch.max_len = 128;
        cfg.sampler.max_new_tokens = 10;
        cfg.policy_lr = 1e-3;
        cfg.critic_lr = 1e-3;
        cfg.pool_preset = "small-add";
        cfg.total_iterations = 2;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return cfg;
}

inline void set_config_value(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
    auto as_i64 = [&] { return static_cast<int64_t>(std::stoll(value)); };
    auto as_int = [&] { return std::stoi(value); };
    auto as_f64 = [&] { return std::stod(value); };
    auto as_bool = [&] {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw std::invalid_argument("config: boolean expected for " + key + ", got " + value);
    };

    if (key == "preset") cfg.preset = value;
    else if (key == "algorithm") {
        if (value == "ppo") cfg.algo.algorithm = Algorithm::PPO;
        else if (value == "grpo") cfg.algo.algorithm = Algorithm::GRPO;
        else throw std::invalid_argument("config: algorithm must be ppo or grpo");
    }
    else if (key == "gamma") cfg.algo.gamma = as_f64();
    else if (key == "lambda") cfg.algo.lambda = as_f64();
    else if (key == "clip_epsilon") cfg.algo.clip_epsilon = as_f64();
    else if (key == "kl_mode") {
        if (value == "none") cfg.algo.kl_mode = KlMode::none;
        else if (value == "loss") cfg.algo.kl_mode = KlMode::loss;
        else if (value == "penalty") cfg.algo.kl_mode = KlMode::penalty;
        else throw std::invalid_argument("config: kl_mode must be none, loss or penalty");
    }
    else if (key == "kl_coef") cfg.algo.kl_coef = as_f64();
    else if (key == "prompts_per_step") cfg.algo.prompts_per_step = as_int();
    else if (key == "responses_per_prompt") cfg.algo.responses_per_prompt = as_int();
    else if (key == "critic_minibatches") cfg.algo.critic_minibatches = as_int();
    else if (key == "advantage_norm") cfg.algo.advantage_norm = as_bool();
    else if (key == "d_model") cfg.arch.d_model = as_int();
    else if (key == "n_layers") cfg.arch.n_layers = as_int();
    else if (key == "n_heads") cfg.arch.n_heads = as_int();
    else if (key == "max_len") cfg.arch.max_len = as_int();
    else if (key == "temperature") cfg.sampler.temperature = as_f64();
    else if (key == "top_p") cfg.sampler.top_p = as_f64();
    else if (key == "max_new_tokens") cfg.sampler.max_new_tokens = as_int();
    else if (key == "pool_file") cfg.pool_file = value;
    else if (key == "pool_spec") cfg.pool_spec = value;
    else if (key == "pool_preset") cfg.pool_preset = value;
    else if (key == "policy_lr") cfg.policy_lr = as_f64();
    else if (key == "critic_lr") cfg.critic_lr = as_f64();
    else if (key == "warmup_steps") cfg.warmup_steps = as_i64();
    else if (key == "lr_decay") {
        if (value == "constant") cfg.lr_decay = LrDecay::constant;
        else if (value == "linear") cfg.lr_decay = LrDecay::linear;
        else throw std::invalid_argument("config: lr_decay must be constant or linear");
    }
    else if (key == "lr_decay_final_scale") cfg.lr_decay_final_scale = as_f64();
    else if (key == "total_iterations") cfg.total_iterations = as_i64();
    else if (key == "eval_every") cfg.eval_every = as_i64();
    else if (key == "eval_responses") cfg.eval_responses = as_i64();
    else if (key == "checkpoint_every") cfg.checkpoint_every = as_i64();
    else if (key == "dump_rollouts_every") cfg.dump_rollouts_every = as_i64();
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "init_checkpoint") cfg.init_checkpoint = value;
    else if (key == "repeat_n_min") cfg.repeat.n_min = as_int();
    else if (key == "repeat_n_max") cfg.repeat.n_max = as_int();
    else if (key == "repeat_onset_n") cfg.repeat.onset_n = as_int();
    else if (key == "repeat_onset_min_repeats") cfg.repeat.onset_min_repeats = as_int();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Canonical snapshot; parsing it back reproduces the config exactly.
inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << "\n"; };
    kv("preset", cfg.preset);
    kv("algorithm", to_string(cfg.algo.algorithm));
    kv("gamma", detail::format_double(cfg.algo.gamma));
    kv("lambda", detail::format_double(cfg.algo.lambda));
    kv("clip_epsilon", detail::format_double(cfg.algo.clip_epsilon));
    kv("kl_mode", to_string(cfg.algo.kl_mode));
    kv("kl_coef", detail::format_double(cfg.algo.kl_coef));
    kv("prompts_per_step", std::to_string(cfg.algo.prompts_per_step));
    kv("responses_per_prompt", std::to_string(cfg.algo.responses_per_prompt));
    kv("critic_minibatches", std::to_string(cfg.algo.critic_minibatches));
    kv("advantage_norm", cfg.algo.advantage_norm ? "true" : "false");
    kv("d_model", std::to_string(cfg.arch.d_model));
    kv("n_layers", std::to_string(cfg.arch.n_layers));
    kv("n_heads", std::to_string(cfg.arch.n_heads));
    kv("max_len", std::to_string(cfg.arch.max_len));
    kv("temperature", detail::format_double(cfg.sampler.temperature));
    kv("top_p", detail::format_double(cfg.sampler.top_p));
    kv("max_new_tokens", std::to_string(cfg.sampler.max_new_tokens));
    kv("pool_file", cfg.pool_file);
    kv("pool_spec", cfg.pool_spec);
    kv("pool_preset", cfg.pool_preset);
    kv("policy_lr", detail::format_double(cfg.policy_lr));
    kv("critic_lr", detail::format_double(cfg.critic_lr));
    kv("warmup_steps", std::to_string(cfg.warmup_steps));
    kv("lr_decay", cfg.lr_decay == LrDecay::constant ? "constant" : "linear");
    kv("lr_decay_final_scale", detail::format_double(cfg.lr_decay_final_scale));
    kv("total_iterations", std::to_string(cfg.total_iterations));
    kv("eval_every", std::to_string(cfg.eval_every));
    kv("eval_responses", std::to_string(cfg.eval_responses));
    kv("checkpoint_every", std::to_string(cfg.checkpoint_every));
    kv("dump_rollouts_every", std::to_string(cfg.dump_rollouts_every));
    kv("seed", std::to_string(cfg.seed));
    kv("output_dir", cfg.output_dir);
    kv("init_checkpoint", cfg.init_checkpoint);
    kv("repeat_n_min", std::to_string(cfg.repeat.n_min));
    kv("repeat_n_max", std::to_string(cfg.repeat.n_max));
    kv("repeat_onset_n", std::to_string(cfg.repeat.onset_n));
    kv("repeat_onset_min_repeats", std::to_string(cfg.repeat.onset_min_repeats));
    return os.str();
}

// Flat key = value lines; '#' starts a comment. A "preset" key re-bases the
// config before the remaining keys apply.
inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    cfg.arch.vocab = Tokenizer().vocab_size();
    std::istringstream is(text);
    std::string line;
    std::vector<std::pair<std::string, std::string>> pairs;
    while (std::getline(is, line)) {
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::invalid_argument("config: malformed line '" + line + "'");
            continue;
        }
        auto strip = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        pairs.emplace_back(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    for (auto& [k, v] : pairs)
        if (k == "preset" && !v.empty()) cfg = preset_config(v);
    for (auto& [k, v] : pairs) set_config_value(cfg, k, v);
    return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

inline PromptPool materialize_pool(const ExperimentConfig& cfg) {
    if (!cfg.pool_file.empty()) return load_pool_jsonl(cfg.pool_file);
    auto spec = cfg.pool_spec.empty() ? preset_pool_spec(cfg.pool_preset)
                                      : parse_pool_spec(cfg.pool_spec);
    return build_pool(spec, mix_seed({cfg.seed, stream_id("poolbuild")}));
}

}  // namespace vppo
