#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "vppo/kernels.hpp"
#include "vppo/model.hpp"
#include "vppo/rng.hpp"
#include "vppo/tokenizer.hpp"

namespace vppo {

struct SamplerConfig {
    double temperature = 1.0;
    double top_p = 1.0;
    int max_new_tokens = 128;
    uint64_t seed = 0;

    void validate() const {
        if (!(temperature > 0.0)) throw std::invalid_argument("sampler: temperature must be > 0");
        if (!(top_p > 0.0) || top_p > 1.0)
            throw std::invalid_argument("sampler: top_p must be in (0, 1]");
        if (max_new_tokens <= 0)
            throw std::invalid_argument("sampler: max_new_tokens must be positive");
    }
};

// Nucleus draw from raw logits. With top_p = 1 this is exact categorical
// sampling from softmax(logits / temperature); a vanishing top_p degenerates
// to argmax. Ties in the sort break by token id for determinism.
inline int draw_from_logits(const std::vector<double>& logits, double temperature,
                            double top_p, Rng& rng) {
    int n = static_cast<int>(logits.size());
    std::vector<double> probs(logits.size());
    if (temperature == 1.0) {
        kern::softmax_row(probs.data(), logits.data(), n);
    } else {
        std::vector<double> scaled(logits.size());
        for (int i = 0; i < n; ++i) scaled[static_cast<size_t>(i)] = logits[static_cast<size_t>(i)] / temperature;
        kern::softmax_row(probs.data(), scaled.data(), n);
    }
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[static_cast<size_t>(a)] != probs[static_cast<size_t>(b)])
            return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)];
        return a < b;
    });
    // keep the smallest prefix whose mass reaches top_p
    double mass = 0.0;
    int keep = 0;
    for (int i = 0; i < n; ++i) {
        mass += probs[static_cast<size_t>(order[static_cast<size_t>(i)])];
        keep = i + 1;
        if (mass >= top_p) break;
    }
    double u = rng.uniform() * mass;
    double acc = 0.0;
    for (int i = 0; i < keep; ++i) {
        acc += probs[static_cast<size_t>(order[static_cast<size_t>(i)])];
        if (u < acc) return order[static_cast<size_t>(i)];
    }
    return order[static_cast<size_t>(keep - 1)];
}

struct SampleResult {
    std::vector<int> gen_tokens;
    std::vector<double> logprobs;  // log pi(a_t | s_t) at temperature 1
    bool truncated = false;        // hit max_new_tokens without closing the answer
};

// Continues generation from a session already fed the prompt; first_logits is
// the logits row of the last prompt token. Stops at EOS or at the token that
// closes the answer tag, else truncates at max_new_tokens.
inline SampleResult sample_continue(PolicySession& session, std::vector<double> first_logits,
                                    const SamplerConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SampleResult out;
    std::vector<double> logprob_row(first_logits.size());
    const std::vector<double>* logits = &first_logits;
    for (int step = 0; step < cfg.max_new_tokens; ++step) {
        int tok = draw_from_logits(*logits, cfg.temperature, cfg.top_p, rng);
        kern::log_softmax_row(logprob_row.data(), logits->data(),
                              static_cast<int>(logits->size()));
        out.gen_tokens.push_back(tok);
        out.logprobs.push_back(logprob_row[static_cast<size_t>(tok)]);
        if (tok == Tokenizer::kEos || tok == Tokenizer::kAnswerClose) return out;
        if (step + 1 == cfg.max_new_tokens) break;
        logits = &session.step(tok);
    }
    out.truncated = true;
    return out;
}

inline SampleResult sample_response(const PolicyNet& net, const std::vector<int>& prompt,
                                    const SamplerConfig& cfg) {
    cfg.validate();
    if (prompt.empty()) throw std::invalid_argument("sampler: empty prompt");
    if (static_cast<int>(prompt.size()) + cfg.max_new_tokens > net.bb.arch.max_len)
        throw std::invalid_argument("sampler: prompt + max_new_tokens exceeds max_len");
    PolicySession session(net);
    std::vector<double> logits;
    for (int t : prompt) logits = session.step(t);
    return sample_continue(session, std::move(logits), cfg);
}

}  // namespace vppo
