#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vppo/kernels.hpp"
#include "vppo/rng.hpp"
#include "vppo/tensor.hpp"

namespace vppo {

// Decoder-only transformer used for both the policy and the critic. The two
// networks share the architecture but never the storage; the critic swaps the
// vocab projection for a bias-free scalar value head.

struct Arch {
    int vocab = 42;
    int d_model = 48;
    int n_layers = 2;
    int n_heads = 2;
    int max_len = 192;

    void validate() const {
        if (vocab <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || max_len <= 0)
            throw std::invalid_argument("arch: all dimensions must be positive");
        if (d_model % n_heads != 0)
            throw std::invalid_argument("arch: d_model must divide evenly into heads");
    }
    int head_dim() const { return d_model / n_heads; }
    int mlp_dim() const { return 4 * d_model; }

    bool operator==(const Arch&) const = default;
};

struct Block {
    Tensor ln1_g, ln1_b, wq, wk, wv, wo;
    Tensor ln2_g, ln2_b, w1, w2;
};

struct Backbone {
    Arch arch;
    Tensor tok_emb;  // [vocab x d]
    Tensor pos_emb;  // [max_len x d]
    std::vector<Block> blocks;
    Tensor lnf_g, lnf_b;
};

struct PolicyNet {
    Backbone bb;
    Tensor w_out;  // [d x vocab]
};

struct CriticNet {
    Backbone bb;
    Tensor w_value;  // [d x 1], no bias
};

inline void fill_normal(Tensor& t, Rng& rng, double stddev) {
    for (double& v : t.values()) v = rng.normal() * stddev;
}

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (double& v : t.values()) v = rng.uniform(lo, hi);
}

namespace detail {

constexpr double kBackboneInitStd = 0.02;

inline Backbone init_backbone(const Arch& arch, Rng& rng) {
    Backbone bb;
    bb.arch = arch;
    int d = arch.d_model;
    auto normal = [&](std::vector<int> shape) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        fill_normal(t, rng, kBackboneInitStd);
        return t;
    };
    bb.tok_emb = normal({arch.vocab, d});
    bb.pos_emb = normal({arch.max_len, d});
    for (int l = 0; l < arch.n_layers; ++l) {
        Block blk;
        blk.ln1_g = Tensor::full({d}, 1.0, true);
        blk.ln1_b = Tensor::zeros({d}, true);
        blk.wq = normal({d, d});
        blk.wk = normal({d, d});
        blk.wv = normal({d, d});
        blk.wo = normal({d, d});
        blk.ln2_g = Tensor::full({d}, 1.0, true);
        blk.ln2_b = Tensor::zeros({d}, true);
        blk.w1 = normal({d, arch.mlp_dim()});
        blk.w2 = normal({arch.mlp_dim(), d});
        bb.blocks.push_back(std::move(blk));
    }
    bb.lnf_g = Tensor::full({d}, 1.0, true);
    bb.lnf_b = Tensor::zeros({d}, true);
    return bb;
}

}  // namespace detail

// Deterministic given seed. The critic value head is drawn uniform on
// [-sqrt(5), sqrt(5)]; everything else is N(0, 0.02) with unit layernorm gains.
inline std::pair<PolicyNet, CriticNet> init_models(uint64_t seed, const Arch& arch) {
    arch.validate();
    Rng rng(mix_seed({seed, stream_id("init")}));
    PolicyNet policy;
    policy.bb = detail::init_backbone(arch, rng);
    policy.w_out = Tensor::zeros({arch.d_model, arch.vocab}, true);
    fill_normal(policy.w_out, rng, detail::kBackboneInitStd);

    CriticNet critic;
    critic.bb = detail::init_backbone(arch, rng);
    critic.w_value = Tensor::zeros({arch.d_model, 1}, true);
    const double bound = std::sqrt(5.0);
    fill_uniform(critic.w_value, rng, -bound, bound);
    return {std::move(policy), std::move(critic)};
}

inline void collect_params(const Backbone& bb, const std::string& prefix,
                           std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + "tok_emb", bb.tok_emb);
    out.emplace_back(prefix + "pos_emb", bb.pos_emb);
    for (size_t l = 0; l < bb.blocks.size(); ++l) {
        const Block& b = bb.blocks[l];
        std::string p = prefix + "b" + std::to_string(l) + ".";
        out.emplace_back(p + "ln1_g", b.ln1_g);
        out.emplace_back(p + "ln1_b", b.ln1_b);
        out.emplace_back(p + "wq", b.wq);
        out.emplace_back(p + "wk", b.wk);
        out.emplace_back(p + "wv", b.wv);
        out.emplace_back(p + "wo", b.wo);
        out.emplace_back(p + "ln2_g", b.ln2_g);
        out.emplace_back(p + "ln2_b", b.ln2_b);
        out.emplace_back(p + "w1", b.w1);
        out.emplace_back(p + "w2", b.w2);
    }
    out.emplace_back(prefix + "lnf_g", bb.lnf_g);
    out.emplace_back(prefix + "lnf_b", bb.lnf_b);
}

inline std::vector<std::pair<std::string, Tensor>> named_params(const PolicyNet& net) {
    std::vector<std::pair<std::string, Tensor>> out;
    collect_params(net.bb, "", out);
    out.emplace_back("w_out", net.w_out);
    return out;
}

inline std::vector<std::pair<std::string, Tensor>> named_params(const CriticNet& net) {
    std::vector<std::pair<std::string, Tensor>> out;
    collect_params(net.bb, "", out);
    out.emplace_back("w_value", net.w_value);
    return out;
}

inline std::vector<Tensor> param_list(const std::vector<std::pair<std::string, Tensor>>& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

inline Tensor clone_param(const Tensor& t) {
    return Tensor::from_data(t.shape(), {t.values().begin(), t.values().end()}, true);
}

inline Backbone clone_backbone(const Backbone& bb) {
    Backbone out;
    out.arch = bb.arch;
    out.tok_emb = clone_param(bb.tok_emb);
    out.pos_emb = clone_param(bb.pos_emb);
    for (const Block& b : bb.blocks) {
        Block nb;
        nb.ln1_g = clone_param(b.ln1_g);
        nb.ln1_b = clone_param(b.ln1_b);
        nb.wq = clone_param(b.wq);
        nb.wk = clone_param(b.wk);
        nb.wv = clone_param(b.wv);
        nb.wo = clone_param(b.wo);
        nb.ln2_g = clone_param(b.ln2_g);
        nb.ln2_b = clone_param(b.ln2_b);
        nb.w1 = clone_param(b.w1);
        nb.w2 = clone_param(b.w2);
        out.blocks.push_back(std::move(nb));
    }
    out.lnf_g = clone_param(bb.lnf_g);
    out.lnf_b = clone_param(bb.lnf_b);
    return out;
}

inline PolicyNet clone_net(const PolicyNet& net) {
    PolicyNet out;
    out.bb = clone_backbone(net.bb);
    out.w_out = clone_param(net.w_out);
    return out;
}

inline CriticNet clone_net(const CriticNet& net) {
    CriticNet out;
    out.bb = clone_backbone(net.bb);
    out.w_value = clone_param(net.w_value);
    return out;
}

inline void check_tokens(const Arch& arch, const std::vector<int>& tokens) {
    if (tokens.empty()) throw std::invalid_argument("model: empty token sequence");
    if (static_cast<int>(tokens.size()) > arch.max_len)
        throw std::invalid_argument("model: sequence length " + std::to_string(tokens.size()) +
                                    " exceeds max_len " + std::to_string(arch.max_len));
    for (int t : tokens)
        if (t < 0 || t >= arch.vocab)
            throw std::invalid_argument("model: token id " + std::to_string(t) +
                                        " outside vocab of " + std::to_string(arch.vocab));
}

// Full-sequence forward; records the graph when grad mode is on.
inline Tensor forward_hidden(const Backbone& bb, const std::vector<int>& tokens) {
    check_tokens(bb.arch, tokens);
    int n = static_cast<int>(tokens.size());
    int hd = bb.arch.head_dim();
    std::vector<int> positions(static_cast<size_t>(n));
    std::iota(positions.begin(), positions.end(), 0);

    Tensor x = add(embedding(bb.tok_emb, tokens), embedding(bb.pos_emb, positions));
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    for (const Block& blk : bb.blocks) {
        Tensor h = layernorm(x, blk.ln1_g, blk.ln1_b);
        Tensor q = matmul(h, blk.wq);
        Tensor k = matmul(h, blk.wk);
        Tensor v = matmul(h, blk.wv);
        std::vector<Tensor> heads;
        for (int hh = 0; hh < bb.arch.n_heads; ++hh) {
            int c0 = hh * hd, c1 = (hh + 1) * hd;
            Tensor qh = slice_cols(q, c0, c1);
            Tensor kh = slice_cols(k, c0, c1);
            Tensor vh = slice_cols(v, c0, c1);
            Tensor att = causal_softmax(scale(matmul_nt(qh, kh), inv_sqrt_hd));
            heads.push_back(matmul(att, vh));
        }
        x = add(x, matmul(concat_cols(heads), blk.wo));
        Tensor h2 = layernorm(x, blk.ln2_g, blk.ln2_b);
        x = add(x, matmul(gelu(matmul(h2, blk.w1)), blk.w2));
    }
    return layernorm(x, bb.lnf_g, bb.lnf_b);
}

// Causal logits, [seq x vocab]; log-softmax of row t is log pi(.|prefix..t).
inline Tensor policy_logits(const PolicyNet& net, const std::vector<int>& tokens) {
    return matmul(forward_hidden(net.bb, tokens), net.w_out);
}

// One value per position t, estimating the state made of tokens[0..t].
inline Tensor critic_values(const CriticNet& net, const std::vector<int>& tokens) {
    Tensor v = matmul(forward_hidden(net.bb, tokens), net.w_value);
    return reshape(v, {static_cast<int>(tokens.size())});
}

// ---------------------------------------------------------------------------
// Incremental no-graph decoder. Feeds one token at a time against cached K/V
// and reproduces the full forward bitwise (same kernels, same accumulation
// order), which the test suite asserts.

class BackboneSession {
public:
    explicit BackboneSession(const Backbone& bb)
        : bb_(&bb), kcache_(bb.blocks.size()), vcache_(bb.blocks.size()) {
        int d = bb.arch.d_model;
        for (size_t l = 0; l < bb.blocks.size(); ++l) {
            kcache_[l].reserve(static_cast<size_t>(bb.arch.max_len) * d);
            vcache_[l].reserve(static_cast<size_t>(bb.arch.max_len) * d);
        }
        x_.resize(static_cast<size_t>(d));
        h_.resize(static_cast<size_t>(d));
        row_.resize(static_cast<size_t>(d));
        mlp_.resize(static_cast<size_t>(bb.arch.mlp_dim()));
        att_.reserve(static_cast<size_t>(bb.arch.max_len));
    }

    int position() const { return pos_; }

    // hidden state of the new position (valid until the next step call)
    const std::vector<double>& step(int token) {
        const Arch& arch = bb_->arch;
        if (token < 0 || token >= arch.vocab)
            throw std::invalid_argument("session: token id out of range");
        if (pos_ >= arch.max_len)
            throw std::invalid_argument("session: exceeded max_len");
        int d = arch.d_model;
        int hd = arch.head_dim();
        const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

        const double* te = bb_->tok_emb.data() + static_cast<size_t>(token) * d;
        const double* pe = bb_->pos_emb.data() + static_cast<size_t>(pos_) * d;
        for (int j = 0; j < d; ++j) x_[static_cast<size_t>(j)] = te[j] + pe[j];

        for (size_t l = 0; l < bb_->blocks.size(); ++l) {
            const Block& blk = bb_->blocks[l];
            kern::layernorm_row(h_.data(), x_.data(), blk.ln1_g.data(), blk.ln1_b.data(), d);

            auto& kc = kcache_[l];
            auto& vc = vcache_[l];
            size_t base = static_cast<size_t>(pos_) * d;
            kc.resize(base + static_cast<size_t>(d), 0.0);
            vc.resize(base + static_cast<size_t>(d), 0.0);
            q_.assign(static_cast<size_t>(d), 0.0);
            kern::matmul_acc(q_.data(), h_.data(), blk.wq.data(), 1, d, d);
            kern::matmul_acc(kc.data() + base, h_.data(), blk.wk.data(), 1, d, d);
            kern::matmul_acc(vc.data() + base, h_.data(), blk.wv.data(), 1, d, d);

            // attention over the cache, one head at a time
            int t = pos_ + 1;
            for (int hh = 0; hh < arch.n_heads; ++hh) {
                int off = hh * hd;
                att_.resize(static_cast<size_t>(t));
                for (int j = 0; j < t; ++j)
                    att_[static_cast<size_t>(j)] =
                        kern::dot(q_.data() + off, kc.data() + static_cast<size_t>(j) * d + off, hd) *
                        inv_sqrt_hd;
                kern::softmax_row(att_.data(), att_.data(), t);
                double* ctx = row_.data() + off;
                for (int j = 0; j < hd; ++j) ctx[j] = 0.0;
                for (int j = 0; j < t; ++j) {
                    double a = att_[static_cast<size_t>(j)];
                    const double* vrow = vc.data() + static_cast<size_t>(j) * d + off;
                    for (int c = 0; c < hd; ++c) ctx[c] += a * vrow[c];
                }
            }
            h_.assign(static_cast<size_t>(d), 0.0);
            kern::matmul_acc(h_.data(), row_.data(), blk.wo.data(), 1, d, d);
            for (int j = 0; j < d; ++j) x_[static_cast<size_t>(j)] += h_[static_cast<size_t>(j)];

            kern::layernorm_row(h_.data(), x_.data(), blk.ln2_g.data(), blk.ln2_b.data(), d);
            mlp_.assign(static_cast<size_t>(arch.mlp_dim()), 0.0);
            kern::matmul_acc(mlp_.data(), h_.data(), blk.w1.data(), 1, d, arch.mlp_dim());
            for (double& m : mlp_) m = kern::gelu(m);
            h_.assign(static_cast<size_t>(d), 0.0);
            kern::matmul_acc(h_.data(), mlp_.data(), blk.w2.data(), 1, arch.mlp_dim(), d);
            for (int j = 0; j < d; ++j) x_[static_cast<size_t>(j)] += h_[static_cast<size_t>(j)];
        }
        kern::layernorm_row(h_.data(), x_.data(), bb_->lnf_g.data(), bb_->lnf_b.data(), d);
        ++pos_;
        return h_;
    }

private:
    const Backbone* bb_;
    std::vector<std::vector<double>> kcache_, vcache_;
    std::vector<double> x_, h_, q_, row_, mlp_, att_;
    int pos_ = 0;
};

class PolicySession {
public:
    explicit PolicySession(const PolicyNet& net)
        : net_(&net), bb_(net.bb), logits_(static_cast<size_t>(net.bb.arch.vocab)) {}

    int position() const { return bb_.position(); }

    const std::vector<double>& step(int token) {
        const std::vector<double>& h = bb_.step(token);
        std::fill(logits_.begin(), logits_.end(), 0.0);
        kern::matmul_acc(logits_.data(), h.data(), net_->w_out.data(), 1,
                         net_->bb.arch.d_model, net_->bb.arch.vocab);
        return logits_;
    }

    void prefill(const std::vector<int>& tokens) {
        for (int t : tokens) step(t);
    }

private:
    const PolicyNet* net_;
    BackboneSession bb_;
    std::vector<double> logits_;
};

class CriticSession {
public:
    explicit CriticSession(const CriticNet& net) : net_(&net), bb_(net.bb) {}

    int position() const { return bb_.position(); }

    double step(int token) {
        const std::vector<double>& h = bb_.step(token);
        return kern::dot(h.data(), net_->w_value.data(), net_->bb.arch.d_model);
    }

private:
    const CriticNet* net_;
    BackboneSession bb_;
};

}  // namespace vppo
