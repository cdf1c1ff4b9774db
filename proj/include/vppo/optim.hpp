#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vppo/tensor.hpp"

namespace vppo {

enum class LrDecay { constant, linear };

// Linear warm-up to base_lr over warmup_steps, then constant, or linearly
// decayed to final_lr by total_steps when decay==linear. Step 0 returns
// base_lr * 1/warmup_steps so the very first update is not a no-op.
inline double lr_schedule(int64_t step, double base_lr, int64_t warmup_steps,
                          LrDecay decay = LrDecay::constant, int64_t total_steps = 0,
                          double final_lr = 0.0) {
    if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
    if (warmup_steps > 0 && step < warmup_steps)
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (decay == LrDecay::linear && total_steps > warmup_steps) {
        double span = static_cast<double>(total_steps - warmup_steps);
        double done = static_cast<double>(step - warmup_steps);
        if (done >= span) return final_lr;
        return base_lr + (final_lr - base_lr) * (done / span);
    }
    return base_lr;
}

// AdamW with weight decay fixed at zero, which reduces to bias-corrected Adam.
// One state owns the moment buffers for a fixed parameter list; grads are left
// untouched by step() (the caller zeroes them).
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.95;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // fixed; asserted in step()
    double learning_rate = 0.0;
    int64_t step_count = 0;

    AdamW() = default;
    AdamW(double b1, double b2, double lr) : beta1(b1), beta2(b2), learning_rate(lr) {}

    void bind(std::vector<Tensor> params) {
        params_ = std::move(params);
        first_moment_.clear();
        second_moment_.clear();
        for (const Tensor& p : params_) {
            first_moment_.emplace_back(p.numel(), 0.0);
            second_moment_.emplace_back(p.numel(), 0.0);
        }
        step_count = 0;
    }

    const std::vector<Tensor>& params() const { return params_; }
    std::vector<std::vector<double>>& first_moment() { return first_moment_; }
    std::vector<std::vector<double>>& second_moment() { return second_moment_; }
    const std::vector<std::vector<double>>& first_moment() const { return first_moment_; }
    const std::vector<std::vector<double>>& second_moment() const { return second_moment_; }

    void step() {
        if (weight_decay != 0.0)
            throw std::logic_error("AdamW: weight_decay must stay 0");
        for (const Tensor& p : params_)
            if (!p.has_grad())
                throw std::runtime_error("AdamW: parameter has no gradient");
        ++step_count;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (size_t t = 0; t < params_.size(); ++t) {
            Tensor& p = params_[t];
            auto g = p.grad();
            auto& m = first_moment_[t];
            auto& v = second_moment_[t];
            double* w = p.data();
            for (size_t i = 0; i < m.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                w[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
            }
        }
    }

    void zero_grad() {
        for (Tensor& p : params_) p.zero_grad();
    }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
};

}  // namespace vppo
