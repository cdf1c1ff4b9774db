#pragma once

// Test-only finite-difference oracle, independent of the reverse-mode path it
// checks. Central differences with h = 1e-5 against a scalar-valued functional
// of one leaf tensor.

#include <cmath>
#include <functional>
#include <vector>

#include "vppo/tensor.hpp"

namespace fd {

struct Result {
    double max_rel_err = 0.0;
    size_t worst_index = 0;
    double ad = 0.0, numeric = 0.0;
};

inline double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

// f must rebuild its graph from the leaf on every call.
inline Result check_grad(const std::function<vppo::Tensor()>& f, vppo::Tensor leaf,
                         double h = 1e-5) {
    leaf.zero_grad();  // may carry accumulation from an earlier check
    vppo::Tensor loss = f();
    vppo::backward(loss);
    std::vector<double> ad(leaf.grad().begin(), leaf.grad().end());
    leaf.zero_grad();

    Result r;
    vppo::NoGradGuard ng;
    for (size_t i = 0; i < leaf.numel(); ++i) {
        double keep = leaf.data()[i];
        leaf.data()[i] = keep + h;
        double up = f().item();
        leaf.data()[i] = keep - h;
        double down = f().item();
        leaf.data()[i] = keep;
        double numeric = (up - down) / (2.0 * h);
        double e = rel_err(ad[i], numeric);
        if (e > r.max_rel_err) {
            r.max_rel_err = e;
            r.worst_index = i;
            r.ad = ad[i];
            r.numeric = numeric;
        }
    }
    return r;
}

}  // namespace fd
