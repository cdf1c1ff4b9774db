#pragma once

#include <cmath>
#include <cstddef>

namespace vppo::kern {

// Raw dense routines shared by the autodiff forward ops and the incremental
// decoder. Both paths must produce bitwise-identical values, so any routine
// used by both lives here and fixes one accumulation order.

// C[M x N] = A[M x K] * B[K x N], C must be zero-initialized.
inline void matmul_acc(double* c, const double* a, const double* b,
                       int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        const double* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            double av = ai[p];
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

inline double dot(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// softmax over x[0..n), writes probabilities to y (y may alias x)
inline void softmax_row(double* y, const double* x, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
    }
    double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) y[i] *= inv;
}

inline void log_softmax_row(double* y, const double* x, int n) {
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = x[i] > mx ? x[i] : mx;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(x[i] - mx);
    double lse = mx + std::log(sum);
    for (int i = 0; i < n; ++i) y[i] = x[i] - lse;
}

constexpr double kLayerNormEps = 1e-5;

inline void layernorm_row(double* y, const double* x, const double* gain,
                          const double* offset, int n) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += x[i];
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = x[i] - mean;
        var += d * d;
    }
    var /= n;
    double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int i = 0; i < n; ++i) y[i] = gain[i] * ((x[i] - mean) * inv) + offset[i];
}

// exact GELU, x * Phi(x) with the normal CDF
inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_grad(double x) {
    double phi = std::exp(-0.5 * x * x) * 0.3989422804014326779;  // pdf
    double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    return cdf + x * phi;
}

}  // namespace vppo::kern
