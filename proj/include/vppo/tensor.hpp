#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "vppo/kernels.hpp"

namespace vppo {

// Dense f64 tensor with reverse-mode autodiff. Tensors are cheap handles onto
// shared nodes; the graph records parents + a backward closure per op. After
// backward() runs, the walked graph is freed; leaf gradients accumulate until
// zero_grad().
//
// Single-threaded graph construction/backward only. Read-only inference over
// distinct graphs may run concurrently.

namespace detail {

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first use
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward_fn;

    size_t numel() const { return values.size(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
    }
};

inline thread_local bool t_grad_enabled = true;

}  // namespace detail

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::t_grad_enabled) { detail::t_grad_enabled = false; }
    ~NoGradGuard() { detail::t_grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::t_grad_enabled; }

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

[[noreturn]] inline void op_error(const char* op, const std::string& msg) {
    throw std::invalid_argument(std::string(op) + ": " + msg);
}

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return make_leaf(std::move(shape), 0.0, requires_grad);
    }

    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false) {
        return make_leaf(std::move(shape), v, requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return make_leaf({}, v, requires_grad);
    }

    static Tensor from_data(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false) {
        size_t n = count(shape);
        if (values.size() != n)
            op_error("from_data", "shape " + shape_str(shape) + " wants " +
                                      std::to_string(n) + " values, got " +
                                      std::to_string(values.size()));
        auto node = std::make_shared<detail::TensorNode>();
        node->shape = std::move(shape);
        node->values = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    size_t numel() const { return node_->numel(); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }

    std::span<double> values() { return node_->values; }
    std::span<const double> values() const { return node_->values; }
    double* data() { return node_->values.data(); }
    const double* data() const { return node_->values.data(); }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<double> grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<const double> grad_view() const {
        if (node_->grad.empty()) op_error("grad", "no gradient populated");
        return node_->grad;
    }

    void zero_grad() { node_->grad.clear(); }

    double item() const {
        if (numel() != 1) op_error("item", "tensor has " + std::to_string(numel()) + " values");
        return node_->values[0];
    }

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& handle() const { return node_; }

    static size_t count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) op_error("shape", "negative dimension in " + shape_str(shape));
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

private:
    static Tensor make_leaf(std::vector<int> shape, double fill, bool requires_grad) {
        auto node = std::make_shared<detail::TensorNode>();
        node->values.assign(count(shape), fill);
        node->shape = std::move(shape);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

inline void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x))
            throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

// Builds an op result node. The backward closure is installed only when some
// parent requires grad and grad mode is on.
inline Tensor make_op(const char* op, std::vector<int> shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward) {
    check_finite(op, values);
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->op = op;
    node->is_leaf = false;
    bool track = t_grad_enabled;
    if (track) {
        track = false;
        for (const Tensor& p : parents)
            if (p.requires_grad()) { track = true; break; }
    }
    if (track) {
        node->requires_grad = true;
        for (const Tensor& p : parents) node->parents.push_back(p.handle());
        TensorNode* raw = node.get();
        node->backward_fn = [raw, backward = std::move(backward)]() { backward(*raw); };
    }
    return Tensor(std::move(node));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ops

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        op_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return detail::make_op("add", a.shape(), std::move(out), {a, b},
        [](detail::TensorNode& n) {
            for (int s = 0; s < 2; ++s) {
                auto& p = n.parents[static_cast<size_t>(s)];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
            }
        });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return detail::make_op("sub", a.shape(), std::move(out), {a, b},
        [](detail::TensorNode& n) {
            auto& pa = n.parents[0];
            auto& pb = n.parents[1];
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
            }
        });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return detail::make_op("mul", a.shape(), std::move(out), {a, b},
        [](detail::TensorNode& n) {
            auto& pa = n.parents[0];
            auto& pb = n.parents[1];
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i)
                    pa->grad[i] += n.grad[i] * pb->values[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i)
                    pb->grad[i] += n.grad[i] * pa->values[i];
            }
        });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    return detail::make_op("scale", a.shape(), std::move(out), {a},
        [c](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * c;
        });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    return detail::make_op("add_scalar", a.shape(), std::move(out), {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor exp(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    return detail::make_op("exp", a.shape(), std::move(out), {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                p->grad[i] += n.grad[i] * n.values[i];
        });
}

inline Tensor log(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        if (a.data()[i] <= 0.0) op_error("log", "non-positive input");
        out[i] = std::log(a.data()[i]);
    }
    return detail::make_op("log", a.shape(), std::move(out), {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                p->grad[i] += n.grad[i] / p->values[i];
        });
}

inline Tensor square(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
    return detail::make_op("square", a.shape(), std::move(out), {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                p->grad[i] += n.grad[i] * 2.0 * p->values[i];
        });
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
    return detail::make_op("tanh", a.shape(), std::move(out), {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                p->grad[i] += n.grad[i] * (1.0 - n.values[i] * n.values[i]);
        });
}

inline Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = kern::gelu(a.data()[i]);
    return detail::make_op("gelu", a.shape(), std::move(out), {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                p->grad[i] += n.grad[i] * kern::gelu_grad(p->values[i]);
        });
}

// gradient passes only strictly inside (lo, hi)
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) op_error("clamp", "lo > hi");
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.data()[i], lo, hi);
    return detail::make_op("clamp", a.shape(), std::move(out), {a},
        [lo, hi](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i)
                if (p->values[i] > lo && p->values[i] < hi) p->grad[i] += n.grad[i];
        });
}

// elementwise min; ties route the gradient to the first argument
inline Tensor minimum(const Tensor& a, const Tensor& b) {
    require_same_shape("minimum", a, b);
    std::vector<double> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], b.data()[i]);
    return detail::make_op("minimum", a.shape(), std::move(out), {a, b},
        [](detail::TensorNode& n) {
            auto& pa = n.parents[0];
            auto& pb = n.parents[1];
            if (pa->requires_grad) pa->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                if (pa->values[i] <= pb->values[i]) {
                    if (pa->requires_grad) pa->grad[i] += n.grad[i];
                } else if (pb->requires_grad) {
                    pb->grad[i] += n.grad[i];
                }
            }
        });
}

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    return detail::make_op("sum", {}, {s}, {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += n.grad[0];
        });
}

inline Tensor mean_all(const Tensor& a) {
    if (a.numel() == 0) op_error("mean", "empty tensor");
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    s /= static_cast<double>(a.numel());
    return detail::make_op("mean", {}, {s}, {a},
        [](detail::TensorNode& n) {
            auto& p = n.parents[0];
            p->ensure_grad();
            double inv = 1.0 / static_cast<double>(p->values.size());
            for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += n.grad[0] * inv;
        });
}

inline void require_matrix(const char* op, const Tensor& a) {
    if (a.rank() != 2) op_error(op, "expected rank-2 tensor, got " + shape_str(a.shape()));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    if (a.dim(1) != b.dim(0))
        op_error("matmul", "shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    kern::matmul_acc(out.data(), a.data(), b.data(), m, k, n);
    return detail::make_op("matmul", {m, n}, std::move(out), {a, b},
        [m, k, n](detail::TensorNode& node) {
            auto& pa = node.parents[0];
            auto& pb = node.parents[1];
            const double* g = node.grad.data();
            if (pa->requires_grad) {
                pa->ensure_grad();
                // dA[i,p] += sum_j g[i,j] * B[p,j]
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p)
                        pa->grad[static_cast<size_t>(i) * k + p] +=
                            kern::dot(g + static_cast<size_t>(i) * n,
                                      pb->values.data() + static_cast<size_t>(p) * n, n);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                // dB[p,j] += sum_i A[i,p] * g[i,j]; p-major so each thread owns
                // whole rows of dB
                for (int p = 0; p < k; ++p) {
                    double* bp = pb->grad.data() + static_cast<size_t>(p) * n;
                    for (int i = 0; i < m; ++i) {
                        const double* gi = g + static_cast<size_t>(i) * n;
                        double av = pa->values[static_cast<size_t>(i) * k + p];
                        for (int j = 0; j < n; ++j) bp[j] += av * gi[j];
                    }
                }
            }
        });
}

// A[M x K] * B^T with B[N x K]
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix("matmul_nt", a);
    require_matrix("matmul_nt", b);
    if (a.dim(1) != b.dim(1))
        op_error("matmul_nt", "shape mismatch " + shape_str(a.shape()) + " x " +
                                  shape_str(b.shape()) + "^T");
    int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<double> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] =
                kern::dot(a.data() + static_cast<size_t>(i) * k,
                          b.data() + static_cast<size_t>(j) * k, k);
    return detail::make_op("matmul_nt", {m, n}, std::move(out), {a, b},
        [m, k, n](detail::TensorNode& node) {
            auto& pa = node.parents[0];
            auto& pb = node.parents[1];
            const double* g = node.grad.data();
            if (pa->requires_grad) {
                pa->ensure_grad();
                // dA = G * B
                kern::matmul_acc(pa->grad.data(), g, pb->values.data(), m, n, k);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                // dB[j,p] += sum_i g[i,j] * A[i,p]; j-major for thread-owned rows
                for (int j = 0; j < n; ++j) {
                    double* bj = pb->grad.data() + static_cast<size_t>(j) * k;
                    for (int i = 0; i < m; ++i) {
                        double gv = g[static_cast<size_t>(i) * n + j];
                        const double* ai = pa->values.data() + static_cast<size_t>(i) * k;
                        for (int p = 0; p < k; ++p) bj[p] += gv * ai[p];
                    }
                }
            }
        });
}

inline Tensor softmax(const Tensor& a) {
    require_matrix("softmax", a);
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.numel());
    for (int i = 0; i < m; ++i)
        kern::softmax_row(out.data() + static_cast<size_t>(i) * n,
                          a.data() + static_cast<size_t>(i) * n, n);
    return detail::make_op("softmax", a.shape(), std::move(out), {a},
        [m, n](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* y = node.values.data() + static_cast<size_t>(i) * n;
                const double* gy = node.grad.data() + static_cast<size_t>(i) * n;
                double inner = kern::dot(gy, y, n);
                double* gx = p->grad.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - inner);
            }
        });
}

// softmax over j <= i for a square score matrix; entries above the diagonal
// become exactly 0 so downstream matmuls stay causal.
inline Tensor causal_softmax(const Tensor& a) {
    require_matrix("causal_softmax", a);
    if (a.dim(0) != a.dim(1))
        op_error("causal_softmax", "expected square matrix, got " + shape_str(a.shape()));
    int n = a.dim(0);
    std::vector<double> out(a.numel(), 0.0);
    for (int i = 0; i < n; ++i)
        kern::softmax_row(out.data() + static_cast<size_t>(i) * n,
                          a.data() + static_cast<size_t>(i) * n, i + 1);
    return detail::make_op("causal_softmax", a.shape(), std::move(out), {a},
        [n](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const double* y = node.values.data() + static_cast<size_t>(i) * n;
                const double* gy = node.grad.data() + static_cast<size_t>(i) * n;
                double inner = kern::dot(gy, y, i + 1);
                double* gx = p->grad.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j <= i; ++j) gx[j] += y[j] * (gy[j] - inner);
            }
        });
}

inline Tensor log_softmax(const Tensor& a) {
    require_matrix("log_softmax", a);
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.numel());
    for (int i = 0; i < m; ++i)
        kern::log_softmax_row(out.data() + static_cast<size_t>(i) * n,
                              a.data() + static_cast<size_t>(i) * n, n);
    return detail::make_op("log_softmax", a.shape(), std::move(out), {a},
        [m, n](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* ls = node.values.data() + static_cast<size_t>(i) * n;
                const double* gy = node.grad.data() + static_cast<size_t>(i) * n;
                double gsum = 0.0;
                for (int j = 0; j < n; ++j) gsum += gy[j];
                double* gx = p->grad.data() + static_cast<size_t>(i) * n;
                for (int j = 0; j < n; ++j) gx[j] += gy[j] - std::exp(ls[j]) * gsum;
            }
        });
}

// row-wise layer norm with learned gain/offset vectors
inline Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& offset) {
    require_matrix("layernorm", x);
    int m = x.dim(0), n = x.dim(1);
    if (gain.rank() != 1 || gain.dim(0) != n || offset.rank() != 1 || offset.dim(0) != n)
        op_error("layernorm", "gain/offset must be [" + std::to_string(n) + "], got " +
                                  shape_str(gain.shape()) + " and " + shape_str(offset.shape()));
    std::vector<double> out(x.numel());
    for (int i = 0; i < m; ++i)
        kern::layernorm_row(out.data() + static_cast<size_t>(i) * n,
                            x.data() + static_cast<size_t>(i) * n, gain.data(),
                            offset.data(), n);
    return detail::make_op("layernorm", x.shape(), std::move(out), {x, gain, offset},
        [m, n](detail::TensorNode& node) {
            auto& px = node.parents[0];
            auto& pg = node.parents[1];
            auto& pb = node.parents[2];
            if (px->requires_grad) px->ensure_grad();
            if (pg->requires_grad) pg->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            std::vector<double> xhat(static_cast<size_t>(n));
            for (int i = 0; i < m; ++i) {
                const double* xr = px->values.data() + static_cast<size_t>(i) * n;
                const double* gy = node.grad.data() + static_cast<size_t>(i) * n;
                double mean = 0.0;
                for (int j = 0; j < n; ++j) mean += xr[j];
                mean /= n;
                double var = 0.0;
                for (int j = 0; j < n; ++j) {
                    double d = xr[j] - mean;
                    var += d * d;
                }
                var /= n;
                double inv = 1.0 / std::sqrt(var + kern::kLayerNormEps);
                for (int j = 0; j < n; ++j) xhat[static_cast<size_t>(j)] = (xr[j] - mean) * inv;
                if (pg->requires_grad)
                    for (int j = 0; j < n; ++j)
                        pg->grad[static_cast<size_t>(j)] += gy[j] * xhat[static_cast<size_t>(j)];
                if (pb->requires_grad)
                    for (int j = 0; j < n; ++j) pb->grad[static_cast<size_t>(j)] += gy[j];
                if (px->requires_grad) {
                    // dxhat = gy * gain; dx via standard layernorm backward
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int j = 0; j < n; ++j) {
                        double dxh = gy[j] * pg->values[static_cast<size_t>(j)];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat[static_cast<size_t>(j)];
                    }
                    double* gx = px->grad.data() + static_cast<size_t>(i) * n;
                    for (int j = 0; j < n; ++j) {
                        double dxh = gy[j] * pg->values[static_cast<size_t>(j)];
                        gx[j] += inv * (dxh - sum_dxhat / n -
                                        xhat[static_cast<size_t>(j)] * sum_dxhat_xhat / n);
                    }
                }
            }
        });
}

// rows of `table` selected by ids -> [len(ids) x d]
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    require_matrix("embedding", table);
    int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            op_error("embedding", "index " + std::to_string(id) + " out of range [0," +
                                      std::to_string(v) + ")");
    int t = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<size_t>(t) * d);
    for (int i = 0; i < t; ++i)
        std::copy_n(table.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d, d,
                    out.data() + static_cast<size_t>(i) * d);
    return detail::make_op("embedding", {t, d}, std::move(out), {table},
        [ids, d](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i) {
                const double* g = node.grad.data() + i * static_cast<size_t>(d);
                double* dst = p->grad.data() + static_cast<size_t>(ids[i]) * d;
                for (int j = 0; j < d; ++j) dst[j] += g[j];
            }
        });
}

// picks a[t, ids[t]] -> rank-1 tensor of length T
inline Tensor take_per_row(const Tensor& a, const std::vector<int>& ids) {
    require_matrix("take_per_row", a);
    int m = a.dim(0), n = a.dim(1);
    if (static_cast<int>(ids.size()) != m)
        op_error("take_per_row", "need " + std::to_string(m) + " indices, got " +
                                     std::to_string(ids.size()));
    for (int id : ids)
        if (id < 0 || id >= n) op_error("take_per_row", "column index out of range");
    std::vector<double> out(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i)
        out[static_cast<size_t>(i)] = a.data()[static_cast<size_t>(i) * n + ids[static_cast<size_t>(i)]];
    return detail::make_op("take_per_row", {m}, std::move(out), {a},
        [ids, n](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i)
                p->grad[i * static_cast<size_t>(n) + static_cast<size_t>(ids[i])] += node.grad[i];
        });
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    require_matrix("slice_cols", a);
    int m = a.dim(0), n = a.dim(1);
    if (c0 < 0 || c1 > n || c0 >= c1)
        op_error("slice_cols", "bad column range [" + std::to_string(c0) + "," +
                                   std::to_string(c1) + ") for " + shape_str(a.shape()));
    int w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(m) * w);
    for (int i = 0; i < m; ++i)
        std::copy_n(a.data() + static_cast<size_t>(i) * n + c0, w,
                    out.data() + static_cast<size_t>(i) * w);
    return detail::make_op("slice_cols", {m, w}, std::move(out), {a},
        [c0, n, w, m](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* g = node.grad.data() + static_cast<size_t>(i) * w;
                double* dst = p->grad.data() + static_cast<size_t>(i) * n + c0;
                for (int j = 0; j < w; ++j) dst[j] += g[j];
            }
        });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) op_error("concat_cols", "no inputs");
    int m = parts[0].dim(0);
    int total = 0;
    for (const Tensor& p : parts) {
        require_matrix("concat_cols", p);
        if (p.dim(0) != m) op_error("concat_cols", "row count mismatch");
        total += p.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(m) * total);
    int off = 0;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
        int w = p.dim(1);
        widths.push_back(w);
        for (int i = 0; i < m; ++i)
            std::copy_n(p.data() + static_cast<size_t>(i) * w, w,
                        out.data() + static_cast<size_t>(i) * total + off);
        off += w;
    }
    return detail::make_op("concat_cols", {m, total}, std::move(out), parts,
        [widths, m, total](detail::TensorNode& node) {
            int off2 = 0;
            for (size_t s = 0; s < node.parents.size(); ++s) {
                auto& p = node.parents[s];
                int w = widths[s];
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int i = 0; i < m; ++i) {
                        const double* g = node.grad.data() + static_cast<size_t>(i) * total + off2;
                        double* dst = p->grad.data() + static_cast<size_t>(i) * w;
                        for (int j = 0; j < w; ++j) dst[j] += g[j];
                    }
                }
                off2 += w;
            }
        });
}

// contiguous sub-range of a rank-1 tensor
inline Tensor slice_vec(const Tensor& a, int i0, int i1) {
    if (a.rank() != 1) op_error("slice_vec", "expected rank-1 tensor, got " + shape_str(a.shape()));
    int n = a.dim(0);
    if (i0 < 0 || i1 > n || i0 >= i1)
        op_error("slice_vec", "bad range [" + std::to_string(i0) + "," + std::to_string(i1) +
                                  ") for " + shape_str(a.shape()));
    std::vector<double> out(a.data() + i0, a.data() + i1);
    return detail::make_op("slice_vec", {i1 - i0}, std::move(out), {a},
        [i0](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < node.grad.size(); ++i)
                p->grad[static_cast<size_t>(i0) + i] += node.grad[i];
        });
}

inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (Tensor::count(shape) != a.numel())
        op_error("reshape", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    std::vector<double> out(a.values().begin(), a.values().end());
    return detail::make_op("reshape", std::move(shape), std::move(out), {a},
        [](detail::TensorNode& node) {
            auto& p = node.parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < node.grad.size(); ++i) p->grad[i] += node.grad[i];
        });
}

// ---------------------------------------------------------------------------
// reverse pass

// Populates grad for every requires_grad leaf reachable from `loss`. The
// walked graph is released afterwards; leaf grads keep accumulating across
// calls until explicitly zeroed.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) op_error("backward", "loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
        op_error("backward", "loss does not require grad (no graph recorded)");
    if (!loss.is_leaf() && !loss.node()->backward_fn)
        op_error("backward", "graph already freed by a previous backward call");

    // topo holds owning handles: freeing parent links mid-walk must not
    // destroy nodes that still await their backward call
    std::vector<std::shared_ptr<detail::TensorNode>> topo;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<std::shared_ptr<detail::TensorNode>, size_t>> stack;
    stack.emplace_back(loss.handle(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            std::shared_ptr<detail::TensorNode> next = node->parents[idx];
            ++idx;
            if (next->requires_grad && seen.insert(next.get()).second)
                stack.emplace_back(std::move(next), 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        detail::TensorNode* node = it->get();
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn();
        }
        if (!node->is_leaf) {
            // free the graph as we go; leaves keep their accumulators
            node->backward_fn = nullptr;
            node->parents.clear();
            node->grad.clear();
            node->grad.shrink_to_fit();
        } else {
            detail::check_finite("backward", node->grad);
        }
    }
}

}  // namespace vppo
