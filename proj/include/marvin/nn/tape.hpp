#pragma once

// Reverse-mode differentiation over a per-decision tape. Nodes are appended in
// evaluation order, so walking the tape backwards is a valid topological
// order. A tape is confined to one thread and discarded after backward().

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "marvin/nn/tensor.hpp"

namespace marvin::nn {

struct Var {
    std::size_t id = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t)>;

    Tape() { nodes_.reserve(256); }

    Var leaf(Tensor value, bool requires_grad = true) { return push(std::move(value), requires_grad, nullptr); }
    Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient accumulated at `v` by the last backward(); zeros if none.
    std::vector<double> grad(Var v) const {
        const auto& n = nodes_[v.id];
        if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
        return n.grad;
    }

    /// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
    void backward(Var root, double seed = 1.0) {
        if (nodes_[root.id].value.size() != 1)
            throw Error("backward needs a scalar root, got shape " + nodes_[root.id].value.shape_str());
        grad_ref(root.id)[0] += seed;
        for (std::size_t i = root.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.back && !n.grad.empty()) n.back(*this, i);
        }
    }

    // Op plumbing -----------------------------------------------------------

    Var push(Tensor value, bool requires_grad, Backward back) {
        nodes_.push_back({std::move(value), {}, requires_grad, requires_grad ? std::move(back) : nullptr});
        return Var{nodes_.size() - 1};
    }

    /// Grad buffer of node `id`, allocated on first touch.
    std::vector<double>& grad_ref(std::size_t id) {
        auto& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }

    const std::vector<double>& grad_of(std::size_t id) const { return nodes_[id].grad; }
    const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
    bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        Backward back;
    };
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Kernels (raw row-major buffers)

namespace kernel {

// C[n,m] += A[n,k] * B[k,m]
inline void gemm_nn(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        double* c = C + i * m;
        const double* a = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double ap = a[p];
            if (ap == 0.0) continue;
            const double* b = B + p * m;
            for (std::size_t j = 0; j < m; ++j) c[j] += ap * b[j];
        }
    }
}

// C[n,m] += A[n,k] * B[m,k]^T
inline void gemm_nt(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* a = A + i * k;
        double* c = C + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* b = B + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
            c[j] += s;
        }
    }
}

// C[k,m] += A[n,k]^T * B[n,m]
inline void gemm_tn(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double ap = a[p];
            if (ap == 0.0) continue;
            double* c = C + p * m;
            for (std::size_t j = 0; j < m; ++j) c[j] += ap * b[j];
        }
    }
}

}  // namespace kernel

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw Error(what);
}

inline std::string shapes(const char* op, const Tensor& a, const Tensor& b) {
    return std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str();
}

inline bool any_needs(Tape& t, std::initializer_list<Var> vs) {
    for (auto v : vs)
        if (t.needs(v.id)) return true;
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[n,k] x b[k,m]
inline Var matmul(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require(A.cols() == B.rows(), detail::shapes("matmul", A, B));
    const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
    Tensor C({n, m});
    kernel::gemm_nn(A.data.data(), B.data.data(), C.data.data(), n, k, m);
    return t.push(std::move(C), detail::any_needs(t, {a, b}), [a, b, n, k, m](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        if (t.needs(a.id))
            kernel::gemm_nt(G.data(), t.value_of(b.id).data.data(), t.grad_ref(a.id).data(), n, m, k);
        if (t.needs(b.id))
            kernel::gemm_tn(t.value_of(a.id).data.data(), G.data(), t.grad_ref(b.id).data(), n, k, m);
    });
}

/// a[n,d] x b[m,d]^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require(A.cols() == B.cols(), detail::shapes("matmul_nt", A, B));
    const std::size_t n = A.rows(), d = A.cols(), m = B.rows();
    Tensor C({n, m});
    kernel::gemm_nt(A.data.data(), B.data.data(), C.data.data(), n, d, m);
    return t.push(std::move(C), detail::any_needs(t, {a, b}), [a, b, n, d, m](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);  // [n,m]
        if (t.needs(a.id))                // dA = G B
            kernel::gemm_nn(G.data(), t.value_of(b.id).data.data(), t.grad_ref(a.id).data(), n, m, d);
        if (t.needs(b.id))  // dB = G^T A
            kernel::gemm_tn(G.data(), t.value_of(a.id).data.data(), t.grad_ref(b.id).data(), n, m, d);
    });
}

/// x[n,m] + bias[m] broadcast over rows.
inline Var add_row(Tape& t, Var x, Var bias) {
    const Tensor& X = t.value(x);
    const Tensor& B = t.value(bias);
    detail::require(B.size() == X.cols(), detail::shapes("add_row", X, B));
    const std::size_t n = X.rows(), m = X.cols();
    Tensor Y = X;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) Y.data[i * m + j] += B.data[j];
    return t.push(std::move(Y), detail::any_needs(t, {x, bias}), [x, bias, n, m](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        if (t.needs(x.id)) {
            auto& gx = t.grad_ref(x.id);
            for (std::size_t k = 0; k < G.size(); ++k) gx[k] += G[k];
        }
        if (t.needs(bias.id)) {
            auto& gb = t.grad_ref(bias.id);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) gb[j] += G[i * m + j];
        }
    });
}

/// x W + b
inline Var linear(Tape& t, Var x, Var W, Var b) {
    const Tensor& X = t.value(x);
    const Tensor& Wt = t.value(W);
    if (X.cols() != Wt.rows()) throw Error(detail::shapes("linear", X, Wt));
    return add_row(t, matmul(t, x, W), b);
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <class F, class DF>
Var unary(Tape& t, Var x, F f, DF df) {
    const Tensor& X = t.value(x);
    Tensor Y(X.shape);
    for (std::size_t k = 0; k < X.size(); ++k) Y.data[k] = f(X.data[k]);
    return t.push(std::move(Y), t.needs(x.id), [x, df](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        const auto& X = t.value_of(x.id).data;
        const auto& Y = t.value_of(self).data;
        auto& gx = t.grad_ref(x.id);
        for (std::size_t k = 0; k < G.size(); ++k) gx[k] += G[k] * df(X[k], Y[k]);
    });
}

}  // namespace detail

inline Var relu(Tape& t, Var x) {
    return detail::unary(
        t, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Tape& t, Var x) {
    return detail::unary(
        t, x,
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Tape& t, Var x) {
    return detail::unary(
        t, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var scale(Tape& t, Var x, double s) {
    return detail::unary(
        t, x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Var add(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require(A.size() == B.size(), detail::shapes("add", A, B));
    Tensor Y = A;
    for (std::size_t k = 0; k < Y.size(); ++k) Y.data[k] += B.data[k];
    return t.push(std::move(Y), detail::any_needs(t, {a, b}), [a, b](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        for (Var v : {a, b}) {
            if (!t.needs(v.id)) continue;
            auto& gv = t.grad_ref(v.id);
            for (std::size_t k = 0; k < G.size(); ++k) gv[k] += G[k];
        }
    });
}

inline Var mul(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require(A.size() == B.size(), detail::shapes("mul", A, B));
    Tensor Y = A;
    for (std::size_t k = 0; k < Y.size(); ++k) Y.data[k] *= B.data[k];
    return t.push(std::move(Y), detail::any_needs(t, {a, b}), [a, b](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        if (t.needs(a.id)) {
            auto& ga = t.grad_ref(a.id);
            const auto& Bv = t.value_of(b.id).data;
            for (std::size_t k = 0; k < G.size(); ++k) ga[k] += G[k] * Bv[k];
        }
        if (t.needs(b.id)) {
            auto& gb = t.grad_ref(b.id);
            const auto& Av = t.value_of(a.id).data;
            for (std::size_t k = 0; k < G.size(); ++k) gb[k] += G[k] * Av[k];
        }
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(Tape& t, Var x, std::vector<std::size_t> shape) {
    Tensor Y = t.value(x);
    detail::require(Tensor::count(shape) == Y.size(), "reshape: cannot view " + Y.shape_str() + " as " +
                                                          Tensor::shape_string(shape));
    Y.shape = std::move(shape);
    return t.push(std::move(Y), t.needs(x.id), [x](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        auto& gx = t.grad_ref(x.id);
        for (std::size_t k = 0; k < G.size(); ++k) gx[k] += G[k];
    });
}

/// [a | b] along columns.
inline Var concat_cols(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require(A.rows() == B.rows(), detail::shapes("concat_cols", A, B));
    const std::size_t n = A.rows(), p = A.cols(), q = B.cols();
    Tensor Y({n, p + q});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(&A.data[i * p], p, &Y.data[i * (p + q)]);
        std::copy_n(&B.data[i * q], q, &Y.data[i * (p + q) + p]);
    }
    return t.push(std::move(Y), detail::any_needs(t, {a, b}), [a, b, n, p, q](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        if (t.needs(a.id)) {
            auto& ga = t.grad_ref(a.id);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += G[i * (p + q) + j];
        }
        if (t.needs(b.id)) {
            auto& gb = t.grad_ref(b.id);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += G[i * (p + q) + p + j];
        }
    });
}

/// Columns [start, start+len) of x.
inline Var slice_cols(Tape& t, Var x, std::size_t start, std::size_t len) {
    const Tensor& X = t.value(x);
    detail::require(start + len <= X.cols(), "slice_cols: range exceeds " + X.shape_str());
    const std::size_t n = X.rows(), m = X.cols();
    Tensor Y({n, len});
    for (std::size_t i = 0; i < n; ++i) std::copy_n(&X.data[i * m + start], len, &Y.data[i * len]);
    return t.push(std::move(Y), t.needs(x.id), [x, n, m, start, len](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        auto& gx = t.grad_ref(x.id);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < len; ++j) gx[i * m + start + j] += G[i * len + j];
    });
}

/// Interleaves two equally shaped tensors into rows of pairs: [size, 2].
inline Var pair_rows(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require(A.size() == B.size(), detail::shapes("pair_rows", A, B));
    const std::size_t n = A.size();
    Tensor Y({n, 2});
    for (std::size_t k = 0; k < n; ++k) {
        Y.data[2 * k] = A.data[k];
        Y.data[2 * k + 1] = B.data[k];
    }
    return t.push(std::move(Y), detail::any_needs(t, {a, b}), [a, b, n](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        if (t.needs(a.id)) {
            auto& ga = t.grad_ref(a.id);
            for (std::size_t k = 0; k < n; ++k) ga[k] += G[2 * k];
        }
        if (t.needs(b.id)) {
            auto& gb = t.grad_ref(b.id);
            for (std::size_t k = 0; k < n; ++k) gb[k] += G[2 * k + 1];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations

inline Var sum_all(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    double s = 0.0;
    for (double v : X.data) s += v;
    return t.push(Tensor({1}, {s}), t.needs(x.id), [x](Tape& t, std::size_t self) {
        const double g = t.grad_of(self)[0];
        for (auto& gx : t.grad_ref(x.id)) gx += g;
    });
}

/// Sum of the elementwise product (Frobenius inner product).
inline Var dot_all(Tape& t, Var a, Var b) { return sum_all(t, mul(t, a, b)); }

/// Element `index` of x as a scalar.
inline Var pick(Tape& t, Var x, std::size_t index) {
    const Tensor& X = t.value(x);
    detail::require(index < X.size(), "pick: index out of range");
    return t.push(Tensor({1}, {X.data[index]}), t.needs(x.id), [x, index](Tape& t, std::size_t self) {
        t.grad_ref(x.id)[index] += t.grad_of(self)[0];
    });
}

/// Concatenates scalars into a vector [k].
inline Var stack_scalars(Tape& t, std::span<const Var> xs) {
    Tensor Y({xs.size()});
    bool needs = false;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        detail::require(t.value(xs[k]).size() == 1, "stack_scalars: element is not a scalar");
        Y.data[k] = t.value(xs[k]).data[0];
        needs = needs || t.needs(xs[k].id);
    }
    std::vector<Var> ids(xs.begin(), xs.end());
    return t.push(std::move(Y), needs, [ids](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        for (std::size_t k = 0; k < ids.size(); ++k)
            if (t.needs(ids[k].id)) t.grad_ref(ids[k].id)[0] += G[k];
    });
}

/// Softmax along each row of x[n,m].
inline Var row_softmax(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    const std::size_t n = X.rows(), m = X.cols();
    Tensor Y(X.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = &X.data[i * m];
        double* yi = &Y.data[i * m];
        const double mx = *std::max_element(xi, xi + m);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) z += (yi[j] = std::exp(xi[j] - mx));
        for (std::size_t j = 0; j < m; ++j) yi[j] /= z;
    }
    return t.push(std::move(Y), t.needs(x.id), [x, n, m](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        const auto& Y = t.value_of(self).data;
        auto& gx = t.grad_ref(x.id);
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += G[i * m + j] * Y[i * m + j];
            for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += Y[i * m + j] * (G[i * m + j] - dot);
        }
    });
}

/// Softmax over the entries with allowed[k] != 0; the rest are exactly 0.
inline Var masked_softmax(Tape& t, Var logits, std::span<const char> allowed) {
    const Tensor& X = t.value(logits);
    detail::require(allowed.size() == X.size(), "masked_softmax: mask length " + std::to_string(allowed.size()) +
                                                    " for " + X.shape_str());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < X.size(); ++k)
        if (allowed[k]) mx = std::max(mx, X.data[k]);
    if (mx == -std::numeric_limits<double>::infinity()) throw Error("masked_softmax: no remaining nodes");
    Tensor Y({X.size()}, 0.0);
    double z = 0.0;
    for (std::size_t k = 0; k < X.size(); ++k)
        if (allowed[k]) z += (Y.data[k] = std::exp(X.data[k] - mx));
    for (auto& y : Y.data) y /= z;
    return t.push(std::move(Y), t.needs(logits.id), [logits](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        const auto& Y = t.value_of(self).data;
        double dot = 0.0;
        for (std::size_t k = 0; k < G.size(); ++k) dot += G[k] * Y[k];
        auto& gx = t.grad_ref(logits.id);
        for (std::size_t k = 0; k < G.size(); ++k) gx[k] += Y[k] * (G[k] - dot);
    });
}

/// Log-probabilities of the masked softmax; masked entries hold -inf and
/// receive no gradient.
inline Var masked_log_softmax(Tape& t, Var logits, std::span<const char> allowed) {
    const Tensor& X = t.value(logits);
    detail::require(allowed.size() == X.size(), "masked_log_softmax: mask length mismatch");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < X.size(); ++k)
        if (allowed[k]) mx = std::max(mx, X.data[k]);
    if (mx == -std::numeric_limits<double>::infinity()) throw Error("masked_log_softmax: no remaining nodes");
    double z = 0.0;
    for (std::size_t k = 0; k < X.size(); ++k)
        if (allowed[k]) z += std::exp(X.data[k] - mx);
    const double lz = mx + std::log(z);
    Tensor Y({X.size()}, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < X.size(); ++k)
        if (allowed[k]) Y.data[k] = X.data[k] - lz;
    std::vector<char> mask(allowed.begin(), allowed.end());
    return t.push(std::move(Y), t.needs(logits.id), [logits, mask](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        const auto& Y = t.value_of(self).data;
        double gsum = 0.0;
        for (std::size_t k = 0; k < G.size(); ++k)
            if (mask[k]) gsum += G[k];
        auto& gx = t.grad_ref(logits.id);
        for (std::size_t k = 0; k < G.size(); ++k)
            if (mask[k]) gx[k] += G[k] - std::exp(Y[k]) * gsum;
    });
}

/// -log probs[target]. The target must carry positive probability.
inline Var cross_entropy(Tape& t, Var probs, std::size_t target) {
    const Tensor& P = t.value(probs);
    detail::require(target < P.size(), "cross_entropy: target out of range");
    const double p = P.data[target];
    if (!(p > 0.0)) throw Error("cross_entropy: target " + std::to_string(target) + " is masked");
    return t.push(Tensor({1}, {-std::log(p)}), t.needs(probs.id), [probs, target, p](Tape& t, std::size_t self) {
        t.grad_ref(probs.id)[target] += -t.grad_of(self)[0] / p;
    });
}

/// -log softmax(logits)[target] over the allowed entries, computed in log space.
inline Var cross_entropy_logits(Tape& t, Var logits, std::span<const char> allowed, std::size_t target) {
    if (target >= allowed.size() || !allowed[target])
        throw Error("cross_entropy: target " + std::to_string(target) + " is masked");
    return scale(t, pick(t, masked_log_softmax(t, logits, allowed), target), -1.0);
}

/// sum_j alpha[j] * xs[j]
inline Var weighted_sum(Tape& t, Var alpha, std::span<const Var> xs) {
    const Tensor& A = t.value(alpha);
    detail::require(A.size() == xs.size() && !xs.empty(), "weighted_sum: weight count mismatch");
    Tensor Y(t.value(xs[0]).shape, 0.0);
    bool needs = t.needs(alpha.id);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const Tensor& X = t.value(xs[j]);
        detail::require(X.size() == Y.size(), detail::shapes("weighted_sum", X, Y));
        for (std::size_t k = 0; k < Y.size(); ++k) Y.data[k] += A.data[j] * X.data[k];
        needs = needs || t.needs(xs[j].id);
    }
    std::vector<Var> ids(xs.begin(), xs.end());
    return t.push(std::move(Y), needs, [alpha, ids](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        const auto& A = t.value_of(alpha.id).data;
        for (std::size_t j = 0; j < ids.size(); ++j) {
            const auto& X = t.value_of(ids[j].id).data;
            if (t.needs(alpha.id)) {
                double s = 0.0;
                for (std::size_t k = 0; k < G.size(); ++k) s += G[k] * X[k];
                t.grad_ref(alpha.id)[j] += s;
            }
            if (t.needs(ids[j].id)) {
                auto& gx = t.grad_ref(ids[j].id);
                for (std::size_t k = 0; k < G.size(); ++k) gx[k] += A[j] * G[k];
            }
        }
    });
}

/// Elementwise mean of equally shaped tensors.
inline Var mean_of(Tape& t, std::span<const Var> xs) {
    detail::require(!xs.empty(), "mean_of: empty input");
    Tensor w({xs.size()}, 1.0 / static_cast<double>(xs.size()));
    return weighted_sum(t, t.constant(std::move(w)), xs);
}

/// Elementwise maximum; the gradient goes to the first argmax.
inline Var max_of(Tape& t, std::span<const Var> xs) {
    detail::require(!xs.empty(), "max_of: empty input");
    Tensor Y = t.value(xs[0]);
    std::vector<std::size_t> arg(Y.size(), 0);
    bool needs = t.needs(xs[0].id);
    for (std::size_t j = 1; j < xs.size(); ++j) {
        const Tensor& X = t.value(xs[j]);
        detail::require(X.size() == Y.size(), detail::shapes("max_of", X, Y));
        for (std::size_t k = 0; k < Y.size(); ++k)
            if (X.data[k] > Y.data[k]) {
                Y.data[k] = X.data[k];
                arg[k] = j;
            }
        needs = needs || t.needs(xs[j].id);
    }
    std::vector<Var> ids(xs.begin(), xs.end());
    return t.push(std::move(Y), needs, [ids, arg](Tape& t, std::size_t self) {
        const auto& G = t.grad_of(self);
        for (std::size_t k = 0; k < G.size(); ++k)
            if (t.needs(ids[arg[k]].id)) t.grad_ref(ids[arg[k]].id)[k] += G[k];
    });
}

// ---------------------------------------------------------------------------
// Composite layers

/// Unscaled dot-product attention scores Q K^T.
inline Var attention_scores(Tape& t, Var Q, Var K) { return matmul_nt(t, Q, K); }

struct LinearLayer {
    Var W;
    Var b;
};

/// Linear/ReLU stack; no activation after the last layer.
inline Var mlp_relu(Tape& t, Var x, std::span<const LinearLayer> layers) {
    Var h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h = linear(t, h, layers[l].W, layers[l].b);
        if (l + 1 < layers.size()) h = relu(t, h);
    }
    return h;
}

struct LstmWeights {
    Var W_x;  // [d_in, 4d]  gate order: input, forget, cell, output
    Var W_h;  // [d, 4d]
    Var b;    // [4d]
};

struct LstmState {
    Var h;
    Var c;
};

/// One LSTM step applied independently to every row (node).
inline LstmState lstm_cell(Tape& t, Var x, LstmState s, const LstmWeights& w) {
    const std::size_t d = t.value(s.h).cols();
    if (t.value(w.W_h).rows() != d || t.value(w.W_h).cols() != 4 * d)
        throw Error("lstm_cell: recurrent weight " + t.value(w.W_h).shape_str() + " does not match hidden width " +
                    std::to_string(d));
    if (t.value(x).rows() != t.value(s.h).rows() || t.value(s.c).size() != t.value(s.h).size())
        throw Error(detail::shapes("lstm_cell", t.value(x), t.value(s.h)));
    Var gates = add_row(t, add(t, matmul(t, x, w.W_x), matmul(t, s.h, w.W_h)), w.b);
    Var i = sigmoid(t, slice_cols(t, gates, 0, d));
    Var f = sigmoid(t, slice_cols(t, gates, d, d));
    Var g = tanh(t, slice_cols(t, gates, 2 * d, d));
    Var o = sigmoid(t, slice_cols(t, gates, 3 * d, d));
    Var c = add(t, mul(t, f, s.c), mul(t, i, g));
    Var h = mul(t, o, tanh(t, c));
    return {h, c};
}

}  // namespace marvin::nn
