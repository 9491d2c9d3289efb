#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "proxyrec/errors.hpp"
#include "proxyrec/rng.hpp"

// Minimal reverse-mode autodiff over dense row-major matrices.
//
// Every value is a rows x cols matrix (vectors are 1 x n or n x 1, scalars
// 1 x 1). Ops build a DAG of shared nodes; backward() runs the tape in
// reverse topological order. Leaf gradients accumulate additively across
// backward calls until explicitly zeroed; non-leaf gradients are scoped to
// a single backward pass. Instantiate with Real = double for verification
// and gradient checking, Real = float for training.

namespace proxyrec {

template <class Real>
struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<Real> val;
    std::vector<Real> grad;  // empty until populated by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backward_fn;

    int size() const { return rows * cols; }
    bool is_leaf() const { return inputs.empty(); }

    Real& at(int r, int c) { return val[static_cast<std::size_t>(r) * cols + c]; }
    Real at(int r, int c) const { return val[static_cast<std::size_t>(r) * cols + c]; }

    void ensure_grad() {
        if (grad.empty()) grad.assign(val.size(), Real(0));
    }
};

namespace detail {

template <class Real>
inline void check_finite(const std::vector<Real>& v, const char* op) {
    for (Real x : v) {
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
}

}  // namespace detail

template <class Real>
class Tensor {
  public:
    using Node = TensorNode<Real>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor from(int rows, int cols, std::vector<Real> values, bool requires_grad = false) {
        if (rows <= 0 || cols <= 0) throw ShapeError("Tensor::from: dimensions must be positive");
        if (static_cast<std::size_t>(rows) * cols != values.size())
            throw ShapeError("Tensor::from: value count does not match shape");
        detail::check_finite(values, "from");
        auto n = std::make_shared<Node>();
        n->rows = rows;
        n->cols = cols;
        n->val = std::move(values);
        n->requires_grad = requires_grad;
        return Tensor(n);
    }

    static Tensor zeros(int rows, int cols, bool requires_grad = false) {
        return from(rows, cols, std::vector<Real>(static_cast<std::size_t>(rows) * cols, Real(0)),
                    requires_grad);
    }

    static Tensor full(int rows, int cols, Real v, bool requires_grad = false) {
        return from(rows, cols, std::vector<Real>(static_cast<std::size_t>(rows) * cols, v),
                    requires_grad);
    }

    static Tensor scalar(Real v, bool requires_grad = false) { return full(1, 1, v, requires_grad); }

    static Tensor row(std::vector<Real> values, bool requires_grad = false) {
        int n = static_cast<int>(values.size());
        return from(1, n, std::move(values), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    int size() const { return node_->size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::vector<Real>& values() { return node_->val; }
    const std::vector<Real>& values() const { return node_->val; }
    std::vector<Real>& grad() { return node_->grad; }
    const std::vector<Real>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    Real value_at(int r, int c) const { return node_->at(r, c); }
    Real item() const {
        if (rows() != 1 || cols() != 1) throw ContractError("Tensor::item: tensor is not scalar");
        return node_->val[0];
    }

    void zero_grad() { node_->grad.clear(); }

    std::shared_ptr<Node> node() const { return node_; }

  private:
    std::shared_ptr<Node> node_;
};

namespace detail {

template <class Real>
inline Tensor<Real> make_op(int rows, int cols, std::vector<Real> values, const char* name,
                            std::vector<std::shared_ptr<TensorNode<Real>>> inputs,
                            std::function<void(TensorNode<Real>&)> backward_fn) {
    check_finite(values, name);
    auto n = std::make_shared<TensorNode<Real>>();
    n->rows = rows;
    n->cols = cols;
    n->val = std::move(values);
    for (const auto& in : inputs)
        if (in->requires_grad) n->requires_grad = true;
    n->inputs = std::move(inputs);
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Tensor<Real>(n);
}

template <class Real>
inline void accumulate(TensorNode<Real>& dst, const std::vector<Real>& delta) {
    dst.ensure_grad();
    for (std::size_t i = 0; i < delta.size(); ++i) dst.grad[i] += delta[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Core ops
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<Real> out(static_cast<std::size_t>(m) * n, Real(0));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const Real aip = av[static_cast<std::size_t>(i) * k + p];
            if (aip == Real(0)) continue;
            const Real* brow = &bv[static_cast<std::size_t>(p) * n];
            Real* orow = &out[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<Real>(
        m, n, std::move(out), "matmul", {an, bn}, [an, bn, m, k, n](TensorNode<Real>& y) {
            const auto& g = y.grad;
            if (an->requires_grad) {
                an->ensure_grad();
                // dL/da = g . b^T
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        Real acc = 0;
                        for (int j = 0; j < n; ++j)
                            acc += g[static_cast<std::size_t>(i) * n + j] *
                                   bn->val[static_cast<std::size_t>(p) * n + j];
                        an->grad[static_cast<std::size_t>(i) * k + p] += acc;
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dL/db = a^T . g
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < m; ++i) {
                        const Real aip = an->val[static_cast<std::size_t>(i) * k + p];
                        if (aip == Real(0)) continue;
                        for (int j = 0; j < n; ++j)
                            bn->grad[static_cast<std::size_t>(p) * n + j] +=
                                aip * g[static_cast<std::size_t>(i) * n + j];
                    }
            }
        });
}

template <class Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
    const int m = a.rows(), n = a.cols();
    std::vector<Real> out(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = a.values()[static_cast<std::size_t>(i) * n + j];
    auto an = a.node();
    return detail::make_op<Real>(n, m, std::move(out), "transpose", {an},
                                 [an, m, n](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     for (int j = 0; j < n; ++j)
                                         for (int i = 0; i < m; ++i)
                                             an->grad[static_cast<std::size_t>(i) * n + j] +=
                                                 y.grad[static_cast<std::size_t>(j) * m + i];
                                 });
}

namespace detail {

enum class Broadcast { none, row, scalar };

template <class Real>
inline Broadcast broadcast_kind(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
    throw ShapeError(std::string(op) + ": incompatible shapes");
}

template <class Real, class Fwd, class BwdA, class BwdB>
inline Tensor<Real> binary_broadcast_op(const Tensor<Real>& a, const Tensor<Real>& b,
                                        const char* name, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
    const Broadcast bc = broadcast_kind(a, b, name);
    const int m = a.rows(), n = a.cols();
    std::vector<Real> out(a.values().size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const std::size_t ia = static_cast<std::size_t>(i) * n + j;
            const std::size_t ib = bc == Broadcast::none ? ia
                                   : bc == Broadcast::row ? static_cast<std::size_t>(j)
                                                          : 0u;
            out[ia] = fwd(av[ia], bv[ib]);
        }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<Real>(
        m, n, std::move(out), name, {an, bn}, [an, bn, bc, m, n, bwd_a, bwd_b](TensorNode<Real>& y) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const std::size_t ia = static_cast<std::size_t>(i) * n + j;
                    const std::size_t ib = bc == Broadcast::none ? ia
                                           : bc == Broadcast::row ? static_cast<std::size_t>(j)
                                                                  : 0u;
                    const Real g = y.grad[ia];
                    if (an->requires_grad) {
                        an->ensure_grad();
                        an->grad[ia] += bwd_a(g, an->val[ia], bn->val[ib]);
                    }
                    if (bn->requires_grad) {
                        bn->ensure_grad();
                        bn->grad[ib] += bwd_b(g, an->val[ia], bn->val[ib]);
                    }
                }
        });
}

}  // namespace detail

// add/sub/mul accept b of the same shape, a 1 x n row (broadcast over rows),
// or a 1 x 1 scalar.
template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
    return detail::binary_broadcast_op(
        a, b, "add", [](Real x, Real y) { return x + y; },
        [](Real g, Real, Real) { return g; }, [](Real g, Real, Real) { return g; });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
    return detail::binary_broadcast_op(
        a, b, "sub", [](Real x, Real y) { return x - y; },
        [](Real g, Real, Real) { return g; }, [](Real g, Real, Real) { return -g; });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
    return detail::binary_broadcast_op(
        a, b, "mul", [](Real x, Real y) { return x * y; },
        [](Real g, Real, Real y) { return g * y; }, [](Real g, Real x, Real) { return g * x; });
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real c) {
    std::vector<Real> out(a.values());
    for (Real& x : out) x *= c;
    auto an = a.node();
    return detail::make_op<Real>(a.rows(), a.cols(), std::move(out), "scale", {an},
                                 [an, c](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < y.grad.size(); ++i)
                                         an->grad[i] += c * y.grad[i];
                                 });
}

template <class Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty input");
    const int m = parts[0].rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) throw ShapeError("concat_cols: row counts disagree");
        total += p.cols();
    }
    std::vector<Real> out(static_cast<std::size_t>(m) * total);
    std::vector<std::shared_ptr<TensorNode<Real>>> nodes;
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        nodes.push_back(p.node());
        const int n = p.cols();
        for (int i = 0; i < m; ++i)
            std::copy_n(&p.values()[static_cast<std::size_t>(i) * n], n,
                        &out[static_cast<std::size_t>(i) * total + off]);
        off += n;
    }
    auto nodes_copy = nodes;
    return detail::make_op<Real>(m, total, std::move(out), "concat_cols", std::move(nodes),
                                 [nodes_copy, offsets, m, total](TensorNode<Real>& y) {
                                     for (std::size_t p = 0; p < nodes_copy.size(); ++p) {
                                         auto& in = *nodes_copy[p];
                                         if (!in.requires_grad) continue;
                                         in.ensure_grad();
                                         const int n = in.cols;
                                         for (int i = 0; i < m; ++i)
                                             for (int j = 0; j < n; ++j)
                                                 in.grad[static_cast<std::size_t>(i) * n + j] +=
                                                     y.grad[static_cast<std::size_t>(i) * total +
                                                            offsets[p] + j];
                                     }
                                 });
}

template <class Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty input");
    const int n = parts[0].cols();
    int total = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) throw ShapeError("concat_rows: column counts disagree");
        total += p.rows();
    }
    std::vector<Real> out;
    out.reserve(static_cast<std::size_t>(total) * n);
    std::vector<std::shared_ptr<TensorNode<Real>>> nodes;
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        nodes.push_back(p.node());
        out.insert(out.end(), p.values().begin(), p.values().end());
        off += p.rows();
    }
    auto nodes_copy = nodes;
    return detail::make_op<Real>(total, n, std::move(out), "concat_rows", std::move(nodes),
                                 [nodes_copy, offsets, n](TensorNode<Real>& y) {
                                     for (std::size_t p = 0; p < nodes_copy.size(); ++p) {
                                         auto& in = *nodes_copy[p];
                                         if (!in.requires_grad) continue;
                                         in.ensure_grad();
                                         const std::size_t base =
                                             static_cast<std::size_t>(offsets[p]) * n;
                                         for (std::size_t i = 0; i < in.grad.size(); ++i)
                                             in.grad[i] += y.grad[base + i];
                                     }
                                 });
}

template <class Real>
Tensor<Real> slice_rows(const Tensor<Real>& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw ShapeError("slice_rows: bad range");
    const int n = a.cols(), m = r1 - r0;
    std::vector<Real> out(a.values().begin() + static_cast<std::size_t>(r0) * n,
                          a.values().begin() + static_cast<std::size_t>(r1) * n);
    auto an = a.node();
    return detail::make_op<Real>(m, n, std::move(out), "slice_rows", {an},
                                 [an, r0, n](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     const std::size_t base = static_cast<std::size_t>(r0) * n;
                                     for (std::size_t i = 0; i < y.grad.size(); ++i)
                                         an->grad[base + i] += y.grad[i];
                                 });
}

template <class Real>
Tensor<Real> row(const Tensor<Real>& a, int r) {
    return slice_rows(a, r, r + 1);
}

// Row gather with scatter-add backward; index -1 yields a zero row (used for
// items without a bias slot).
template <class Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, const std::vector<int>& ids) {
    const int n = table.cols();
    const int m = static_cast<int>(ids.size());
    if (m == 0) throw ContractError("gather_rows: empty index list");
    std::vector<Real> out(static_cast<std::size_t>(m) * n, Real(0));
    for (int i = 0; i < m; ++i) {
        const int id = ids[i];
        if (id == -1) continue;
        if (id < 0 || id >= table.rows()) throw DataError("gather_rows: row index out of range");
        std::copy_n(&table.values()[static_cast<std::size_t>(id) * n], n,
                    &out[static_cast<std::size_t>(i) * n]);
    }
    auto tn = table.node();
    return detail::make_op<Real>(m, n, std::move(out), "gather_rows", {tn},
                                 [tn, ids, n](TensorNode<Real>& y) {
                                     if (!tn->requires_grad) return;
                                     tn->ensure_grad();
                                     for (std::size_t i = 0; i < ids.size(); ++i) {
                                         if (ids[i] == -1) continue;
                                         const std::size_t dst = static_cast<std::size_t>(ids[i]) * n;
                                         const std::size_t src = i * n;
                                         for (int j = 0; j < n; ++j)
                                             tn->grad[dst + j] += y.grad[src + j];
                                     }
                                 });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> leaky_relu(const Tensor<Real>& a, Real slope) {
    std::vector<Real> out(a.values());
    for (Real& x : out) x = x > Real(0) ? x : slope * x;
    auto an = a.node();
    return detail::make_op<Real>(a.rows(), a.cols(), std::move(out), "leaky_relu", {an},
                                 [an, slope](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < y.grad.size(); ++i)
                                         an->grad[i] +=
                                             y.grad[i] * (an->val[i] > Real(0) ? Real(1) : slope);
                                 });
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
    std::vector<Real> out(a.values());
    for (Real& x : out) {
        x = x >= Real(0) ? Real(1) / (Real(1) + std::exp(-x))
                         : std::exp(x) / (Real(1) + std::exp(x));
    }
    auto an = a.node();
    auto on = out;  // keep forward values for backward
    return detail::make_op<Real>(a.rows(), a.cols(), std::move(out), "sigmoid", {an},
                                 [an, on](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < y.grad.size(); ++i)
                                         an->grad[i] += y.grad[i] * on[i] * (Real(1) - on[i]);
                                 });
}

template <class Real>
Tensor<Real> softplus(const Tensor<Real>& a) {
    std::vector<Real> out(a.values());
    for (Real& x : out)
        x = x > Real(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    auto an = a.node();
    return detail::make_op<Real>(
        a.rows(), a.cols(), std::move(out), "softplus", {an}, [an](TensorNode<Real>& y) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (std::size_t i = 0; i < y.grad.size(); ++i) {
                const Real x = an->val[i];
                const Real s = x >= Real(0) ? Real(1) / (Real(1) + std::exp(-x))
                                            : std::exp(x) / (Real(1) + std::exp(x));
                an->grad[i] += y.grad[i] * s;
            }
        });
}

// ---------------------------------------------------------------------------
// Row-wise ops
// ---------------------------------------------------------------------------

// Stable row softmax (max subtraction).
template <class Real>
Tensor<Real> softmax_rows(const Tensor<Real>& a) {
    const int m = a.rows(), n = a.cols();
    std::vector<Real> out(a.values());
    for (int i = 0; i < m; ++i) {
        Real* r = &out[static_cast<std::size_t>(i) * n];
        Real mx = r[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        Real sum = 0;
        for (int j = 0; j < n; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        for (int j = 0; j < n; ++j) r[j] /= sum;
    }
    auto an = a.node();
    auto probs = out;
    return detail::make_op<Real>(m, n, std::move(out), "softmax_rows", {an},
                                 [an, probs, m, n](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     for (int i = 0; i < m; ++i) {
                                         const std::size_t base = static_cast<std::size_t>(i) * n;
                                         Real dot = 0;
                                         for (int j = 0; j < n; ++j)
                                             dot += y.grad[base + j] * probs[base + j];
                                         for (int j = 0; j < n; ++j)
                                             an->grad[base + j] +=
                                                 probs[base + j] * (y.grad[base + j] - dot);
                                     }
                                 });
}

template <class Real>
Tensor<Real> l2_normalize_rows(const Tensor<Real>& a) {
    const int m = a.rows(), n = a.cols();
    const Real eps = Real(1e-12);
    std::vector<Real> out(a.values());
    std::vector<Real> norms(m);
    for (int i = 0; i < m; ++i) {
        Real* r = &out[static_cast<std::size_t>(i) * n];
        Real s = 0;
        for (int j = 0; j < n; ++j) s += r[j] * r[j];
        const Real nrm = std::max(std::sqrt(s), eps);
        norms[i] = nrm;
        for (int j = 0; j < n; ++j) r[j] /= nrm;
    }
    auto an = a.node();
    auto ys = out;
    return detail::make_op<Real>(
        m, n, std::move(out), "l2_normalize_rows", {an}, [an, ys, norms, m, n](TensorNode<Real>& y) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * n;
                Real dot = 0;
                for (int j = 0; j < n; ++j) dot += y.grad[base + j] * ys[base + j];
                for (int j = 0; j < n; ++j)
                    an->grad[base + j] += (y.grad[base + j] - dot * ys[base + j]) / norms[i];
            }
        });
}

// Per-row standardization with population variance; no affine terms (compose
// with mul/add for gains and shifts).
template <class Real>
Tensor<Real> layer_norm_rows(const Tensor<Real>& a) {
    const int m = a.rows(), n = a.cols();
    const Real eps = Real(1e-12);
    std::vector<Real> out(a.values());
    std::vector<Real> inv_std(m);
    for (int i = 0; i < m; ++i) {
        Real* r = &out[static_cast<std::size_t>(i) * n];
        Real mean = 0;
        for (int j = 0; j < n; ++j) mean += r[j];
        mean /= n;
        Real var = 0;
        for (int j = 0; j < n; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= n;
        const Real is = Real(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < n; ++j) r[j] = (r[j] - mean) * is;
    }
    auto an = a.node();
    auto ys = out;
    return detail::make_op<Real>(
        m, n, std::move(out), "layer_norm_rows", {an},
        [an, ys, inv_std, m, n](TensorNode<Real>& y) {
            if (!an->requires_grad) return;
            an->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * n;
                Real gsum = 0, gysum = 0;
                for (int j = 0; j < n; ++j) {
                    gsum += y.grad[base + j];
                    gysum += y.grad[base + j] * ys[base + j];
                }
                for (int j = 0; j < n; ++j)
                    an->grad[base + j] += inv_std[i] * (y.grad[base + j] - gsum / n -
                                                        ys[base + j] * gysum / n);
            }
        });
}

// Inverted dropout with an externally supplied mask stream; kept entries are
// scaled by 1/(1-p). The caller owns mask determinism (global seed + call
// counter).
template <class Real>
Tensor<Real> dropout(const Tensor<Real>& a, double p, Rng& mask_rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must lie in [0, 1)");
    if (p == 0.0) return a;
    const Real keep_scale = Real(1.0 / (1.0 - p));
    std::vector<Real> mask(a.values().size());
    for (Real& mv : mask) mv = mask_rng.uniform() < p ? Real(0) : keep_scale;
    std::vector<Real> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    auto an = a.node();
    return detail::make_op<Real>(a.rows(), a.cols(), std::move(out), "dropout", {an},
                                 [an, mask](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     for (std::size_t i = 0; i < y.grad.size(); ++i)
                                         an->grad[i] += y.grad[i] * mask[i];
                                 });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& a) {
    Real s = 0;
    for (Real x : a.values()) s += x;
    auto an = a.node();
    return detail::make_op<Real>(1, 1, std::vector<Real>{s}, "sum_all", {an},
                                 [an](TensorNode<Real>& y) {
                                     if (!an->requires_grad) return;
                                     an->ensure_grad();
                                     for (Real& g : an->grad) g += y.grad[0];
                                 });
}

template <class Real>
Tensor<Real> mean_all(const Tensor<Real>& a) {
    return scale(sum_all(a), Real(1) / Real(a.size()));
}

// Per-row softmax cross-entropy against integer targets, computed in logit
// space: loss_i = logsumexp(row_i) - row_i[target_i]. Output is m x 1.
template <class Real>
Tensor<Real> cross_entropy_rows(const Tensor<Real>& logits, const std::vector<int>& targets) {
    const int m = logits.rows(), n = logits.cols();
    if (static_cast<int>(targets.size()) != m)
        throw ShapeError("cross_entropy_rows: one target per row required");
    if (n < 2) throw ContractError("cross_entropy_rows: need at least 2 classes");
    for (int t : targets)
        if (t < 0 || t >= n) throw ContractError("cross_entropy_rows: target out of range");
    std::vector<Real> out(m);
    const auto& x = logits.values();
    for (int i = 0; i < m; ++i) {
        const Real* r = &x[static_cast<std::size_t>(i) * n];
        Real mx = r[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        Real sum = 0;
        for (int j = 0; j < n; ++j) sum += std::exp(r[j] - mx);
        out[i] = mx + std::log(sum) - r[targets[i]];
    }
    auto ln = logits.node();
    return detail::make_op<Real>(
        m, 1, std::move(out), "cross_entropy_rows", {ln}, [ln, targets, m, n](TensorNode<Real>& y) {
            if (!ln->requires_grad) return;
            ln->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * n;
                const Real* r = &ln->val[base];
                Real mx = r[0];
                for (int j = 1; j < n; ++j) mx = std::max(mx, r[j]);
                Real sum = 0;
                for (int j = 0; j < n; ++j) sum += std::exp(r[j] - mx);
                const Real g = y.grad[i];
                for (int j = 0; j < n; ++j) {
                    Real p = std::exp(r[j] - mx) / sum;
                    if (j == targets[i]) p -= Real(1);
                    ln->grad[base + j] += g * p;
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

// Reverse-mode accumulation from a scalar loss. Leaf gradients accumulate
// across calls; interior gradients are reset per call.
template <class Real>
void backward(const Tensor<Real>& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined tensor");
    if (loss.rows() != 1 || loss.cols() != 1)
        throw ContractError("backward: loss must be scalar (1x1)");
    using Node = TensorNode<Real>;
    auto root = loss.node();
    if (!root->requires_grad) {
        root->ensure_grad();
        root->grad[0] += Real(1);
        return;
    }

    // Iterative post-order DFS over grad-requiring nodes.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx].get();
            ++idx;
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* node : topo) {
        if (node->is_leaf())
            node->ensure_grad();
        else
            node->grad.assign(node->val.size(), Real(0));
    }
    root->grad[0] += Real(1);

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
        detail::check_finite(node->grad, "backward");
    }
}

}  // namespace proxyrec
