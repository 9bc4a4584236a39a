#pragma once

// Reverse-mode automatic differentiation on a per-batch tape.
//
// A Tape owns a flat list of nodes in creation order; every op appends one
// node whose backward closure scatters gradients into its inputs. Creation
// order is a topological order, so backward() is a single reverse sweep.
// All arithmetic is double precision and single-threaded, which makes every
// training loop bit-deterministic for a fixed seed and data order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "maskinfill/tensor.hpp"

namespace maskinfill {

// ---------------------------------------------------------------------------
// Raw kernels. These dominate runtime; (i,p,j) loop orders keep the inner
// loop contiguous so the compiler can vectorize.
// ---------------------------------------------------------------------------

// C[m,n] += A[m,k] * B[k,n]
inline void gemm_acc(const double* A, const double* B, double* C,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T
inline void gemm_nt_acc(const double* A, const double* B, double* C,
                        std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * n;
        double* c = C + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* b = B + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
            c[p] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
inline void gemm_tn_acc(const double* A, const double* B, double* C,
                        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p];
            double* c = C + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t index = 0;

    const Tensor& value() const;
    const Tensor& grad() const;
    bool valid() const { return tape != nullptr; }
};

class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backward;  // empty for leaves
    };

    Var leaf(Tensor value) {
        check_finite(value, "leaf");
        return push(std::move(value), nullptr);
    }

    Var constant(Tensor value) { return leaf(std::move(value)); }

    std::size_t size() const { return nodes_.size(); }

    Node& node(std::size_t i) { return nodes_[i]; }
    const Node& node(std::size_t i) const { return nodes_[i]; }

    // Runs the reverse sweep from a scalar output. Gradients of every node
    // are available afterwards via Var::grad().
    void backward(Var loss) {
        if (loss.tape != this) throw std::logic_error("backward: var from another tape");
        if (nodes_[loss.index].value.size() != 1)
            throw std::invalid_argument("backward: output is not scalar");
        for (auto& n : nodes_) {
            n.grad = Tensor(n.value.shape());
        }
        nodes_[loss.index].grad[0] = 1.0;
        for (std::size_t i = loss.index + 1; i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward(*this);
        }
    }

    Var push(Tensor value, std::function<void(Tape&)> backward) {
        nodes_.push_back(Node{std::move(value), Tensor(), std::move(backward)});
        return Var{this, nodes_.size() - 1};
    }

    static void check_finite(const Tensor& t, const char* op) {
        if (!t.all_finite())
            throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
    }

private:
    std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->node(index).value; }
inline const Tensor& Var::grad() const { return tape->node(index).grad; }

namespace detail {

inline void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw std::logic_error("vars from different tapes");
}

}  // namespace detail

inline Var add(Var a, Var b) {
    detail::require_same_tape(a, b);
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument("add: shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
    Tape& t = *a.tape;
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    Tape::check_finite(out, "add");
    const std::size_t ai = a.index, bi = b.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, bi, oi](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& ga = tp.node(ai).grad;
        Tensor& gb = tp.node(bi).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    };
    return v;
}

inline Var sub(Var a, Var b) {
    detail::require_same_tape(a, b);
    if (!a.value().same_shape(b.value())) throw std::invalid_argument("sub: shape mismatch");
    Tape& t = *a.tape;
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    Tape::check_finite(out, "sub");
    const std::size_t ai = a.index, bi = b.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, bi, oi](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& ga = tp.node(ai).grad;
        Tensor& gb = tp.node(bi).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    };
    return v;
}

inline Var mul(Var a, Var b) {
    detail::require_same_tape(a, b);
    if (!a.value().same_shape(b.value())) throw std::invalid_argument("mul: shape mismatch");
    Tape& t = *a.tape;
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    Tape::check_finite(out, "mul");
    const std::size_t ai = a.index, bi = b.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, bi, oi](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& av = tp.node(ai).value;
        const Tensor& bv2 = tp.node(bi).value;
        Tensor& ga = tp.node(ai).grad;
        Tensor& gb = tp.node(bi).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv2[i];
            gb[i] += g[i] * av[i];
        }
    };
    return v;
}

inline Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    Tape::check_finite(out, "scale");
    const std::size_t ai = a.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, oi, c](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& ga = tp.node(ai).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    };
    return v;
}

inline Var tanh(Var a) {
    Tape& t = *a.tape;
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    Tape::check_finite(out, "tanh");
    const std::size_t ai = a.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, oi](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& y = tp.node(oi).value;
        Tensor& ga = tp.node(ai).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    };
    return v;
}

inline Var sigmoid(Var a) {
    Tape& t = *a.tape;
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    Tape::check_finite(out, "sigmoid");
    const std::size_t ai = a.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, oi](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& y = tp.node(oi).value;
        Tensor& ga = tp.node(ai).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
    return v;
}

inline Var relu(Var a) {
    Tape& t = *a.tape;
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    const std::size_t ai = a.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, oi](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& x2 = tp.node(ai).value;
        Tensor& ga = tp.node(ai).grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x2[i] > 0.0) ga[i] += g[i];
    };
    return v;
}

// Exact GELU, x * Phi(x).
inline Var gelu(Var a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    Tape& t = *a.tape;
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = x[i] * 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
    Tape::check_finite(out, "gelu");
    const std::size_t ai = a.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, oi](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& x2 = tp.node(ai).value;
        Tensor& ga = tp.node(ai).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double cdf = 0.5 * (1.0 + std::erf(x2[i] * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x2[i] * x2[i]);
            ga[i] += g[i] * (cdf + x2[i] * pdf);
        }
    };
    return v;
}

// [m,k] x [k,n] -> [m,n]
inline Var matmul(Var a, Var b) {
    detail::require_same_tape(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw std::invalid_argument("matmul: bad shapes " + A.shape_str() + " x " + B.shape_str());
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out({m, n});
    gemm_acc(A.data(), B.data(), out.data(), m, k, n);
    Tape::check_finite(out, "matmul");
    Tape& t = *a.tape;
    const std::size_t ai = a.index, bi = b.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, bi, oi, m, k, n](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        gemm_nt_acc(g.data(), tp.node(bi).value.data(), tp.node(ai).grad.data(), m, n, k);
        gemm_tn_acc(tp.node(ai).value.data(), g.data(), tp.node(bi).grad.data(), m, k, n);
    };
    return v;
}

// [m,k] x [k] -> [m]
inline Var matvec(Var a, Var x) {
    detail::require_same_tape(a, x);
    const Tensor& A = a.value();
    const Tensor& X = x.value();
    if (A.rank() != 2 || X.rank() != 1 || A.dim(1) != X.dim(0))
        throw std::invalid_argument("matvec: bad shapes");
    const std::size_t m = A.dim(0), k = A.dim(1);
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = A.data() + i * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += row[p] * X[p];
        out[i] = acc;
    }
    Tape::check_finite(out, "matvec");
    Tape& t = *a.tape;
    const std::size_t ai = a.index, xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ai, xi, oi, m, k](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& A2 = tp.node(ai).value;
        const Tensor& X2 = tp.node(xi).value;
        Tensor& gA = tp.node(ai).grad;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            const double* row = A2.data() + i * k;
            double* grow = gA.data() + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                grow[p] += gi * X2[p];
                gX[p] += gi * row[p];
            }
        }
    };
    return v;
}

// [k] x [k,n] -> [n]
inline Var vecmat(Var x, Var a) {
    detail::require_same_tape(x, a);
    const Tensor& X = x.value();
    const Tensor& A = a.value();
    if (X.rank() != 1 || A.rank() != 2 || X.dim(0) != A.dim(0))
        throw std::invalid_argument("vecmat: bad shapes");
    const std::size_t k = A.dim(0), n = A.dim(1);
    Tensor out({n});
    for (std::size_t p = 0; p < k; ++p) {
        const double xv = X[p];
        const double* row = A.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += xv * row[j];
    }
    Tape::check_finite(out, "vecmat");
    Tape& t = *x.tape;
    const std::size_t xi = x.index, ai = a.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, ai, oi, k, n](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& X2 = tp.node(xi).value;
        const Tensor& A2 = tp.node(ai).value;
        Tensor& gX = tp.node(xi).grad;
        Tensor& gA = tp.node(ai).grad;
        for (std::size_t p = 0; p < k; ++p) {
            const double* row = A2.data() + p * n;
            double* grow = gA.data() + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += g[j] * row[j];
                grow[j] += X2[p] * g[j];
            }
            gX[p] += acc;
        }
    };
    return v;
}

// X[m,n] + v[n] broadcast over rows.
inline Var add_rowwise(Var x, Var vrow) {
    detail::require_same_tape(x, vrow);
    const Tensor& X = x.value();
    const Tensor& V = vrow.value();
    if (X.rank() != 2 || V.rank() != 1 || X.dim(1) != V.dim(0))
        throw std::invalid_argument("add_rowwise: bad shapes");
    const std::size_t m = X.dim(0), n = X.dim(1);
    Tensor out = X;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += V[j];
    Tape::check_finite(out, "add_rowwise");
    Tape& t = *x.tape;
    const std::size_t xi = x.index, vi = vrow.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, vi, oi, m, n](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gX = tp.node(xi).grad;
        Tensor& gV = tp.node(vi).grad;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                gX[i * n + j] += g[i * n + j];
                gV[j] += g[i * n + j];
            }
    };
    return v;
}

inline Var transpose(Var x) {
    const Tensor& X = x.value();
    if (X.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
    const std::size_t m = X.dim(0), n = X.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = X[i * n + j];
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, m, n](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gX[i * n + j] += g[j * m + i];
    };
    return v;
}

// Gather rows of a [V,d] table; duplicate ids accumulate on backward.
inline Var rows(Var table, std::vector<std::size_t> ids) {
    const Tensor& E = table.value();
    if (E.rank() != 2) throw std::invalid_argument("rows: table must be rank-2");
    const std::size_t d = E.dim(1);
    for (std::size_t id : ids)
        if (id >= E.dim(0)) throw std::out_of_range("rows: id out of range");
    Tensor out({ids.size(), d});
    for (std::size_t r = 0; r < ids.size(); ++r)
        std::copy_n(E.data() + ids[r] * d, d, out.data() + r * d);
    Tape& t = *table.tape;
    const std::size_t ti = table.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [ti, oi, d, ids = std::move(ids)](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gE = tp.node(ti).grad;
        for (std::size_t r = 0; r < ids.size(); ++r) {
            double* dst = gE.data() + ids[r] * d;
            const double* src = g.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    };
    return v;
}

// Single row of a matrix as a rank-1 vector.
inline Var row(Var x, std::size_t r) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || r >= X.dim(0)) throw std::invalid_argument("row: bad index");
    const std::size_t n = X.dim(1);
    Tensor out({n});
    std::copy_n(X.data() + r * n, n, out.data());
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, r, n](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t j = 0; j < n; ++j) gX[r * n + j] += g[j];
    };
    return v;
}

// Contiguous segment [i0, i1) of a rank-1 vector.
inline Var slice(Var x, std::size_t i0, std::size_t i1) {
    const Tensor& X = x.value();
    if (X.rank() != 1 || i1 > X.dim(0) || i0 >= i1) throw std::invalid_argument("slice: bad range");
    Tensor out({i1 - i0});
    std::copy(X.data() + i0, X.data() + i1, out.data());
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, i0](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t j = 0; j < g.size(); ++j) gX[i0 + j] += g[j];
    };
    return v;
}

// Column block [c0, c1) of a matrix.
inline Var slice_cols(Var x, std::size_t c0, std::size_t c1) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || c1 > X.dim(1) || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    const std::size_t m = X.dim(0), n = X.dim(1), w = c1 - c0;
    Tensor out({m, w});
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(X.data() + i * n + c0, w, out.data() + i * w);
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, c0, m, n, w](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gX[i * n + c0 + j] += g[i * w + j];
    };
    return v;
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Tape& t = *parts[0].tape;
    const std::size_t m = parts[0].value().dim(0);
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().rank() != 2 || p.value().dim(0) != m)
            throw std::invalid_argument("concat_cols: row mismatch");
        total += p.value().dim(1);
    }
    Tensor out({m, total});
    std::size_t off = 0;
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (node index, width)
    for (const Var& p : parts) {
        const Tensor& P = p.value();
        const std::size_t w = P.dim(1);
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(P.data() + i * w, w, out.data() + i * total + off);
        spans.emplace_back(p.index, w);
        off += w;
    }
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [oi, m, total, spans = std::move(spans)](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        std::size_t off2 = 0;
        for (const auto& [ni, w] : spans) {
            Tensor& gp = tp.node(ni).grad;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off2 + j];
            off2 += w;
        }
    };
    return v;
}

inline Var concat_vecs(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_vecs: empty");
    Tape& t = *parts[0].tape;
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().rank() != 1) throw std::invalid_argument("concat_vecs: rank-1 only");
        total += p.value().dim(0);
    }
    Tensor out({total});
    std::size_t off = 0;
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const Var& p : parts) {
        std::copy_n(p.value().data(), p.value().size(), out.data() + off);
        spans.emplace_back(p.index, p.value().size());
        off += p.value().size();
    }
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [oi, spans = std::move(spans)](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        std::size_t off2 = 0;
        for (const auto& [ni, len] : spans) {
            Tensor& gp = tp.node(ni).grad;
            for (std::size_t j = 0; j < len; ++j) gp[j] += g[off2 + j];
            off2 += len;
        }
    };
    return v;
}

// Stacks rank-1 rows into a matrix. Rows may be tape vars (gradient flows)
// or plain tensors (treated as constants) — finetuning mixes both.
struct RowSpec {
    Var var;      // used when var.valid()
    Tensor fixed; // otherwise

    RowSpec(Var v) : var(v) {}                       // NOLINT(google-explicit-constructor)
    RowSpec(Tensor t) : fixed(std::move(t)) {}       // NOLINT(google-explicit-constructor)
};

inline Var stack_rows(Tape& t, const std::vector<RowSpec>& specs) {
    if (specs.empty()) throw std::invalid_argument("stack_rows: empty");
    const std::size_t n = specs[0].var.valid() ? specs[0].var.value().dim(0) : specs[0].fixed.dim(0);
    Tensor out({specs.size(), n});
    std::vector<std::pair<std::size_t, std::size_t>> var_rows;  // (row, node index)
    for (std::size_t r = 0; r < specs.size(); ++r) {
        const Tensor& src = specs[r].var.valid() ? specs[r].var.value() : specs[r].fixed;
        if (src.rank() != 1 || src.dim(0) != n) throw std::invalid_argument("stack_rows: width mismatch");
        std::copy_n(src.data(), n, out.data() + r * n);
        if (specs[r].var.valid()) var_rows.emplace_back(r, specs[r].var.index);
    }
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [oi, n, var_rows = std::move(var_rows)](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        for (const auto& [r, ni] : var_rows) {
            Tensor& gr = tp.node(ni).grad;
            for (std::size_t j = 0; j < n; ++j) gr[j] += g[r * n + j];
        }
    };
    return v;
}

// Sliding windows of w consecutive rows, flattened: [T,d] -> [T-w+1, w*d].
inline Var im2col_rows(Var x, std::size_t w) {
    const Tensor& X = x.value();
    if (X.rank() != 2 || w == 0 || w > X.dim(0)) throw std::invalid_argument("im2col_rows: bad window");
    const std::size_t T = X.dim(0), d = X.dim(1), out_rows = T - w + 1;
    Tensor out({out_rows, w * d});
    for (std::size_t i = 0; i < out_rows; ++i)
        std::copy_n(X.data() + i * d, w * d, out.data() + i * w * d);
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, w, d, out_rows](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t i = 0; i < out_rows; ++i) {
            double* dst = gX.data() + i * d;
            const double* src = g.data() + i * w * d;
            for (std::size_t j = 0; j < w * d; ++j) dst[j] += src[j];
        }
    };
    return v;
}

// Row-wise softmax of X / tau. Rank-1 input is treated as a single row.
inline Var softmax_rows(Var x, double tau = 1.0) {
    if (tau <= 0.0) throw std::invalid_argument("softmax_rows: temperature must be positive");
    const Tensor& X = x.value();
    const std::size_t m = X.rank() == 2 ? X.dim(0) : 1;
    const std::size_t n = X.rank() == 2 ? X.dim(1) : X.dim(0);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = X.data() + i * n;
        double* yr = out.data() + i * n;
        double mx = xr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp((xr[j] - mx) / tau);
            z += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
    }
    Tape::check_finite(out, "softmax_rows");
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, m, n, tau](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& y = tp.node(oi).value;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t i = 0; i < m; ++i) {
            const double* yr = y.data() + i * n;
            const double* gr = g.data() + i * n;
            double dotgy = 0.0;
            for (std::size_t j = 0; j < n; ++j) dotgy += gr[j] * yr[j];
            double* gx = gX.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) gx[j] += yr[j] * (gr[j] - dotgy) / tau;
        }
    };
    return v;
}

// Weighted sum of per-row cross entropies against integer targets:
//   L = sum_i weights[i] * (logsumexp(X_i) - X_i[targets[i]])
// Computed from logits for stability; rank-1 input is a single row.
inline Var ce_rows(Var x, std::vector<std::size_t> targets, std::vector<double> weights) {
    const Tensor& X = x.value();
    const std::size_t m = X.rank() == 2 ? X.dim(0) : 1;
    const std::size_t n = X.rank() == 2 ? X.dim(1) : X.dim(0);
    if (targets.size() != m || weights.size() != m)
        throw std::invalid_argument("ce_rows: target/weight count mismatch");
    for (std::size_t tgt : targets)
        if (tgt >= n) throw std::out_of_range("ce_rows: target out of range");
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (weights[i] == 0.0) continue;
        const double* xr = X.data() + i * n;
        double mx = xr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
        loss += weights[i] * (mx + std::log(z) - xr[targets[i]]);
    }
    Tensor out = Tensor::scalar(loss);
    Tape::check_finite(out, "ce_rows");
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, m, n, targets = std::move(targets), weights = std::move(weights)](Tape& tp) {
        const double gl = tp.node(oi).grad[0];
        const Tensor& X2 = tp.node(xi).value;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t i = 0; i < m; ++i) {
            if (weights[i] == 0.0) continue;
            const double* xr = X2.data() + i * n;
            double* gx = gX.data() + i * n;
            double mx = xr[0];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
            double z = 0.0;
            for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
            const double wscale = gl * weights[i];
            for (std::size_t j = 0; j < n; ++j)
                gx[j] += wscale * (std::exp(xr[j] - mx) / z - (j == targets[i] ? 1.0 : 0.0));
        }
    };
    return v;
}

// Max over rows, per column: [m,n] -> [n]. Gradient goes to the first
// maximal row of each column.
inline Var max_pool_cols(Var x) {
    const Tensor& X = x.value();
    if (X.rank() != 2) throw std::invalid_argument("max_pool_cols: rank-2 only");
    const std::size_t m = X.dim(0), n = X.dim(1);
    Tensor out({n});
    std::vector<std::size_t> argmax(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        double best = X[j];
        std::size_t bi = 0;
        for (std::size_t i = 1; i < m; ++i)
            if (X[i * n + j] > best) {
                best = X[i * n + j];
                bi = i;
            }
        out[j] = best;
        argmax[j] = bi;
    }
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi, n, argmax = std::move(argmax)](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t j = 0; j < n; ++j) gX[argmax[j] * n + j] += g[j];
    };
    return v;
}

inline Var sum(Var x) {
    const Tensor& X = x.value();
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
    Tensor out = Tensor::scalar(s);
    Tape::check_finite(out, "sum");
    Tape& t = *x.tape;
    const std::size_t xi = x.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, oi](Tape& tp) {
        const double g = tp.node(oi).grad[0];
        Tensor& gX = tp.node(xi).grad;
        for (std::size_t i = 0; i < gX.size(); ++i) gX[i] += g;
    };
    return v;
}

// Row-wise layer norm with learned gain/bias.
inline Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Tensor& X = x.value();
    if (X.rank() != 2) throw std::invalid_argument("layer_norm_rows: rank-2 only");
    const std::size_t m = X.dim(0), n = X.dim(1);
    if (gain.value().size() != n || bias.value().size() != n)
        throw std::invalid_argument("layer_norm_rows: gain/bias size mismatch");
    Tensor out({m, n});
    Tensor xhat({m, n});
    std::vector<double> inv_std(m);
    const Tensor& G = gain.value();
    const Tensor& B = bias.value();
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = X.data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xr[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double xh = (xr[j] - mean) * is;
            xhat[i * n + j] = xh;
            out[i * n + j] = xh * G[j] + B[j];
        }
    }
    Tape::check_finite(out, "layer_norm_rows");
    Tape& t = *x.tape;
    const std::size_t xi = x.index, gi = gain.index, bi = bias.index;
    Var v = t.push(std::move(out), nullptr);
    const std::size_t oi = v.index;
    t.node(oi).backward = [xi, gi, bi, oi, m, n, xhat = std::move(xhat),
                           inv_std = std::move(inv_std)](Tape& tp) {
        const Tensor& g = tp.node(oi).grad;
        const Tensor& G2 = tp.node(gi).value;
        Tensor& gX = tp.node(xi).grad;
        Tensor& gG = tp.node(gi).grad;
        Tensor& gB = tp.node(bi).grad;
        for (std::size_t i = 0; i < m; ++i) {
            const double* gr = g.data() + i * n;
            const double* xh = xhat.data() + i * n;
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double dy = gr[j] * G2[j];
                sum_dy += dy;
                sum_dy_xh += dy * xh[j];
                gG[j] += gr[j] * xh[j];
                gB[j] += gr[j];
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            double* gx = gX.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double dy = gr[j] * G2[j];
                gx[j] += inv_std[i] * (dy - inv_n * sum_dy - xh[j] * inv_n * sum_dy_xh);
            }
        }
    };
    return v;
}

// Eq.-11 style temperature softmax over a logit vector.
inline Var softmax_temperature(Var logits, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("softmax_temperature: tau must be > 0");
    return softmax_rows(logits, tau);
}

// Plain-math counterpart for non-tape callers.
inline std::vector<double> softmax_temperature(const std::vector<double>& logits, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("softmax_temperature: tau must be > 0");
    if (logits.empty()) throw std::invalid_argument("softmax_temperature: empty logits");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / tau);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

}  // namespace maskinfill
