#pragma once

// Parameterized layers built on the tape: gated recurrent (LSTM) step and
// the post-norm transformer encoder block, plus initialization helpers.

#include <stdexcept>
#include <string>
#include <vector>

#include "maskinfill/rng.hpp"
#include "maskinfill/tape.hpp"
#include "maskinfill/tensor.hpp"

namespace maskinfill {

inline Tensor init_normal(std::vector<std::size_t> shape, Rng& rng, double stddev = 0.08) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;
using NamedTensorsConst = std::vector<std::pair<std::string, const Tensor*>>;

inline NamedTensorsConst as_const(const NamedTensors& named) {
    NamedTensorsConst out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) out.emplace_back(name, t);
    return out;
}

// Walks a flat leaf-var list while a model maps it onto its Bound struct.
// The list order is always the model's named_params() order, which is the
// one ordering shared by checkpoints, Adam state and gradient checks.
struct VarCursor {
    const std::vector<Var>& vars;
    std::size_t next_index = 0;

    Var next() {
        if (next_index >= vars.size()) throw std::logic_error("VarCursor: leaf list exhausted");
        return vars[next_index++];
    }

    void finish() const {
        if (next_index != vars.size()) throw std::logic_error("VarCursor: leaf list not consumed");
    }
};

// Leafs for every tensor of a model, in named_params() order.
inline std::vector<Var> make_leafs(Tape& tape, const NamedTensors& named) {
    std::vector<Var> leafs;
    leafs.reserve(named.size());
    for (const auto& [name, t] : named) leafs.push_back(tape.leaf(*t));
    return leafs;
}

inline std::vector<Tensor> tensors_of(const NamedTensors& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [name, t] : named) out.push_back(*t);
    return out;
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate order in the stacked weight rows: input, forget, cell, out.
// ---------------------------------------------------------------------------

struct LstmParams {
    Tensor w_input;   // [4h, d_in]
    Tensor w_hidden;  // [4h, h]
    Tensor bias;      // [4h]

    static LstmParams init(std::size_t d_in, std::size_t d_hidden, Rng& rng) {
        LstmParams p;
        p.w_input = init_normal({4 * d_hidden, d_in}, rng);
        p.w_hidden = init_normal({4 * d_hidden, d_hidden}, rng);
        p.bias = Tensor({4 * d_hidden});
        return p;
    }

    void collect(const std::string& prefix, NamedTensors& out) {
        out.emplace_back(prefix + ".w_input", &w_input);
        out.emplace_back(prefix + ".w_hidden", &w_hidden);
        out.emplace_back(prefix + ".bias", &bias);
    }

    struct Bound {
        Var w_input, w_hidden, bias;
        std::size_t hidden = 0;
    };

    static Bound bind_vars(VarCursor& cur) {
        Bound b{cur.next(), cur.next(), cur.next(), 0};
        b.hidden = b.w_hidden.value().dim(1);
        return b;
    }
};

struct LstmState {
    Var h, c;
};

inline LstmState lstm_step(const LstmParams::Bound& p, Var x, const LstmState& prev) {
    const std::size_t h = p.hidden;
    Var z = add(add(matvec(p.w_input, x), matvec(p.w_hidden, prev.h)), p.bias);
    Var gate_i = sigmoid(slice(z, 0, h));
    Var gate_f = sigmoid(slice(z, h, 2 * h));
    Var gate_g = tanh(slice(z, 2 * h, 3 * h));
    Var gate_o = sigmoid(slice(z, 3 * h, 4 * h));
    Var c = add(mul(gate_f, prev.c), mul(gate_i, gate_g));
    return LstmState{mul(gate_o, tanh(c)), c};
}

inline LstmState lstm_initial_state(Tape& tape, std::size_t hidden) {
    return LstmState{tape.leaf(Tensor({hidden})), tape.leaf(Tensor({hidden}))};
}

// ---------------------------------------------------------------------------
// Transformer encoder block, post-norm, bidirectional (unmasked) attention.
// ---------------------------------------------------------------------------

struct EncoderBlockParams {
    Tensor w_q, w_k, w_v, w_o;      // [d_m, d_m]
    Tensor b_q, b_k, b_v, b_o;      // [d_m]
    Tensor ln1_gain, ln1_bias;      // [d_m]
    Tensor ff_w1;                   // [d_m, d_ff]
    Tensor ff_b1;                   // [d_ff]
    Tensor ff_w2;                   // [d_ff, d_m]
    Tensor ff_b2;                   // [d_m]
    Tensor ln2_gain, ln2_bias;      // [d_m]
    std::size_t heads = 4;

    static EncoderBlockParams init(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng) {
        if (d_model % heads != 0)
            throw std::invalid_argument("EncoderBlockParams: d_model must be divisible by heads");
        EncoderBlockParams p;
        p.w_q = init_normal({d_model, d_model}, rng);
        p.w_k = init_normal({d_model, d_model}, rng);
        p.w_v = init_normal({d_model, d_model}, rng);
        p.w_o = init_normal({d_model, d_model}, rng);
        p.b_q = Tensor({d_model});
        p.b_k = Tensor({d_model});
        p.b_v = Tensor({d_model});
        p.b_o = Tensor({d_model});
        p.ln1_gain = Tensor({d_model}, 1.0);
        p.ln1_bias = Tensor({d_model});
        p.ff_w1 = init_normal({d_model, d_ff}, rng);
        p.ff_b1 = Tensor({d_ff});
        p.ff_w2 = init_normal({d_ff, d_model}, rng);
        p.ff_b2 = Tensor({d_model});
        p.ln2_gain = Tensor({d_model}, 1.0);
        p.ln2_bias = Tensor({d_model});
        p.heads = heads;
        return p;
    }

    void collect(const std::string& prefix, NamedTensors& out) {
        out.emplace_back(prefix + ".w_q", &w_q);
        out.emplace_back(prefix + ".w_k", &w_k);
        out.emplace_back(prefix + ".w_v", &w_v);
        out.emplace_back(prefix + ".w_o", &w_o);
        out.emplace_back(prefix + ".b_q", &b_q);
        out.emplace_back(prefix + ".b_k", &b_k);
        out.emplace_back(prefix + ".b_v", &b_v);
        out.emplace_back(prefix + ".b_o", &b_o);
        out.emplace_back(prefix + ".ln1_gain", &ln1_gain);
        out.emplace_back(prefix + ".ln1_bias", &ln1_bias);
        out.emplace_back(prefix + ".ff_w1", &ff_w1);
        out.emplace_back(prefix + ".ff_b1", &ff_b1);
        out.emplace_back(prefix + ".ff_w2", &ff_w2);
        out.emplace_back(prefix + ".ff_b2", &ff_b2);
        out.emplace_back(prefix + ".ln2_gain", &ln2_gain);
        out.emplace_back(prefix + ".ln2_bias", &ln2_bias);
    }

    struct Bound {
        Var w_q, w_k, w_v, w_o, b_q, b_k, b_v, b_o;
        Var ln1_gain, ln1_bias, ff_w1, ff_b1, ff_w2, ff_b2, ln2_gain, ln2_bias;
        std::size_t heads = 0;
    };

    Bound bind(Tape& tape) const {
        return Bound{tape.leaf(w_q),      tape.leaf(w_k),      tape.leaf(w_v),
                     tape.leaf(w_o),      tape.leaf(b_q),      tape.leaf(b_k),
                     tape.leaf(b_v),      tape.leaf(b_o),      tape.leaf(ln1_gain),
                     tape.leaf(ln1_bias), tape.leaf(ff_w1),    tape.leaf(ff_b1),
                     tape.leaf(ff_w2),    tape.leaf(ff_b2),    tape.leaf(ln2_gain),
                     tape.leaf(ln2_bias), heads};
    }
};

inline Var encoder_block_forward(const EncoderBlockParams::Bound& p, Var x) {
    const std::size_t d_model = x.value().dim(1);
    const std::size_t d_head = d_model / p.heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(d_head));

    Var q = add_rowwise(matmul(x, p.w_q), p.b_q);
    Var k = add_rowwise(matmul(x, p.w_k), p.b_k);
    Var v = add_rowwise(matmul(x, p.w_v), p.b_v);

    std::vector<Var> head_ctx;
    head_ctx.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        const std::size_t c0 = h * d_head, c1 = (h + 1) * d_head;
        Var qh = slice_cols(q, c0, c1);
        Var kh = slice_cols(k, c0, c1);
        Var vh = slice_cols(v, c0, c1);
        Var att = softmax_rows(scale(matmul(qh, transpose(kh)), att_scale));
        head_ctx.push_back(matmul(att, vh));
    }
    Var ctx = concat_cols(head_ctx);
    Var attn_out = add_rowwise(matmul(ctx, p.w_o), p.b_o);
    Var x1 = layer_norm_rows(add(x, attn_out), p.ln1_gain, p.ln1_bias);

    Var ff = add_rowwise(matmul(gelu(add_rowwise(matmul(x1, p.ff_w1), p.ff_b1)), p.ff_w2), p.ff_b2);
    return layer_norm_rows(add(x1, ff), p.ln2_gain, p.ln2_bias);
}

// ---------------------------------------------------------------------------
// Shared training hyperparameters.
// ---------------------------------------------------------------------------

struct TrainHyper {
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
};

// Deterministic epoch batching: shuffled index chunks, last partial kept.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                          Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

}  // namespace maskinfill
