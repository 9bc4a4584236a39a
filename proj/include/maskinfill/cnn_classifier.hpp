#pragma once

// Convolutional text classifier with filter widths {3,4,5} and max-over-time
// pooling. Accepts hard token ids or soft (distribution-valued) tokens as
// embedding-weighted mixtures, which is what lets discriminator gradients
// flow back through soft-sampled sentences.

#include <stdexcept>
#include <string>
#include <vector>

#include "maskinfill/adam.hpp"
#include "maskinfill/corpus.hpp"
#include "maskinfill/layers.hpp"
#include "maskinfill/serialize.hpp"

namespace maskinfill {

inline constexpr std::size_t kCnnFilterWidths[3] = {3, 4, 5};
inline constexpr std::size_t kCnnMinLength = 5;  // largest filter

inline Tensor one_hot_row(std::size_t size, std::size_t index) {
    Tensor t({size});
    t[index] = 1.0;
    return t;
}

struct CnnClassifierConfig {
    std::size_t embed_dim = 64;
    std::size_t filters_per_width = 32;  // n_f
};

struct CnnClassifierParams {
    CnnClassifierConfig config;
    Tensor embedding;                 // [V, d]
    Tensor conv_w[3];                 // [w*d, n_f] for w in {3,4,5}
    Tensor conv_b[3];                 // [n_f]
    Tensor out_proj;                  // [|A|, 3*n_f]
    Tensor out_bias;                  // [|A|]
    bool trained = false;

    static CnnClassifierParams init(std::size_t vocab_size, const CnnClassifierConfig& cfg,
                                    std::uint64_t seed) {
        Rng rng(fnv1a64("cnn-classifier-init", seed));
        CnnClassifierParams p;
        p.config = cfg;
        p.embedding = init_normal({vocab_size, cfg.embed_dim}, rng);
        for (int i = 0; i < 3; ++i) {
            p.conv_w[i] = init_normal({kCnnFilterWidths[i] * cfg.embed_dim, cfg.filters_per_width}, rng);
            p.conv_b[i] = Tensor({cfg.filters_per_width});
        }
        p.out_proj = init_normal({kNumAttributes, 3 * cfg.filters_per_width}, rng);
        p.out_bias = Tensor({kNumAttributes});
        return p;
    }

    NamedTensors named_params() {
        NamedTensors out;
        out.emplace_back("embedding", &embedding);
        for (int i = 0; i < 3; ++i) {
            const std::string w = std::to_string(kCnnFilterWidths[i]);
            out.emplace_back("conv" + w + ".w", &conv_w[i]);
            out.emplace_back("conv" + w + ".b", &conv_b[i]);
        }
        out.emplace_back("out_proj", &out_proj);
        out.emplace_back("out_bias", &out_bias);
        return out;
    }

    struct Bound {
        Var embedding;
        Var conv_w[3], conv_b[3];
        Var out_proj, out_bias;
    };

    Bound bind(Tape& tape) const {
        Bound b{tape.leaf(embedding), {}, {}, Var{}, Var{}};
        for (int i = 0; i < 3; ++i) {
            b.conv_w[i] = tape.leaf(conv_w[i]);
            b.conv_b[i] = tape.leaf(conv_b[i]);
        }
        b.out_proj = tape.leaf(out_proj);
        b.out_bias = tape.leaf(out_bias);
        return b;
    }

    void save(const std::string& path, const std::string& stage, std::uint64_t vocab_hash,
              std::uint64_t config_hash) const {
        NamedTensors named = const_cast<CnnClassifierParams*>(this)->named_params();
        std::vector<std::pair<std::string, const Tensor*>> tensors;
        for (auto& [name, t] : named) tensors.emplace_back(name, t);
        save_checkpoint(path, CheckpointMeta{stage, vocab_hash, config_hash}, tensors);
    }

    static CnnClassifierParams load(const std::string& path, std::size_t vocab_size,
                                    const CnnClassifierConfig& cfg, std::uint64_t vocab_hash) {
        CnnClassifierParams p = init(vocab_size, cfg, 0);
        load_checkpoint(path, p.named_params(), vocab_hash);
        p.trained = true;
        return p;
    }
};

namespace detail {

// Shared trunk over an embedded sequence [T, d], T >= 5 after padding.
inline Var cnn_logits_from_embeddings(const CnnClassifierParams::Bound& p, Var emb) {
    std::vector<Var> pooled;
    pooled.reserve(3);
    for (int i = 0; i < 3; ++i) {
        Var windows = im2col_rows(emb, kCnnFilterWidths[i]);
        Var conv = relu(add_rowwise(matmul(windows, p.conv_w[i]), p.conv_b[i]));
        pooled.push_back(max_pool_cols(conv));
    }
    Var features = concat_vecs(pooled);
    return add(matvec(p.out_proj, features), p.out_bias);
}

inline Var cnn_logits_hard(const CnnClassifierParams::Bound& p, std::vector<std::size_t> ids) {
    while (ids.size() < kCnnMinLength) ids.push_back(kPadId);
    return cnn_logits_from_embeddings(p, rows(p.embedding, ids));
}

// Soft rows are per-position distributions over the vocabulary; the caller
// pads to kCnnMinLength with one-hot <pad> rows before stacking.
inline Var cnn_logits_soft(const CnnClassifierParams::Bound& p, Var soft_rows) {
    if (soft_rows.value().dim(0) < kCnnMinLength)
        throw std::invalid_argument("cnn_logits_soft: input shorter than the largest filter");
    return cnn_logits_from_embeddings(p, matmul(soft_rows, p.embedding));
}

}  // namespace detail

// Distribution over attributes for a hard token sequence.
inline std::vector<double> cnn_classify(const std::vector<std::size_t>& ids,
                                        const CnnClassifierParams& params) {
    Tape tape;
    auto bound = params.bind(tape);
    Var probs = softmax_rows(detail::cnn_logits_hard(bound, ids));
    return {probs.value().data(), probs.value().data() + probs.value().size()};
}

// Distribution over attributes for per-position vocabulary distributions.
inline std::vector<double> cnn_classify_soft(const std::vector<std::vector<double>>& soft,
                                             const CnnClassifierParams& params) {
    Tape tape;
    auto bound = params.bind(tape);
    const std::size_t vocab = params.embedding.dim(0);
    std::vector<RowSpec> rows_spec;
    rows_spec.reserve(std::max(soft.size(), kCnnMinLength));
    for (const auto& dist : soft) {
        if (dist.size() != vocab) throw std::invalid_argument("cnn_classify_soft: distribution size");
        rows_spec.emplace_back(Tensor::row(dist));
    }
    while (rows_spec.size() < kCnnMinLength) rows_spec.emplace_back(one_hot_row(vocab, kPadId));
    Var probs = softmax_rows(detail::cnn_logits_soft(bound, stack_rows(tape, rows_spec)));
    return {probs.value().data(), probs.value().data() + probs.value().size()};
}

inline AttributeId cnn_predict(const std::vector<std::size_t>& ids,
                               const CnnClassifierParams& params) {
    const auto probs = cnn_classify(ids, params);
    return probs[kPositive] > probs[kNegative] ? kPositive : kNegative;
}

inline double cnn_accuracy(const Corpus& corpus, const CnnClassifierParams& params) {
    if (corpus.empty()) return 0.0;
    std::size_t correct = 0;
    for (const LabeledSentence& s : corpus) correct += cnn_predict(s.ids(), params) == s.attribute;
    return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

struct CnnTrainStats {
    double held_out_accuracy = 0.0;
    double final_train_loss = 0.0;
};

inline CnnTrainStats train_cnn(CnnClassifierParams& params, const Corpus& train,
                               const Corpus& held_out, const TrainHyper& hyper,
                               std::uint64_t seed) {
    bool has_neg = false, has_pos = false;
    for (const LabeledSentence& s : train) {
        has_neg |= s.attribute == kNegative;
        has_pos |= s.attribute == kPositive;
    }
    if (!has_neg || !has_pos)
        throw std::invalid_argument("train_cnn: corpus must contain both attributes");

    Rng rng(fnv1a64("train-cnn", seed));
    Adam opt(hyper.learning_rate);
    CnnTrainStats stats;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& batch : make_batches(train.size(), hyper.batch_size, rng)) {
            Tape tape;
            auto bound = params.bind(tape);
            Var total = tape.leaf(Tensor::scalar(0.0));
            for (std::size_t idx : batch) {
                Var logits = detail::cnn_logits_hard(bound, train[idx].ids());
                total = add(total, ce_rows(logits,
                                           {static_cast<std::size_t>(train[idx].attribute)}, {1.0}));
            }
            Var loss = scale(total, 1.0 / static_cast<double>(batch.size()));
            tape.backward(loss);
            epoch_loss += loss.value().item() * static_cast<double>(batch.size());

            std::vector<Tensor*> ps;
            std::vector<const Tensor*> gs;
            for (auto& [name, t] : params.named_params()) ps.push_back(t);
            std::vector<Var> leafs = {bound.embedding};
            for (int i = 0; i < 3; ++i) {
                leafs.push_back(bound.conv_w[i]);
                leafs.push_back(bound.conv_b[i]);
            }
            leafs.push_back(bound.out_proj);
            leafs.push_back(bound.out_bias);
            for (Var v : leafs) gs.push_back(&v.grad());
            opt.step(ps, gs);
        }
        stats.final_train_loss = epoch_loss / static_cast<double>(train.size());
    }
    params.trained = true;
    stats.held_out_accuracy = held_out.empty() ? 0.0 : cnn_accuracy(held_out, params);
    return stats;
}

}  // namespace maskinfill
