#pragma once

// Bidirectional-recurrent attention classifier. Trains on labeled sentences
// and serves two mask-stage roles: scoring candidate n-grams during
// vocabulary refinement and supplying per-token attention weights for the
// fallback masker.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskinfill/adam.hpp"
#include "maskinfill/corpus.hpp"
#include "maskinfill/layers.hpp"
#include "maskinfill/markers.hpp"
#include "maskinfill/serialize.hpp"

namespace maskinfill {

struct NoMaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AttnClassifierConfig {
    std::size_t embed_dim = 64;   // d_e
    std::size_t hidden_dim = 64;  // d_h per direction
    std::size_t attn_dim = 64;    // d_a
};

struct AttnClassifierParams {
    AttnClassifierConfig config;
    Tensor embedding;   // [V, d_e]
    LstmParams forward_cell;
    LstmParams backward_cell;
    Tensor attn_proj;   // W,  [d_a, 2*d_h]
    Tensor attn_query;  // w,  [d_a]
    Tensor out_proj;    // W', [|A|, 2*d_h]
    bool trained = false;

    static AttnClassifierParams init(std::size_t vocab_size, const AttnClassifierConfig& cfg,
                                     std::uint64_t seed) {
        Rng rng(fnv1a64("attn-classifier-init", seed));
        AttnClassifierParams p;
        p.config = cfg;
        p.embedding = init_normal({vocab_size, cfg.embed_dim}, rng);
        p.forward_cell = LstmParams::init(cfg.embed_dim, cfg.hidden_dim, rng);
        p.backward_cell = LstmParams::init(cfg.embed_dim, cfg.hidden_dim, rng);
        p.attn_proj = init_normal({cfg.attn_dim, 2 * cfg.hidden_dim}, rng);
        p.attn_query = init_normal({cfg.attn_dim}, rng);
        p.out_proj = init_normal({kNumAttributes, 2 * cfg.hidden_dim}, rng);
        return p;
    }

    NamedTensors named_params() {
        NamedTensors out;
        out.emplace_back("embedding", &embedding);
        forward_cell.collect("lstm_fwd", out);
        backward_cell.collect("lstm_bwd", out);
        out.emplace_back("attn_proj", &attn_proj);
        out.emplace_back("attn_query", &attn_query);
        out.emplace_back("out_proj", &out_proj);
        return out;
    }

    struct Bound {
        Var embedding;
        LstmParams::Bound fwd, bwd;
        Var attn_proj, attn_query, out_proj;
    };

    Bound bind(Tape& tape) const {
        return Bound{tape.leaf(embedding), forward_cell.bind(tape), backward_cell.bind(tape),
                     tape.leaf(attn_proj), tape.leaf(attn_query), tape.leaf(out_proj)};
    }

    void save(const std::string& path, std::uint64_t vocab_hash, std::uint64_t config_hash) const {
        NamedTensors named = const_cast<AttnClassifierParams*>(this)->named_params();
        std::vector<std::pair<std::string, const Tensor*>> tensors;
        for (auto& [name, t] : named) tensors.emplace_back(name, t);
        save_checkpoint(path, CheckpointMeta{"cls", vocab_hash, config_hash}, tensors);
    }

    static AttnClassifierParams load(const std::string& path, std::size_t vocab_size,
                                     const AttnClassifierConfig& cfg, std::uint64_t vocab_hash) {
        AttnClassifierParams p = init(vocab_size, cfg, 0);
        load_checkpoint(path, p.named_params(), vocab_hash);
        p.trained = true;
        return p;
    }
};

// Eq. 3-5 outputs for one sentence.
struct AttentionProfile {
    std::vector<double> weights;  // a, sums to 1
    std::vector<double> context;  // c, length 2*d_h
    std::vector<double> probs;    // y over attributes
};

namespace detail {

struct ClassifierGraph {
    Var attention;  // [T]
    Var context;    // [2h]
    Var logits;     // [|A|]
};

inline ClassifierGraph classifier_forward(Tape& tape, const AttnClassifierParams::Bound& p,
                                          const std::vector<std::size_t>& ids) {
    if (ids.empty()) throw std::invalid_argument("classify: empty sentence");
    const std::size_t T = ids.size();
    Var emb = rows(p.embedding, ids);

    std::vector<Var> fwd_h(T), bwd_h(T);
    LstmState state = lstm_initial_state(tape, p.fwd.hidden);
    for (std::size_t t = 0; t < T; ++t) {
        state = lstm_step(p.fwd, row(emb, t), state);
        fwd_h[t] = state.h;
    }
    state = lstm_initial_state(tape, p.bwd.hidden);
    for (std::size_t t = T; t-- > 0;) {
        state = lstm_step(p.bwd, row(emb, t), state);
        bwd_h[t] = state.h;
    }
    std::vector<RowSpec> h_rows;
    h_rows.reserve(T);
    for (std::size_t t = 0; t < T; ++t)
        h_rows.emplace_back(concat_vecs({fwd_h[t], bwd_h[t]}));
    Var H = stack_rows(tape, h_rows);  // [T, 2h]

    Var scores = vecmat(p.attn_query, tanh(matmul(p.attn_proj, transpose(H))));  // [T]
    Var attention = softmax_rows(scores);
    Var context = vecmat(attention, H);
    Var logits = matvec(p.out_proj, context);
    return ClassifierGraph{attention, context, logits};
}

}  // namespace detail

inline AttentionProfile classify(const std::vector<std::size_t>& ids,
                                 const AttnClassifierParams& params) {
    Tape tape;
    auto bound = params.bind(tape);
    auto graph = detail::classifier_forward(tape, bound, ids);
    Var probs = softmax_rows(graph.logits);
    AttentionProfile profile;
    const Tensor& a = graph.attention.value();
    profile.weights.assign(a.data(), a.data() + a.size());
    const Tensor& c = graph.context.value();
    profile.context.assign(c.data(), c.data() + c.size());
    const Tensor& y = probs.value();
    profile.probs.assign(y.data(), y.data() + y.size());
    return profile;
}

inline AttentionProfile classify(const LabeledSentence& sentence,
                                 const AttnClassifierParams& params) {
    return classify(sentence.ids(), params);
}

struct ClassifierTrainStats {
    double held_out_accuracy = 0.0;
    double final_train_loss = 0.0;
};

inline double classifier_accuracy(const Corpus& corpus, const AttnClassifierParams& params) {
    if (corpus.empty()) return 0.0;
    std::size_t correct = 0;
    for (const LabeledSentence& s : corpus) {
        const AttentionProfile prof = classify(s, params);
        const AttributeId pred = prof.probs[kPositive] > prof.probs[kNegative] ? kPositive : kNegative;
        correct += pred == s.attribute;
    }
    return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

// Cross-entropy training; deterministic for a fixed seed and corpus order.
inline ClassifierTrainStats train_classifier(AttnClassifierParams& params, const Corpus& train,
                                             const Corpus& held_out, const TrainHyper& hyper,
                                             std::uint64_t seed) {
    bool has_neg = false, has_pos = false;
    for (const LabeledSentence& s : train) {
        has_neg |= s.attribute == kNegative;
        has_pos |= s.attribute == kPositive;
    }
    if (!has_neg || !has_pos)
        throw std::invalid_argument("train_classifier: corpus must contain both attributes");

    Rng rng(fnv1a64("train-classifier", seed));
    Adam opt(hyper.learning_rate);
    ClassifierTrainStats stats;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& batch : make_batches(train.size(), hyper.batch_size, rng)) {
            Tape tape;
            auto bound = params.bind(tape);
            Var total = tape.leaf(Tensor::scalar(0.0));
            for (std::size_t idx : batch) {
                auto graph = detail::classifier_forward(tape, bound, train[idx].ids());
                total = add(total, ce_rows(graph.logits,
                                           {static_cast<std::size_t>(train[idx].attribute)}, {1.0}));
            }
            Var loss = scale(total, 1.0 / static_cast<double>(batch.size()));
            tape.backward(loss);
            epoch_loss += loss.value().item() * static_cast<double>(batch.size());

            NamedTensors named = params.named_params();
            std::vector<Tensor*> ps;
            std::vector<const Tensor*> gs;
            std::vector<Var> leafs = {bound.embedding,
                                      bound.fwd.w_input, bound.fwd.w_hidden, bound.fwd.bias,
                                      bound.bwd.w_input, bound.bwd.w_hidden, bound.bwd.bias,
                                      bound.attn_proj, bound.attn_query, bound.out_proj};
            for (auto& [name, t] : named) ps.push_back(t);
            for (Var v : leafs) gs.push_back(&v.grad());
            opt.step(ps, gs);
        }
        stats.final_train_loss = epoch_loss / static_cast<double>(train.size());
    }
    params.trained = true;
    stats.held_out_accuracy = held_out.empty() ? 0.0 : classifier_accuracy(held_out, params);
    return stats;
}

// Scores a bare n-gram as a standalone sentence: probability that it carries
// attribute a (the Eq. 6 "p").
inline NgramScorer make_ngram_scorer(const AttnClassifierParams& params, const TokenVocab& vocab) {
    if (!params.trained)
        throw std::invalid_argument("make_ngram_scorer: classifier is not trained");
    return [&params, &vocab](const std::vector<std::string>& ngram, AttributeId a) {
        require_attribute(a);
        std::vector<std::size_t> ids;
        ids.reserve(ngram.size());
        for (const std::string& w : ngram) ids.push_back(vocab.id_of(w));
        return classify(ids, params).probs[a];
    };
}

// Masks positions whose attention weight is strictly above the sentence
// mean. Uniform weights leave nothing above the mean; the argmax position
// (lowest index on ties) is masked instead so the fallback always masks
// at least one token. Single-token sentences cannot keep the content set
// non-empty and raise NoMaskError.
inline MaskedSentence mask_by_attention(const LabeledSentence& sentence,
                                        const AttnClassifierParams& params) {
    if (!params.trained)
        throw std::invalid_argument("mask_by_attention: classifier is not trained");
    if (sentence.size() < 2)
        throw NoMaskError("mask_by_attention: sentence too short to mask and keep content");
    const AttentionProfile prof = classify(sentence, params);
    const std::size_t T = prof.weights.size();
    double mean = 0.0;
    for (double w : prof.weights) mean += w;
    mean /= static_cast<double>(T);

    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < T; ++i)
        if (prof.weights[i] > mean) positions.push_back(i);
    if (positions.empty()) {
        const std::size_t argmax =
            std::max_element(prof.weights.begin(), prof.weights.end()) - prof.weights.begin();
        positions.push_back(argmax);
    }
    return make_masked(sentence, std::move(positions), MaskMethod::kAttention);
}

}  // namespace maskinfill
