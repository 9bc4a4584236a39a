#pragma once

// Frequency-ratio attribute-marker mining, classifier-based refinement and
// dictionary-driven mask construction.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "maskinfill/corpus.hpp"

namespace maskinfill {

inline std::string join_ngram(const std::vector<std::string>& words,
                              std::size_t from, std::size_t n) {
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) key += ' ';
        key += words[from + i];
    }
    return key;
}

// Exact multiset counts of contiguous token n-grams, per attribute.
class NgramIndex {
public:
    NgramIndex() = default;
    explicit NgramIndex(std::size_t n_max) : n_max_(n_max) {}

    std::size_t n_max() const { return n_max_; }

    long count(const std::string& ngram, AttributeId a) const {
        require_attribute(a);
        auto it = counts_[a].find(ngram);
        return it == counts_[a].end() ? 0 : it->second;
    }

    long opposing_count(const std::string& ngram, AttributeId a) const {
        require_attribute(a);
        long total = 0;
        for (AttributeId other = 0; other < kNumAttributes; ++other)
            if (other != a) total += count(ngram, other);
        return total;
    }

    void add_sentence(const LabeledSentence& s) {
        auto& table = counts_[s.attribute];
        std::vector<std::string> words;
        words.reserve(s.size());
        for (const Token& t : s.tokens) words.push_back(t.surface);
        for (std::size_t n = 1; n <= std::min(n_max_, words.size()); ++n)
            for (std::size_t i = 0; i + n <= words.size(); ++i) ++table[join_ngram(words, i, n)];
    }

    // Sorted union of every counted n-gram across attributes.
    std::vector<std::string> all_ngrams() const {
        std::set<std::string> keys;
        for (const auto& table : counts_)
            for (const auto& [k, _] : table) keys.insert(k);
        return {keys.begin(), keys.end()};
    }

private:
    std::size_t n_max_ = 4;
    std::unordered_map<std::string, long> counts_[kNumAttributes];
};

inline NgramIndex build_ngram_index(const Corpus& corpus, std::size_t n_max = 4) {
    if (corpus.empty()) throw std::invalid_argument("build_ngram_index: empty corpus");
    if (n_max < 1) throw std::invalid_argument("build_ngram_index: n_max must be >= 1");
    NgramIndex index(n_max);
    for (const LabeledSentence& s : corpus) index.add_sentence(s);
    return index;
}

// Smoothed frequency ratio of an n-gram under attribute a vs. the rest.
inline double salience(const std::string& ngram, AttributeId a,
                       const NgramIndex& index, double lambda = 1.0) {
    if (lambda < 0.0) throw std::invalid_argument("salience: lambda must be >= 0");
    const double denom = static_cast<double>(index.opposing_count(ngram, a)) + lambda;
    if (denom == 0.0)
        throw std::invalid_argument("salience: lambda = 0 with zero opposing count divides by zero");
    return (static_cast<double>(index.count(ngram, a)) + lambda) / denom;
}

struct MarkerCandidate {
    std::vector<std::string> ngram;
    AttributeId attribute = kNegative;
    double salience_raw = 0.0;
    double probability = 1.0;  // classifier p from refinement; 1 before it
    double salience = 0.0;     // salience_raw * probability

    std::string key() const { return join_ngram(ngram, 0, ngram.size()); }
};

class MarkerVocabulary {
public:
    MarkerVocabulary() = default;
    MarkerVocabulary(double gamma_c, double gamma, double lambda)
        : gamma_c_(gamma_c), gamma_(gamma), lambda_(lambda) {}

    double gamma_c() const { return gamma_c_; }
    double gamma() const { return gamma_; }
    double lambda() const { return lambda_; }

    const std::vector<MarkerCandidate>& markers(AttributeId a) const {
        require_attribute(a);
        return markers_[a];
    }

    std::size_t total_size() const { return markers_[0].size() + markers_[1].size(); }

    void add(MarkerCandidate c) {
        require_attribute(c.attribute);
        const AttributeId a = c.attribute;
        markers_[a].push_back(std::move(c));
        lookup_dirty_ = true;
    }

    bool contains(AttributeId a, const std::string& key) const {
        rebuild_lookup();
        return lookup_[a].count(key) > 0;
    }

    std::size_t longest_ngram(AttributeId a) const {
        rebuild_lookup();
        return longest_[a];
    }

    // Descending salience; ties broken by attribute then n-gram text so the
    // serialization is reproducible.
    void sort_markers() {
        for (auto& v : markers_)
            std::sort(v.begin(), v.end(), [](const MarkerCandidate& x, const MarkerCandidate& y) {
                if (x.salience != y.salience) return x.salience > y.salience;
                return x.key() < y.key();
            });
    }

    std::string serialize() const {
        std::vector<const MarkerCandidate*> all;
        for (const auto& v : markers_)
            for (const auto& c : v) all.push_back(&c);
        std::sort(all.begin(), all.end(), [](const MarkerCandidate* x, const MarkerCandidate* y) {
            if (x->salience != y->salience) return x->salience > y->salience;
            if (x->attribute != y->attribute) return x->attribute < y->attribute;
            return x->key() < y->key();
        });
        std::string out;
        char buf[128];
        for (const MarkerCandidate* c : all) {
            std::snprintf(buf, sizeof(buf), "%d\t%s\t%.17g\t%.17g\t%.17g\n",
                          c->attribute, c->key().c_str(), c->salience_raw, c->probability,
                          c->salience);
            out += buf;
        }
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write marker vocabulary: " + path);
        os << serialize();
        if (!os) throw std::runtime_error("marker vocabulary write failed: " + path);
    }

    static MarkerVocabulary load(const std::string& path, double gamma_c, double gamma, double lambda) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot read marker vocabulary: " + path);
        MarkerVocabulary v(gamma_c, gamma, lambda);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            MarkerCandidate c;
            std::string ngram_text;
            std::string field;
            std::getline(ss, field, '\t');
            c.attribute = std::stoi(field);
            std::getline(ss, ngram_text, '\t');
            std::getline(ss, field, '\t');
            c.salience_raw = std::stod(field);
            std::getline(ss, field, '\t');
            c.probability = std::stod(field);
            std::getline(ss, field, '\t');
            c.salience = std::stod(field);
            c.ngram = tokenize(ngram_text);
            v.add(std::move(c));
        }
        v.sort_markers();
        return v;
    }

private:
    void rebuild_lookup() const {
        if (!lookup_dirty_) return;
        for (int a = 0; a < kNumAttributes; ++a) {
            lookup_[a].clear();
            longest_[a] = 0;
            for (const MarkerCandidate& c : markers_[a]) {
                lookup_[a].insert(c.key());
                longest_[a] = std::max(longest_[a], c.ngram.size());
            }
        }
        lookup_dirty_ = false;
    }

    double gamma_c_ = 15.0;
    double gamma_ = 5.0;
    double lambda_ = 1.0;
    std::vector<MarkerCandidate> markers_[kNumAttributes];
    mutable std::unordered_set<std::string> lookup_[kNumAttributes];
    mutable std::size_t longest_[kNumAttributes] = {0, 0};
    mutable bool lookup_dirty_ = true;
};

// V_a = { u : s_c(u, a) >= gamma_c } with raw saliences attached; empty
// results are allowed (the fusion fallback handles them downstream).
inline MarkerVocabulary build_candidate_vocab(const NgramIndex& index, double gamma_c,
                                              double lambda, double gamma = 0.0) {
    if (gamma_c <= 0.0) throw std::invalid_argument("build_candidate_vocab: gamma_c must be > 0");
    MarkerVocabulary vocab(gamma_c, gamma, lambda);
    const std::vector<std::string> keys = index.all_ngrams();
    for (AttributeId a = 0; a < kNumAttributes; ++a) {
        for (const std::string& key : keys) {
            const double s = salience(key, a, index, lambda);
            if (s >= gamma_c) {
                MarkerCandidate c;
                c.ngram = tokenize(key);
                c.attribute = a;
                c.salience_raw = s;
                c.probability = 1.0;
                c.salience = s;
                vocab.add(std::move(c));
            }
        }
    }
    vocab.sort_markers();
    return vocab;
}

// Scorer: probability that the bare n-gram carries the given attribute
// (the attention classifier applied to the n-gram as a standalone sentence).
using NgramScorer = std::function<double(const std::vector<std::string>&, AttributeId)>;

// s = s_c * p; members falling below gamma are dropped.
inline MarkerVocabulary refine_vocab(const MarkerVocabulary& candidates,
                                     const NgramScorer& scorer, double gamma) {
    if (!scorer) throw std::invalid_argument("refine_vocab: classifier scorer not provided");
    MarkerVocabulary refined(candidates.gamma_c(), gamma, candidates.lambda());
    for (AttributeId a = 0; a < kNumAttributes; ++a) {
        for (const MarkerCandidate& c : candidates.markers(a)) {
            MarkerCandidate r = c;
            r.probability = scorer(r.ngram, a);
            if (r.probability < 0.0 || r.probability > 1.0)
                throw std::logic_error("refine_vocab: scorer returned a non-probability");
            r.salience = r.salience_raw * r.probability;
            if (r.salience >= gamma) refined.add(std::move(r));
        }
    }
    refined.sort_markers();
    return refined;
}

enum class MaskMethod { kFrequency, kAttention };

inline const char* mask_method_name(MaskMethod m) {
    return m == MaskMethod::kFrequency ? "frequency" : "attention";
}

// A sentence with marker positions replaced by <mask>, length preserved.
struct MaskedSentence {
    std::vector<Token> tokens;
    std::vector<std::size_t> mask_positions;  // strictly increasing
    LabeledSentence original;
    MaskMethod method = MaskMethod::kFrequency;

    std::size_t content_size() const { return tokens.size() - mask_positions.size(); }

    std::string text() const {
        std::string s;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) s += ' ';
            s += tokens[i].surface;
        }
        return s;
    }
};

// Builds a MaskedSentence and enforces its invariants: positions strictly
// increasing and in bounds, at least one mask, non-empty content.
inline MaskedSentence make_masked(const LabeledSentence& original,
                                  std::vector<std::size_t> positions, MaskMethod method) {
    if (positions.empty()) throw std::invalid_argument("make_masked: no positions");
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= original.size()) throw std::out_of_range("make_masked: position out of range");
        if (i > 0 && positions[i] <= positions[i - 1])
            throw std::invalid_argument("make_masked: positions must be strictly increasing");
    }
    if (positions.size() >= original.size())
        throw std::invalid_argument("make_masked: content set would be empty");
    MaskedSentence m;
    m.original = original;
    m.tokens = original.tokens;
    m.mask_positions = std::move(positions);
    m.method = method;
    for (std::size_t p : m.mask_positions) m.tokens[p] = Token{kMaskSurface, kMaskId};
    return m;
}

// Greedy longest-match left-to-right scan against the sentence-attribute's
// marker vocabulary; matches never overlap. Returns nullopt when nothing
// matches. If the matches would cover the whole sentence the final matched
// span is released so the content set stays non-empty.
inline std::optional<MaskedSentence> mask_by_vocab(const LabeledSentence& sentence,
                                                   const MarkerVocabulary& vocab) {
    const AttributeId a = sentence.attribute;
    const std::size_t len = sentence.size();
    std::vector<std::string> words;
    words.reserve(len);
    for (const Token& t : sentence.tokens) words.push_back(t.surface);

    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (start, n)
    const std::size_t n_cap = vocab.longest_ngram(a);
    std::size_t i = 0;
    while (i < len) {
        std::size_t matched = 0;
        for (std::size_t n = std::min(n_cap, len - i); n >= 1; --n) {
            if (vocab.contains(a, join_ngram(words, i, n))) {
                matched = n;
                break;
            }
        }
        if (matched) {
            spans.emplace_back(i, matched);
            i += matched;
        } else {
            ++i;
        }
    }
    if (spans.empty()) return std::nullopt;

    std::size_t covered = 0;
    for (const auto& [_, n] : spans) covered += n;
    if (covered == len) spans.pop_back();
    if (spans.empty()) return std::nullopt;

    std::vector<std::size_t> positions;
    for (const auto& [start, n] : spans)
        for (std::size_t k = 0; k < n; ++k) positions.push_back(start + k);
    return make_masked(sentence, std::move(positions), MaskMethod::kFrequency);
}

}  // namespace maskinfill
