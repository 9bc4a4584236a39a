#pragma once

// Tokenization, labeled-corpus ingestion, vocabulary construction and the
// synthetic review generator used for deterministic end-to-end testing.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maskinfill/rng.hpp"

namespace maskinfill {

using AttributeId = int;
inline constexpr AttributeId kNegative = 0;
inline constexpr AttributeId kPositive = 1;
inline constexpr int kNumAttributes = 2;

inline AttributeId opposite(AttributeId a) { return 1 - a; }

inline void require_attribute(AttributeId a) {
    if (a != kNegative && a != kPositive)
        throw std::invalid_argument("attribute must be 0 (negative) or 1 (positive)");
}

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kMaskId = 2;
inline constexpr std::size_t kNumReserved = 3;
inline constexpr const char* kPadSurface = "<pad>";
inline constexpr const char* kUnkSurface = "<unk>";
inline constexpr const char* kMaskSurface = "<mask>";

struct Token {
    std::string surface;
    std::size_t id = kUnkId;

    bool operator==(const Token&) const = default;
};

struct LabeledSentence {
    std::vector<Token> tokens;
    AttributeId attribute = kNegative;

    std::size_t size() const { return tokens.size(); }

    std::vector<std::size_t> ids() const {
        std::vector<std::size_t> out(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) out[i] = tokens[i].id;
        return out;
    }

    std::string text() const {
        std::string s;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) s += ' ';
            s += tokens[i].surface;
        }
        return s;
    }
};

using Corpus = std::vector<LabeledSentence>;

// Lowercases and splits on whitespace; . , ! ? ; : " are split off as
// one-character tokens. Apostrophes stay inside tokens so that contractions
// like "'s" in pre-split review text survive as single tokens.
inline std::vector<std::string> tokenize(std::string_view raw) {
    auto is_split_punct = [](char c) {
        return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' || c == '"';
    };
    std::vector<std::string> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.push_back(word);
            word.clear();
        }
    };
    for (char raw_c : raw) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw_c)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_split_punct(c)) {
            flush();
            out.emplace_back(1, c);
        } else {
            word += c;
        }
    }
    flush();
    return out;
}

class TokenVocab {
public:
    TokenVocab() {
        register_reserved();
    }

    std::size_t size() const { return id_to_surface_.size(); }

    // Registers a surface (or bumps its count) and returns its id.
    std::size_t add(const std::string& surface, std::size_t count = 1) {
        if (surface.empty()) throw std::invalid_argument("TokenVocab::add: empty surface");
        auto it = surface_to_id_.find(surface);
        if (it != surface_to_id_.end()) {
            counts_[it->second] += count;
            return it->second;
        }
        const std::size_t id = id_to_surface_.size();
        surface_to_id_.emplace(surface, id);
        id_to_surface_.push_back(surface);
        counts_.push_back(count);
        return id;
    }

    std::size_t id_of(const std::string& surface) const {
        auto it = surface_to_id_.find(surface);
        return it == surface_to_id_.end() ? kUnkId : it->second;
    }

    const std::string& surface_of(std::size_t id) const {
        if (id >= id_to_surface_.size()) throw std::out_of_range("TokenVocab::surface_of: bad id");
        return id_to_surface_[id];
    }

    std::size_t count_of(std::size_t id) const { return counts_.at(id); }

    bool contains(const std::string& surface) const { return surface_to_id_.count(surface) > 0; }

    // First-appearance registration order over the corpus keeps ids
    // deterministic for a fixed corpus order.
    static TokenVocab build(const Corpus& corpus) {
        TokenVocab v;
        for (const LabeledSentence& s : corpus)
            for (const Token& t : s.tokens) v.add(t.surface);
        return v;
    }

    void reindex(LabeledSentence& s) const {
        for (Token& t : s.tokens) t.id = id_of(t.surface);
    }

    void reindex(Corpus& corpus) const {
        for (LabeledSentence& s : corpus) reindex(s);
    }

    // One "surface<TAB>count" per line; line number = id - 3.
    std::string serialize() const {
        std::string out;
        for (std::size_t id = kNumReserved; id < id_to_surface_.size(); ++id) {
            out += id_to_surface_[id];
            out += '\t';
            out += std::to_string(counts_[id]);
            out += '\n';
        }
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write vocabulary: " + path);
        os << serialize();
        if (!os) throw std::runtime_error("vocabulary write failed: " + path);
    }

    static TokenVocab load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot read vocabulary: " + path);
        TokenVocab v;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos)
                throw std::runtime_error("malformed vocabulary line in " + path);
            v.add(line.substr(0, tab), std::stoull(line.substr(tab + 1)));
        }
        return v;
    }

    std::uint64_t hash() const { return fnv1a64(serialize()); }

private:
    void register_reserved() {
        for (const char* s : {kPadSurface, kUnkSurface, kMaskSurface}) {
            surface_to_id_.emplace(s, id_to_surface_.size());
            id_to_surface_.emplace_back(s);
            counts_.push_back(0);
        }
    }

    std::unordered_map<std::string, std::size_t> surface_to_id_;
    std::vector<std::string> id_to_surface_;
    std::vector<std::size_t> counts_;
};

inline LabeledSentence make_sentence(const std::vector<std::string>& surfaces, AttributeId a) {
    require_attribute(a);
    LabeledSentence s;
    s.attribute = a;
    s.tokens.reserve(surfaces.size());
    for (const std::string& w : surfaces) s.tokens.push_back(Token{w, kUnkId});
    return s;
}

// One sentence per line, UTF-8; empty lines skipped, long lines truncated.
inline Corpus load_corpus(const std::string& path, AttributeId attribute, std::size_t max_len = 32) {
    require_attribute(attribute);
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read corpus file: " + path);
    Corpus corpus;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> toks = tokenize(line);
        if (toks.empty()) continue;
        if (toks.size() > max_len) toks.resize(max_len);
        corpus.push_back(make_sentence(toks, attribute));
    }
    if (corpus.empty()) throw std::runtime_error("corpus file has no usable lines: " + path);
    return corpus;
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write corpus file: " + path);
    for (const LabeledSentence& s : corpus) os << s.text() << '\n';
    if (!os) throw std::runtime_error("corpus write failed: " + path);
}

// ---------------------------------------------------------------------------
// Synthetic review corpus. Adjective lexicons are disjoint by polarity and
// grouped by the noun category they can describe, so context narrows the
// infill choice while the polarity stays attribute-controlled. A few
// multi-word closing phrases give the n-gram miner real 4-gram markers.
// ---------------------------------------------------------------------------

namespace synth {

enum Category { kFood = 0, kStaff = 1, kPlace = 2, kNumCategories = 3 };

inline const std::vector<std::string>& nouns(Category c) {
    static const std::vector<std::string> food = {
        "pizza", "pasta", "burger", "soup", "salad", "steak", "dessert", "coffee", "bread", "cake"};
    static const std::vector<std::string> staff = {
        "service", "staff", "waiter", "waitress", "bartender", "manager", "host", "crew"};
    static const std::vector<std::string> place = {
        "room", "patio", "decor", "atmosphere", "lighting", "location",
        "view", "music", "parking", "bathroom", "table", "menu"};
    switch (c) {
        case kFood: return food;
        case kStaff: return staff;
        default: return place;
    }
}

inline const std::vector<std::string>& adjectives(AttributeId a, Category c) {
    static const std::vector<std::string> pos_food = {"delicious", "tasty", "fresh", "flavorful", "savory", "delightful"};
    static const std::vector<std::string> pos_staff = {"friendly", "attentive", "helpful", "polite", "gracious", "welcoming"};
    static const std::vector<std::string> pos_place = {"cozy", "beautiful", "spotless", "charming", "elegant", "inviting"};
    static const std::vector<std::string> neg_food = {"bland", "stale", "greasy", "soggy", "flavorless", "inedible"};
    static const std::vector<std::string> neg_staff = {"rude", "careless", "dismissive", "impatient", "hostile", "clueless"};
    static const std::vector<std::string> neg_place = {"dirty", "noisy", "cramped", "gloomy", "shabby", "freezing"};
    if (a == kPositive) {
        switch (c) {
            case kFood: return pos_food;
            case kStaff: return pos_staff;
            default: return pos_place;
        }
    }
    switch (c) {
        case kFood: return neg_food;
        case kStaff: return neg_staff;
        default: return neg_place;
    }
}

// Generic adjectives usable with any noun.
inline const std::vector<std::string>& generic_adjectives(AttributeId a) {
    static const std::vector<std::string> pos = {"wonderful", "excellent"};
    static const std::vector<std::string> neg = {"terrible", "awful"};
    return a == kPositive ? pos : neg;
}

inline const std::vector<std::vector<std::string>>& phrases(AttributeId a) {
    static const std::vector<std::vector<std::string>> pos = {
        {"i", "would", "definitely", "come", "back"},
        {"worth", "every", "single", "penny"},
        {"we", "will", "be", "back", "soon"},
    };
    static const std::vector<std::vector<std::string>> neg = {
        {"i", "will", "never", "come", "back"},
        {"a", "complete", "waste", "of", "money"},
        {"we", "walked", "out", "halfway", "through"},
    };
    return a == kPositive ? pos : neg;
}

}  // namespace synth

// Union of the per-category and generic adjective lexicons for one polarity.
inline const std::vector<std::string>& synthetic_lexicon(AttributeId a) {
    auto build = [](AttributeId attr) {
        std::vector<std::string> all;
        for (int c = 0; c < synth::kNumCategories; ++c) {
            const auto& v = synth::adjectives(attr, static_cast<synth::Category>(c));
            all.insert(all.end(), v.begin(), v.end());
        }
        const auto& g = synth::generic_adjectives(attr);
        all.insert(all.end(), g.begin(), g.end());
        return all;
    };
    static const std::vector<std::string> pos = build(kPositive);
    static const std::vector<std::string> neg = build(kNegative);
    return a == kPositive ? pos : neg;
}

namespace synth {

inline std::string pick(Rng& rng, const std::vector<std::string>& v) {
    return v[rng.uniform_index(v.size())];
}

// Draws one adjective compatible with category c: usually category-specific,
// sometimes generic.
inline std::string pick_adjective(Rng& rng, AttributeId a, Category c) {
    if (rng.uniform() < 0.15) return pick(rng, generic_adjectives(a));
    return pick(rng, adjectives(a, c));
}

inline LabeledSentence generate_one(Rng& rng, AttributeId a) {
    const auto cat = [&] { return static_cast<Category>(rng.uniform_index(kNumCategories)); };
    std::vector<std::string> w;
    switch (rng.uniform_index(8)) {
        case 0: {
            const Category c = cat();
            w = {"the", pick(rng, nouns(c)), "was", pick_adjective(rng, a, c), "."};
            break;
        }
        case 1: {
            const Category c = cat();
            w = {"the", pick(rng, nouns(c)), "was", pick_adjective(rng, a, c),
                 "and", pick_adjective(rng, a, c), "."};
            break;
        }
        case 2: {
            const Category c1 = cat(), c2 = cat();
            w = {pick_adjective(rng, a, c1), pick(rng, nouns(c1)), "and",
                 pick_adjective(rng, a, c2), pick(rng, nouns(c2)), "."};
            break;
        }
        case 3: {
            const Category c1 = cat(), c2 = cat();
            w = {"the", pick(rng, nouns(c1)), "was", pick_adjective(rng, a, c1), "and",
                 "the", pick(rng, nouns(c2)), "was", pick_adjective(rng, a, c2), "."};
            break;
        }
        case 4: {
            const Category c = cat();
            w = {"i", "thought", "the", pick(rng, nouns(c)), "was", "really",
                 pick_adjective(rng, a, c), "."};
            break;
        }
        case 5: {
            const Category c = cat();
            w = {"honestly", "the", pick(rng, nouns(c)), "felt", pick_adjective(rng, a, c),
                 "that", "night", "."};
            break;
        }
        case 6: {
            const Category c = cat();
            const auto& ph = phrases(a)[rng.uniform_index(phrases(a).size())];
            w = {"the", pick(rng, nouns(c)), "was", pick_adjective(rng, a, c), "and"};
            w.insert(w.end(), ph.begin(), ph.end());
            w.push_back(".");
            break;
        }
        default: {
            const Category c = cat();
            const auto& ph = phrases(a)[rng.uniform_index(phrases(a).size())];
            w = ph;
            w.insert(w.end(), {"because", "the", pick(rng, nouns(c)), "was",
                               pick_adjective(rng, a, c), "."});
            break;
        }
    }
    return make_sentence(w, a);
}

}  // namespace synth

// Balanced, deterministic corpus: n sentences per attribute, interleaved
// negative/positive. Token ids are unset until a vocabulary reindexes them.
inline Corpus generate_synthetic(std::size_t n_per_attribute, std::uint64_t seed) {
    if (n_per_attribute < 1) throw std::invalid_argument("generate_synthetic: n_per_attribute must be >= 1");
    Rng rng(seed);
    Corpus corpus;
    corpus.reserve(2 * n_per_attribute);
    for (std::size_t i = 0; i < n_per_attribute; ++i) {
        corpus.push_back(synth::generate_one(rng, kNegative));
        corpus.push_back(synth::generate_one(rng, kPositive));
    }
    return corpus;
}

}  // namespace maskinfill
