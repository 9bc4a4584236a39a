#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "maskinfill/corpus.hpp"
#include "maskinfill/markers.hpp"
#include "maskinfill/rng.hpp"

using namespace maskinfill;

namespace {

// Independent brute-force n-gram recount: token-vector keys in an ordered
// map, no shared code with NgramIndex.
using BruteCounts = std::map<std::pair<int, std::vector<std::string>>, long>;

BruteCounts brute_force_count(const Corpus& corpus, std::size_t n_max) {
    BruteCounts counts;
    for (const LabeledSentence& s : corpus) {
        std::vector<std::string> words;
        for (const Token& t : s.tokens) words.push_back(t.surface);
        for (std::size_t start = 0; start < words.size(); ++start) {
            for (std::size_t n = 1; n <= n_max && start + n <= words.size(); ++n) {
                std::vector<std::string> gram(words.begin() + start, words.begin() + start + n);
                ++counts[{s.attribute, gram}];
            }
        }
    }
    return counts;
}

Corpus random_corpus(Rng& rng, std::size_t n_sentences) {
    const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "good", "bad"};
    Corpus corpus;
    for (std::size_t i = 0; i < n_sentences; ++i) {
        const std::size_t len = 1 + rng.uniform_index(12);
        std::vector<std::string> toks;
        for (std::size_t j = 0; j < len; ++j) toks.push_back(words[rng.uniform_index(words.size())]);
        corpus.push_back(make_sentence(toks, static_cast<AttributeId>(rng.uniform_index(2))));
    }
    return corpus;
}

MarkerVocabulary vocab_from_ngrams(const std::vector<std::pair<AttributeId, std::string>>& items) {
    MarkerVocabulary v(1.0, 0.0, 1.0);
    for (const auto& [a, text] : items) {
        MarkerCandidate c;
        c.ngram = tokenize(text);
        c.attribute = a;
        c.salience_raw = 10.0;
        c.salience = 10.0;
        v.add(std::move(c));
    }
    v.sort_markers();
    return v;
}

}  // namespace

TEST_CASE("ngram index counts simple corpora exhaustively") {
    Corpus corpus = {make_sentence({"good", "food"}, kPositive)};
    NgramIndex index = build_ngram_index(corpus, 4);
    CHECK(index.count("good", kPositive) == 1);
    CHECK(index.count("food", kPositive) == 1);
    CHECK(index.count("good food", kPositive) == 1);
    CHECK(index.count("good", kNegative) == 0);
    CHECK(index.count("absent", kPositive) == 0);
}

TEST_CASE("overlapping windows are each counted") {
    Corpus corpus = {make_sentence({"a", "a", "a"}, kNegative)};
    NgramIndex index = build_ngram_index(corpus, 2);
    CHECK(index.count("a", kNegative) == 3);
    CHECK(index.count("a a", kNegative) == 2);
}

TEST_CASE("ngram index matches brute-force recount on random corpora") {
    Rng rng(171);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n_sentences = 1 + rng.uniform_index(200);
        Corpus corpus = random_corpus(rng, n_sentences);
        const std::size_t n_max = 1 + rng.uniform_index(4);
        NgramIndex index = build_ngram_index(corpus, n_max);
        BruteCounts brute = brute_force_count(corpus, n_max);

        for (const auto& [key, count] : brute) {
            const auto& [attr, gram] = key;
            std::string joined;
            for (std::size_t i = 0; i < gram.size(); ++i) {
                if (i) joined += ' ';
                joined += gram[i];
            }
            CHECK(index.count(joined, attr) == count);
        }
        // And the index holds nothing the brute force did not see.
        std::size_t brute_total = brute.size();
        std::size_t index_total = 0;
        for (const std::string& key : index.all_ngrams()) {
            for (AttributeId a = 0; a < kNumAttributes; ++a)
                index_total += index.count(key, a) > 0 ? 1 : 0;
        }
        CHECK(index_total == brute_total);
    }
}

TEST_CASE("salience follows the smoothed frequency ratio") {
    Corpus corpus;
    for (int i = 0; i < 9; ++i) corpus.push_back(make_sentence({"zesty"}, kPositive));
    corpus.push_back(make_sentence({"zesty"}, kNegative));
    corpus.push_back(make_sentence({"filler"}, kNegative));
    NgramIndex index = build_ngram_index(corpus, 1);

    CHECK(salience("zesty", kPositive, index, 1.0) == Catch::Approx(5.0));
    CHECK(salience("zesty", kNegative, index, 1.0) == Catch::Approx(2.0 / 10.0));
    CHECK(salience("nowhere", kPositive, index, 1.0) == Catch::Approx(1.0));

    Corpus neg_heavy;
    for (int i = 0; i < 9; ++i) neg_heavy.push_back(make_sentence({"grim"}, kNegative));
    neg_heavy.push_back(make_sentence({"pad"}, kPositive));
    NgramIndex idx2 = build_ngram_index(neg_heavy, 1);
    CHECK(salience("grim", kPositive, idx2, 1.0) == Catch::Approx(0.1));

    CHECK_THROWS_AS(salience("nowhere", kPositive, index, 0.0), std::invalid_argument);
    CHECK(salience("zesty", kPositive, index, 0.0) == Catch::Approx(9.0));
}

TEST_CASE("salience is monotone in own and opposing counts") {
    auto make_index = [](int own, int opp) {
        Corpus corpus;
        for (int i = 0; i < own; ++i) corpus.push_back(make_sentence({"w"}, kPositive));
        for (int i = 0; i < opp; ++i) corpus.push_back(make_sentence({"w"}, kNegative));
        corpus.push_back(make_sentence({"pad"}, kPositive));
        return build_ngram_index(corpus, 1);
    };
    Rng rng(55);
    for (int rep = 0; rep < 30; ++rep) {
        const int own = static_cast<int>(rng.uniform_index(20));
        const int opp = static_cast<int>(rng.uniform_index(20));
        const double lambda = rng.uniform(0.1, 3.0);
        const double base = salience("w", kPositive, make_index(own, opp), lambda);
        CHECK(salience("w", kPositive, make_index(own + 1, opp), lambda) >= base);
        CHECK(salience("w", kPositive, make_index(own, opp + 1), lambda) <= base);
    }
}

TEST_CASE("candidate vocabulary threshold is inclusive") {
    Corpus corpus;
    for (int i = 0; i < 9; ++i) corpus.push_back(make_sentence({"zesty"}, kPositive));
    corpus.push_back(make_sentence({"zesty"}, kNegative));
    corpus.push_back(make_sentence({"filler"}, kNegative));
    NgramIndex index = build_ngram_index(corpus, 1);

    MarkerVocabulary at5 = build_candidate_vocab(index, 5.0, 1.0);
    bool found = false;
    for (const auto& c : at5.markers(kPositive)) found |= c.key() == "zesty";
    CHECK(found);

    MarkerVocabulary above = build_candidate_vocab(index, 5.0001, 1.0);
    for (const auto& c : above.markers(kPositive)) CHECK(c.key() != "zesty");

    MarkerVocabulary inf_thresh = build_candidate_vocab(index, 1e18, 1.0);
    CHECK(inf_thresh.markers(kPositive).empty());
    CHECK(inf_thresh.markers(kNegative).empty());

    CHECK_THROWS_AS(build_candidate_vocab(index, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("high-ratio content ngrams enter the candidate vocabulary") {
    // "he did a" style: frequent under one attribute, absent under the other.
    Corpus corpus;
    for (int i = 0; i < 26; ++i)
        corpus.push_back(make_sentence({"he", "did", "a", "thing"}, kPositive));
    corpus.push_back(make_sentence({"unrelated", "words"}, kNegative));
    NgramIndex index = build_ngram_index(corpus, 3);
    MarkerVocabulary v = build_candidate_vocab(index, 15.0, 1.0);
    CHECK(v.contains(kPositive, "he did a"));
}

TEST_CASE("refinement multiplies salience by classifier probability") {
    Corpus corpus;
    for (int i = 0; i < 9; ++i) corpus.push_back(make_sentence({"zesty"}, kPositive));
    corpus.push_back(make_sentence({"zesty"}, kNegative));
    // s_c("he did a") = (25 + 1) / (0 + 1) = 26, the footnote example's score.
    for (int i = 0; i < 25; ++i) corpus.push_back(make_sentence({"he", "did", "a"}, kPositive));
    corpus.push_back(make_sentence({"filler"}, kNegative));
    NgramIndex index = build_ngram_index(corpus, 3);
    MarkerVocabulary cands = build_candidate_vocab(index, 5.0, 1.0);
    REQUIRE(cands.contains(kPositive, "zesty"));
    REQUIRE(cands.contains(kPositive, "he did a"));

    NgramScorer scorer = [](const std::vector<std::string>& ngram, AttributeId) {
        if (ngram.size() == 1 && ngram[0] == "zesty") return 0.9;
        return 0.05;  // fake markers score low
    };
    MarkerVocabulary refined = refine_vocab(cands, scorer, 2.0);

    bool found_zesty = false;
    for (const auto& c : refined.markers(kPositive)) {
        CHECK(c.salience == Catch::Approx(c.salience_raw * c.probability));
        CHECK(c.salience <= c.salience_raw);
        if (c.key() == "zesty") {
            found_zesty = true;
            CHECK(c.salience == Catch::Approx(5.0 * 0.9));
        }
        CHECK(c.key() != "he did a");  // 26 * 0.05 = 1.3 < 2
    }
    CHECK(found_zesty);

    // p = 1 keeps salience identical.
    MarkerVocabulary identity = refine_vocab(
        cands, [](const std::vector<std::string>&, AttributeId) { return 1.0; }, 2.0);
    for (AttributeId a = 0; a < kNumAttributes; ++a)
        for (const auto& c : identity.markers(a)) CHECK(c.salience == c.salience_raw);

    // Refinement output is a subset of its input.
    for (AttributeId a = 0; a < kNumAttributes; ++a)
        for (const auto& c : refined.markers(a)) CHECK(cands.contains(a, c.key()));

    CHECK_THROWS_AS(refine_vocab(cands, NgramScorer(), 2.0), std::invalid_argument);
}

TEST_CASE("mask_by_vocab replaces markers token by token") {
    MarkerVocabulary v = vocab_from_ngrams({{kNegative, "terrible"}, {kNegative, "poor"}});
    LabeledSentence s = make_sentence({"terrible", "scenery", "and", "poor", "service"}, kNegative);
    auto masked = mask_by_vocab(s, v);
    REQUIRE(masked.has_value());
    CHECK(masked->mask_positions == std::vector<std::size_t>{0, 3});
    CHECK(masked->text() == "<mask> scenery and <mask> service");
    CHECK(masked->method == MaskMethod::kFrequency);
    CHECK(masked->tokens.size() == s.size());
    // Unmasked positions carry the original tokens.
    for (std::size_t i : {std::size_t{1}, std::size_t{2}, std::size_t{4}})
        CHECK(masked->tokens[i] == s.tokens[i]);
}

TEST_CASE("mask_by_vocab returns NoMatch when nothing matches") {
    MarkerVocabulary v = vocab_from_ngrams({{kPositive, "splendid"}});
    LabeledSentence s = make_sentence({"plain", "old", "sentence"}, kPositive);
    CHECK_FALSE(mask_by_vocab(s, v).has_value());

    // Markers of the other attribute never match.
    MarkerVocabulary w = vocab_from_ngrams({{kNegative, "plain"}});
    CHECK_FALSE(mask_by_vocab(s, w).has_value());
}

TEST_CASE("greedy longest match wins") {
    MarkerVocabulary v = vocab_from_ngrams({{kNegative, "not good"}, {kNegative, "good"}});
    LabeledSentence s = make_sentence({"not", "good", "food"}, kNegative);
    auto masked = mask_by_vocab(s, v);
    REQUIRE(masked.has_value());
    CHECK(masked->mask_positions == std::vector<std::size_t>{0, 1});
    CHECK(masked->text() == "<mask> <mask> food");
}

TEST_CASE("mask_by_vocab keeps the content set non-empty") {
    MarkerVocabulary v = vocab_from_ngrams({{kNegative, "awful"}, {kNegative, "bad"}});
    LabeledSentence s = make_sentence({"awful", "bad"}, kNegative);
    auto masked = mask_by_vocab(s, v);
    REQUIRE(masked.has_value());
    CHECK(masked->mask_positions == std::vector<std::size_t>{0});
    CHECK(masked->content_size() == 1);
}

TEST_CASE("marker vocabulary serialization round-trips and sorts by salience") {
    Corpus corpus = generate_synthetic(200, 29);
    NgramIndex index = build_ngram_index(corpus, 4);
    MarkerVocabulary v = build_candidate_vocab(index, 5.0, 1.0);
    REQUIRE(v.total_size() > 0);

    const std::string serialized = v.serialize();
    auto tmp = std::filesystem::temp_directory_path() / "maskinfill_markers_roundtrip.tsv";
    v.save(tmp.string());
    MarkerVocabulary w = MarkerVocabulary::load(tmp.string(), v.gamma_c(), v.gamma(), v.lambda());
    std::filesystem::remove(tmp);
    CHECK(w.serialize() == serialized);

    double prev = std::numeric_limits<double>::infinity();
    std::istringstream ss(serialized);
    std::string line;
    while (std::getline(ss, line)) {
        const auto last_tab = line.rfind('\t');
        const double s = std::stod(line.substr(last_tab + 1));
        CHECK(s <= prev);
        prev = s;
    }
}
