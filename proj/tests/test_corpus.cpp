#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "maskinfill/corpus.hpp"

using namespace maskinfill;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("maskinfill_corpus_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::trunc);
    os << content;
}

}  // namespace

TEST_CASE("tokenize splits punctuation and lowercases") {
    CHECK(tokenize("Terrible scenery and poor service.") ==
          std::vector<std::string>{"terrible", "scenery", "and", "poor", "service", "."});
    CHECK(tokenize("").empty());
    CHECK(tokenize("   \t  ").empty());
    CHECK(tokenize("Good, but pricey!") ==
          std::vector<std::string>{"good", ",", "but", "pricey", "!"});
}

TEST_CASE("tokenize preserves pre-split review text") {
    const auto toks = tokenize("it 's not much like an actual irish pub , which is depressing .");
    CHECK(toks.size() == 14);
    CHECK(toks[1] == "'s");
    CHECK(toks[9] == ",");
    CHECK(toks[13] == ".");
}

TEST_CASE("tokenize is idempotent on its own output") {
    const std::vector<std::string> inputs = {
        "Terrible scenery and poor service.",
        "it 's not much like an actual irish pub , which is depressing .",
        "What?! No way... truly:\"awful\"",
    };
    for (const auto& raw : inputs) {
        const auto once = tokenize(raw);
        std::string joined;
        for (std::size_t i = 0; i < once.size(); ++i) {
            if (i) joined += ' ';
            joined += once[i];
        }
        CHECK(tokenize(joined) == once);
    }
}

TEST_CASE("reserved tokens occupy fixed ids") {
    TokenVocab v;
    CHECK(v.id_of("<pad>") == 0);
    CHECK(v.id_of("<unk>") == 1);
    CHECK(v.id_of("<mask>") == 2);
    CHECK(v.size() == 3);
    CHECK(v.id_of("anything-unregistered") == kUnkId);
}

TEST_CASE("vocabulary id round-trip") {
    Corpus corpus = generate_synthetic(50, 3);
    TokenVocab v = TokenVocab::build(corpus);
    for (std::size_t id = 0; id < v.size(); ++id) CHECK(v.id_of(v.surface_of(id)) == id);
}

TEST_CASE("vocabulary save/load round-trip") {
    TempDir dir;
    Corpus corpus = generate_synthetic(40, 5);
    TokenVocab v = TokenVocab::build(corpus);
    v.save(dir.file("vocab.tsv"));
    TokenVocab w = TokenVocab::load(dir.file("vocab.tsv"));
    CHECK(v.size() == w.size());
    CHECK(v.hash() == w.hash());
    for (std::size_t id = 0; id < v.size(); ++id) {
        CHECK(v.surface_of(id) == w.surface_of(id));
        CHECK(v.count_of(id) == w.count_of(id));
    }

    // line number = id - 3
    std::ifstream is(dir.file("vocab.tsv"));
    std::string first_line;
    std::getline(is, first_line);
    CHECK(first_line.substr(0, first_line.find('\t')) == v.surface_of(3));
}

TEST_CASE("load_corpus labels, skips empties, truncates") {
    TempDir dir;
    write_file(dir.file("three.pos"), "good food\nGreat view!\nnice place\n");
    Corpus c = load_corpus(dir.file("three.pos"), kPositive);
    REQUIRE(c.size() == 3);
    for (const auto& s : c) CHECK(s.attribute == kPositive);
    CHECK(c[1].tokens[2].surface == "!");

    write_file(dir.file("gaps.neg"), "a b\n\nc d\ne f\n\ng h\n");
    Corpus g = load_corpus(dir.file("gaps.neg"), kNegative);
    CHECK(g.size() == 4);

    write_file(dir.file("long.pos"), "t0 t1 t2 t3 t4 t5 t6 t7\n");
    Corpus t = load_corpus(dir.file("long.pos"), kPositive, 4);
    REQUIRE(t.size() == 1);
    CHECK(t[0].size() == 4);

    CHECK_THROWS_AS(load_corpus(dir.file("missing.pos"), kPositive), std::runtime_error);
    write_file(dir.file("empty.pos"), "\n\n");
    CHECK_THROWS_AS(load_corpus(dir.file("empty.pos"), kPositive), std::runtime_error);
}

TEST_CASE("corpus serialization round-trip is identity") {
    TempDir dir;
    Corpus corpus = generate_synthetic(30, 11);
    save_corpus(dir.file("c.txt"), corpus);
    Corpus other = load_corpus(dir.file("c.txt"), corpus[0].attribute);
    // Attributes differ per sentence in the generated corpus; compare text only.
    REQUIRE(other.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(other[i].text() == corpus[i].text());
}

TEST_CASE("synthetic generator is deterministic and balanced") {
    Corpus a = generate_synthetic(2, 7);
    Corpus b = generate_synthetic(2, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].text() == b[i].text());
        CHECK(a[i].attribute == b[i].attribute);
    }

    Corpus big = generate_synthetic(1000, 1);
    CHECK(big.size() == 2000);
    std::size_t positives = 0;
    for (const auto& s : big) positives += s.attribute == kPositive;
    CHECK(positives == 1000);
}

TEST_CASE("synthetic sentences only use their polarity's lexicon") {
    const auto& pos_lex = synthetic_lexicon(kPositive);
    const auto& neg_lex = synthetic_lexicon(kNegative);
    const std::set<std::string> pos_set(pos_lex.begin(), pos_lex.end());
    const std::set<std::string> neg_set(neg_lex.begin(), neg_lex.end());

    // Lexicons are disjoint and roughly the documented size.
    for (const auto& w : pos_set) CHECK(neg_set.count(w) == 0);
    CHECK(pos_set.size() == 20);
    CHECK(neg_set.size() == 20);

    Corpus corpus = generate_synthetic(500, 23);
    for (const auto& s : corpus) {
        const auto& own = s.attribute == kPositive ? pos_set : neg_set;
        const auto& other = s.attribute == kPositive ? neg_set : pos_set;
        std::size_t own_hits = 0;
        for (const auto& t : s.tokens) {
            own_hits += own.count(t.surface);
            CHECK(other.count(t.surface) == 0);
        }
        CHECK(own_hits >= 1);
        CHECK(s.size() <= 32);
        CHECK(s.size() >= 1);
    }
}

TEST_CASE("generate_synthetic rejects zero count") {
    CHECK_THROWS_AS(generate_synthetic(0, 1), std::invalid_argument);
}
