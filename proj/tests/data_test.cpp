#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>

#include "cgusum/data.hpp"
#include "cgusum/error.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cgusum;

namespace {

std::string temp_path(const std::string& name) {
    return std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp") + "/" + name;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("whitespace tokenization splits on runs of whitespace") {
    CHECK(tokenize("a  b", TokenizerMode::whitespace) == std::vector<std::string>{"a", "b"});
    CHECK(tokenize("  a\tb\nc  ", TokenizerMode::whitespace) ==
          std::vector<std::string>{"a", "b", "c"});
    CHECK(tokenize("", TokenizerMode::whitespace).empty());
    CHECK(tokenize("   ", TokenizerMode::whitespace).empty());
}

TEST_CASE("character tokenization yields one token per non-whitespace code point") {
    CHECK(tokenize("\xe6\x98\x9f\xe5\xb7\xb4\xe5\x85\x8b", TokenizerMode::character) ==
          std::vector<std::string>{"\xe6\x98\x9f", "\xe5\xb7\xb4", "\xe5\x85\x8b"});
    CHECK(tokenize("a b", TokenizerMode::character) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("invalid UTF-8 raises an input error") {
    CHECK_THROWS_AS(tokenize("\xff", TokenizerMode::character), InputError);
    CHECK_THROWS_AS(tokenize("\xe6\x98", TokenizerMode::character), InputError);  // truncated
    CHECK_THROWS_AS(tokenize("ok \xc0", TokenizerMode::whitespace), InputError);
}

TEST_CASE("whitespace tokenization is idempotent through a space join") {
    Rng rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        std::string s;
        const size_t len = rng.index(30);
        for (size_t i = 0; i < len; ++i) {
            const char c = static_cast<char>(32 + rng.index(95));  // printable ASCII
            s.push_back(c);
        }
        const auto toks = tokenize(s, TokenizerMode::whitespace);
        std::string joined;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) joined += ' ';
            joined += toks[i];
        }
        CHECK(tokenize(joined, TokenizerMode::whitespace) == toks);
    }
}

TEST_CASE("build_vocab ranks by frequency with the reserved block first") {
    Vocab v = Vocab::build({{"a", "a", "b"}}, 100, 1);
    CHECK(v.size() == 6);
    CHECK(v.encode_token("a") == 4);
    CHECK(v.encode_token("b") == 5);
    CHECK(v.encode_token("zzz") == Vocab::kUnk);
    CHECK(v.token(Vocab::kPad) == "<pad>");
    CHECK(v.token(Vocab::kEos) == "<eos>");
}

TEST_CASE("build_vocab caps total size including the reserved block") {
    Vocab v = Vocab::build({{"x", "y", "y", "z"}}, 5, 1);
    CHECK(v.size() == 5);
    CHECK(v.encode_token("y") == 4);  // the single survivor
    CHECK(v.encode_token("x") == Vocab::kUnk);
    CHECK(v.encode_token("z") == Vocab::kUnk);
}

TEST_CASE("frequency ties break lexicographically, matching a sort oracle") {
    Rng rng(23);
    std::vector<std::string> words{"pear", "apple", "mango", "kiwi", "fig", "date"};
    rng.shuffle(words);
    std::vector<std::vector<std::string>> corpus{words};
    Vocab v = Vocab::build(corpus, 100, 1);
    std::vector<std::string> sorted = words;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i)
        CHECK(v.encode_token(sorted[i]) == static_cast<int>(Vocab::kNumReserved + i));
}

TEST_CASE("min_freq drops rare tokens to UNK") {
    Vocab v = Vocab::build({{"a", "a", "b"}}, 100, 2);
    CHECK(v.encode_token("a") == 4);
    CHECK(v.encode_token("b") == Vocab::kUnk);
}

TEST_CASE("encode/decode round-trips all in-vocabulary ids") {
    Vocab v = Vocab::build({{"alpha", "beta", "gamma", "beta"}}, 100, 1);
    for (int id = Vocab::kNumReserved; id < v.size(); ++id) {
        CHECK(v.encode_token(v.token(id)) == id);
    }
    const std::vector<std::string> toks{"alpha", "gamma", "nope"};
    const std::vector<int> ids = v.encode(toks);
    CHECK(ids[2] == Vocab::kUnk);
    CHECK(v.decode(ids)[0] == "alpha");
}

TEST_CASE("vocab files round-trip with the implicit reserved block") {
    Vocab v = Vocab::build({{"tea", "tea", "chai"}}, 100, 1);
    const std::string path = temp_path("vocab_roundtrip.vocab");
    v.save(path);
    Vocab w = Vocab::load(path);
    CHECK(w.size() == v.size());
    for (int id = 0; id < v.size(); ++id) CHECK(w.token(id) == v.token(id));
    std::remove(path.c_str());
}

TEST_CASE("load_corpus keeps order and reports malformed lines by number") {
    const std::string path = temp_path("corpus_two.jsonl");
    write_file(path,
               "{\"source\": \"one source\", \"summary\": \"one\"}\n"
               "{\"source\": \"two source\", \"summary\": \"two\"}\n");
    const auto pairs = load_corpus(path);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].summary == "one");
    CHECK(pairs[1].summary == "two");

    write_file(path, "{\"source\": \"x\", \"summary\": \"y\"}\n{\"source\": \"x\"}\n");
    try {
        load_corpus(path);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    write_file(path, "not json\n");
    CHECK_THROWS_AS(load_corpus(path), InputError);
    std::remove(path.c_str());
}

TEST_CASE("a generated 1000-line corpus round-trips bitwise") {
    Rng rng(29);
    const std::string path = temp_path("corpus_big.jsonl");
    std::string blob;
    std::vector<ExamplePair> want;
    for (int i = 0; i < 1000; ++i) {
        std::string src, sum;
        const size_t sn = 1 + rng.index(8), mn = 1 + rng.index(4);
        for (size_t k = 0; k < sn; ++k) src += std::string(k ? " " : "") + "w" + std::to_string(rng.index(50));
        for (size_t k = 0; k < mn; ++k) sum += std::string(k ? " " : "") + "s" + std::to_string(rng.index(20));
        want.push_back({src, sum});
        nlohmann::json j = {{"source", src}, {"summary", sum}};
        blob += j.dump() + "\n";
    }
    write_file(path, blob);
    const auto got = load_corpus(path);
    REQUIRE(got.size() == want.size());
    std::string rewritten;
    for (const auto& p : got) {
        nlohmann::json j = {{"source", p.source}, {"summary", p.summary}};
        rewritten += j.dump() + "\n";
    }
    CHECK(rewritten == read_file(path));
    std::remove(path.c_str());
}

TEST_CASE("encode_corpus truncates to the configured maxima") {
    Vocab v = Vocab::build({{"a", "b", "c", "d", "e"}}, 100, 1);
    const std::vector<ExamplePair> pairs{{"a b c d e", "a b c d"}};
    const auto enc = encode_corpus(pairs, v, v, TokenizerMode::whitespace, 3, 2);
    CHECK(enc[0].src.size() == 3);
    CHECK(enc[0].tgt.size() == 2);
}

TEST_CASE("batches pad with PAD, wrap targets in BOS/EOS, and keep masks consistent") {
    std::vector<EncodedPair> pairs{{{4, 5, 6}, {7}}, {{4}, {8, 9}}};
    const Batch b = make_batch(pairs, {0, 1});
    CHECK(b.size() == 2);
    CHECK(b.src[0] == std::vector<int>{4, 5, 6});
    CHECK(b.src[1] == std::vector<int>{4, Vocab::kPad, Vocab::kPad});
    CHECK(b.tgt[0] == std::vector<int>{Vocab::kBos, 7, Vocab::kEos, Vocab::kPad});
    CHECK(b.tgt[1] == std::vector<int>{Vocab::kBos, 8, 9, Vocab::kEos});
    for (size_t i = 0; i < b.size(); ++i) {
        for (size_t j = 0; j < b.src[i].size(); ++j) {
            CHECK(b.src_mask[i][j] == (j < static_cast<size_t>(b.src_len[i])));
            if (!b.src_mask[i][j]) CHECK(b.src[i][j] == Vocab::kPad);
        }
        // EOS exactly once, at the end of the real target.
        int eos_count = 0;
        for (size_t j = 0; j < b.tgt[i].size(); ++j)
            if (b.tgt[i][j] == Vocab::kEos) ++eos_count;
        CHECK(eos_count == 1);
        CHECK(b.tgt[i][static_cast<size_t>(b.tgt_len[i]) - 1] == Vocab::kEos);
        // No PAD or BOS inside the source.
        for (size_t j = 0; j < static_cast<size_t>(b.src_len[i]); ++j) {
            CHECK(b.src[i][j] != Vocab::kPad);
            CHECK(b.src[i][j] != Vocab::kBos);
        }
    }
    CHECK(b.src_seq(1) == std::vector<int>{4});
    CHECK(b.tgt_seq(0) == std::vector<int>{Vocab::kBos, 7, Vocab::kEos});
}

TEST_CASE("make_batches is seed-deterministic and covers every pair once") {
    std::vector<EncodedPair> pairs;
    for (int i = 0; i < 10; ++i) pairs.push_back({{4 + i}, {4 + i}});
    Rng r1(5), r2(5);
    const auto a = make_batches(pairs, 3, r1);
    const auto b = make_batches(pairs, 3, r2);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() == 4);
    std::multiset<int> seen;
    for (size_t k = 0; k < a.size(); ++k) {
        REQUIRE(a[k].size() == b[k].size());
        for (size_t i = 0; i < a[k].size(); ++i) {
            CHECK(a[k].src[i] == b[k].src[i]);
            seen.insert(a[k].src_seq(i)[0]);
        }
    }
    CHECK(seen.size() == 10);
}
