#include "cgusum/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "cgusum/error.hpp"
#include "json.hpp"

namespace cgusum {

namespace {

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Decodes one UTF-8 code point starting at i; returns its byte length.
// Throws on malformed sequences.
size_t utf8_advance(const std::string& s, size_t i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len;
    if (c < 0x80) {
        len = 1;
    } else if ((c & 0xE0) == 0xC0) {
        len = 2;
    } else if ((c & 0xF0) == 0xE0) {
        len = 3;
    } else if ((c & 0xF8) == 0xF0) {
        len = 4;
    } else {
        throw InputError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > s.size()) throw InputError("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (size_t j = 1; j < len; ++j) {
        if ((static_cast<unsigned char>(s[i + j]) & 0xC0) != 0x80)
            throw InputError("invalid UTF-8 continuation byte at offset " + std::to_string(i + j));
    }
    return len;
}

const std::array<const char*, 4> kReservedTokens = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_reserved_token(const std::string& tok) {
    return std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) != kReservedTokens.end();
}

}  // namespace

TokenizerMode tokenizer_mode_from_string(const std::string& s) {
    if (s == "whitespace") return TokenizerMode::whitespace;
    if (s == "char") return TokenizerMode::character;
    throw ConfigError("unknown tokenizer mode '" + s + "' (want whitespace or char)");
}

const char* tokenizer_mode_name(TokenizerMode m) {
    return m == TokenizerMode::whitespace ? "whitespace" : "char";
}

std::vector<std::string> tokenize(const std::string& text, TokenizerMode mode) {
    std::vector<std::string> toks;
    if (mode == TokenizerMode::whitespace) {
        size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
            size_t j = i;
            while (j < text.size() && !is_ascii_space(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i) toks.push_back(text.substr(i, j - i));
            i = j;
        }
        // Validate encoding even though the split is byte-based.
        for (size_t i2 = 0; i2 < text.size();) i2 += utf8_advance(text, i2);
    } else {
        size_t i = 0;
        while (i < text.size()) {
            const size_t len = utf8_advance(text, i);
            if (!(len == 1 && is_ascii_space(static_cast<unsigned char>(text[i]))))
                toks.push_back(text.substr(i, len));
            i += len;
        }
    }
    return toks;
}

Vocab::Vocab() {
    for (const char* t : kReservedTokens) {
        token_to_id_.emplace(t, static_cast<int>(id_to_token_.size()));
        id_to_token_.emplace_back(t);
    }
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& corpus_tokens, int64_t max_size,
                   int64_t min_freq) {
    if (corpus_tokens.empty()) throw InputError("build_vocab: empty corpus");
    std::unordered_map<std::string, int64_t> freq;
    for (const auto& seq : corpus_tokens)
        for (const auto& tok : seq)
            if (!is_reserved_token(tok)) ++freq[tok];

    std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    for (const auto& [tok, count] : ranked) {
        if (count < min_freq) break;
        if (v.size() >= max_size) break;
        v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
        v.id_to_token_.push_back(tok);
    }
    return v;
}

int Vocab::encode_token(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(encode_token(t));
    return ids;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw InputError("token id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
    std::vector<std::string> toks;
    toks.reserve(ids.size());
    for (int id : ids) toks.push_back(token(id));
    return toks;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write vocab file " + path);
    for (size_t i = kNumReserved; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read vocab file " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (v.token_to_id_.count(line))
            throw InputError("duplicate token '" + line + "' in vocab file " + path);
        v.token_to_id_.emplace(line, static_cast<int>(v.id_to_token_.size()));
        v.id_to_token_.push_back(line);
    }
    return v;
}

std::vector<ExamplePair> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open corpus file " + path);
    std::vector<ExamplePair> pairs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() && in.eof()) break;  // tolerate trailing newline
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("source") || !j.contains("summary") ||
            !j["source"].is_string() || !j["summary"].is_string())
            throw InputError(path + ":" + std::to_string(line_no) +
                             ": expected an object with string fields \"source\" and \"summary\"");
        ExamplePair p{j["source"].get<std::string>(), j["summary"].get<std::string>()};
        if (p.source.empty() || p.summary.empty())
            throw InputError(path + ":" + std::to_string(line_no) + ": empty source or summary");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<EncodedPair> encode_corpus(const std::vector<ExamplePair>& pairs, const Vocab& src_vocab,
                                       const Vocab& tgt_vocab, TokenizerMode mode,
                                       int64_t max_src_len, int64_t max_tgt_len) {
    std::vector<EncodedPair> out;
    out.reserve(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        EncodedPair e;
        e.src = src_vocab.encode(tokenize(pairs[i].source, mode));
        e.tgt = tgt_vocab.encode(tokenize(pairs[i].summary, mode));
        if (e.src.empty() || e.tgt.empty())
            throw InputError("pair " + std::to_string(i + 1) + ": empty after tokenization");
        if (static_cast<int64_t>(e.src.size()) > max_src_len) e.src.resize(static_cast<size_t>(max_src_len));
        if (static_cast<int64_t>(e.tgt.size()) > max_tgt_len) e.tgt.resize(static_cast<size_t>(max_tgt_len));
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<int> Batch::src_seq(size_t i) const {
    return std::vector<int>(src[i].begin(), src[i].begin() + static_cast<size_t>(src_len[i]));
}

std::vector<int> Batch::tgt_seq(size_t i) const {
    return std::vector<int>(tgt[i].begin(), tgt[i].begin() + static_cast<size_t>(tgt_len[i]));
}

Batch make_batch(const std::vector<EncodedPair>& pairs, const std::vector<size_t>& indices) {
    if (indices.empty()) throw InputError("make_batch: empty index list");
    Batch b;
    size_t n_max = 0, m_max = 0;
    for (size_t idx : indices) {
        n_max = std::max(n_max, pairs[idx].src.size());
        m_max = std::max(m_max, pairs[idx].tgt.size() + 2);  // BOS + EOS
    }
    for (size_t idx : indices) {
        const EncodedPair& p = pairs[idx];
        std::vector<int> s(n_max, Vocab::kPad);
        std::copy(p.src.begin(), p.src.end(), s.begin());
        std::vector<int> t(m_max, Vocab::kPad);
        t[0] = Vocab::kBos;
        std::copy(p.tgt.begin(), p.tgt.end(), t.begin() + 1);
        t[p.tgt.size() + 1] = Vocab::kEos;
        b.src_len.push_back(static_cast<int64_t>(p.src.size()));
        b.tgt_len.push_back(static_cast<int64_t>(p.tgt.size() + 2));
        std::vector<bool> sm(n_max, false), tm(m_max, false);
        std::fill(sm.begin(), sm.begin() + static_cast<long>(p.src.size()), true);
        std::fill(tm.begin(), tm.begin() + static_cast<long>(p.tgt.size() + 2), true);
        b.src.push_back(std::move(s));
        b.tgt.push_back(std::move(t));
        b.src_mask.push_back(std::move(sm));
        b.tgt_mask.push_back(std::move(tm));
    }
    return b;
}

std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, int64_t batch_size, Rng& rng) {
    if (pairs.empty()) throw InputError("make_batches: empty corpus");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<size_t> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<Batch> batches;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), at + static_cast<size_t>(batch_size));
        batches.push_back(make_batch(pairs, std::vector<size_t>(order.begin() + static_cast<long>(at),
                                                                order.begin() + static_cast<long>(end))));
    }
    return batches;
}

}  // namespace cgusum
