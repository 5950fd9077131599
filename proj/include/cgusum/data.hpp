#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgusum/rng.hpp"

namespace cgusum {

enum class TokenizerMode { whitespace, character };

TokenizerMode tokenizer_mode_from_string(const std::string& s);
const char* tokenizer_mode_name(TokenizerMode m);

/// whitespace: split on runs of ASCII whitespace. character: one token per
/// non-whitespace Unicode code point (strict UTF-8).
std::vector<std::string> tokenize(const std::string& text, TokenizerMode mode);

/// Token table with the reserved block PAD=0, UNK=1, BOS=2, EOS=3 followed by
/// corpus tokens ranked by frequency (ties broken lexicographically).
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kNumReserved = 4;

    Vocab();
    static Vocab build(const std::vector<std::vector<std::string>>& corpus_tokens, int64_t max_size,
                       int64_t min_freq);

    int encode_token(const std::string& tok) const;  // UNK when absent
    std::vector<int> encode(const std::vector<std::string>& toks) const;
    const std::string& token(int id) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;
    int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }

    // One non-reserved token per line; the reserved block is implicit, so the
    // token on line L has id L - 1 + 4.
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

struct ExamplePair {
    std::string source;
    std::string summary;
};

/// JSON-lines corpus: one object per line with string fields "source" and
/// "summary". Errors name the offending line.
std::vector<ExamplePair> load_corpus(const std::string& path);

struct EncodedPair {
    std::vector<int> src;  // content ids only
    std::vector<int> tgt;  // content ids only; BOS/EOS added at batching
};

/// Tokenizes and encodes, truncating to the configured maxima. The target
/// maximum is the content length; BOS/EOS are added on top.
std::vector<EncodedPair> encode_corpus(const std::vector<ExamplePair>& pairs, const Vocab& src_vocab,
                                       const Vocab& tgt_vocab, TokenizerMode mode,
                                       int64_t max_src_len, int64_t max_tgt_len);

/// Padded id matrices with lengths and masks. tgt rows are BOS-prefixed and
/// EOS-suffixed; ids beyond each length are PAD.
struct Batch {
    std::vector<std::vector<int>> src;  // B x n_max
    std::vector<std::vector<int>> tgt;  // B x m_max
    std::vector<int64_t> src_len;
    std::vector<int64_t> tgt_len;
    std::vector<std::vector<bool>> src_mask;
    std::vector<std::vector<bool>> tgt_mask;

    size_t size() const { return src.size(); }
    std::vector<int> src_seq(size_t i) const;  // unpadded
    std::vector<int> tgt_seq(size_t i) const;  // unpadded, with BOS/EOS
};

Batch make_batch(const std::vector<EncodedPair>& pairs, const std::vector<size_t>& indices);

/// Seeded shuffle + split into batches of at most batch_size.
std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs, int64_t batch_size, Rng& rng);

}  // namespace cgusum
