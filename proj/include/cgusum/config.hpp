#pragma once

#include <string>

#include "cgusum/data.hpp"
#include "cgusum/model.hpp"
#include "cgusum/trainer.hpp"

namespace cgusum {

/// Merged view of model, training, and decoding settings. Values start at
/// the built-in defaults, a JSON config file overrides them, and command-line
/// flags override the file. Unknown keys in the file are rejected.
struct RunConfig {
    // model
    int64_t emb_dim = 512;
    int64_t hidden = 512;
    bool cgu = true;
    int64_t d_b = 0;  // 0 selects d_h / 2
    uint64_t seed = 1;
    int64_t max_src_len = 400;
    int64_t max_tgt_len = 100;
    // data
    // 0 selects the tokenizer-dependent default (50k whitespace, 10k char).
    int64_t src_vocab_size = 0;
    int64_t tgt_vocab_size = 0;
    int64_t min_freq = 1;
    std::string tokenizer = "whitespace";
    // training
    int64_t batch_size = 64;
    int64_t epochs = 1;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_lo = -10.0;
    double clip_hi = 10.0;
    int64_t lr_halve_until_epoch = -1;  // -1 means every epoch
    int64_t checkpoint_every = 1;
    int64_t threads = 1;
    // decoding
    int64_t beam = 5;
    int64_t gen_max_len = 0;  // 0 selects max_tgt_len
    bool length_norm = true;

    static RunConfig from_file(const std::string& path);
    void validate() const;

    int64_t vocab_cap(bool /*source*/) const;
    TokenizerMode tokenizer_mode() const { return tokenizer_mode_from_string(tokenizer); }
    ModelConfig model_config(int64_t src_vocab, int64_t tgt_vocab) const;
    TrainConfig train_config() const;
};

}  // namespace cgusum
