#include "cgusum/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace cgusum {

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");

    RunConfig c;
    const std::set<std::string> known = {
        "emb_dim",   "hidden",     "cgu",        "d_b",        "seed",
        "max_src_len", "max_tgt_len", "src_vocab_size", "tgt_vocab_size", "min_freq",
        "tokenizer", "batch_size", "epochs",     "lr",         "beta1",
        "beta2",     "eps",        "clip_lo",    "clip_hi",    "lr_halve_until_epoch",
        "checkpoint_every", "threads", "beam",   "gen_max_len", "length_norm"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config key \"" + key + "\"");
    }
    try {
        if (j.contains("emb_dim")) c.emb_dim = j["emb_dim"].get<int64_t>();
        if (j.contains("hidden")) c.hidden = j["hidden"].get<int64_t>();
        if (j.contains("cgu")) c.cgu = j["cgu"].get<bool>();
        if (j.contains("d_b")) c.d_b = j["d_b"].get<int64_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
        if (j.contains("max_src_len")) c.max_src_len = j["max_src_len"].get<int64_t>();
        if (j.contains("max_tgt_len")) c.max_tgt_len = j["max_tgt_len"].get<int64_t>();
        if (j.contains("src_vocab_size")) c.src_vocab_size = j["src_vocab_size"].get<int64_t>();
        if (j.contains("tgt_vocab_size")) c.tgt_vocab_size = j["tgt_vocab_size"].get<int64_t>();
        if (j.contains("min_freq")) c.min_freq = j["min_freq"].get<int64_t>();
        if (j.contains("tokenizer")) c.tokenizer = j["tokenizer"].get<std::string>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int64_t>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<int64_t>();
        if (j.contains("lr")) c.lr = j["lr"].get<double>();
        if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
        if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
        if (j.contains("eps")) c.eps = j["eps"].get<double>();
        if (j.contains("clip_lo")) c.clip_lo = j["clip_lo"].get<double>();
        if (j.contains("clip_hi")) c.clip_hi = j["clip_hi"].get<double>();
        if (j.contains("lr_halve_until_epoch"))
            c.lr_halve_until_epoch = j["lr_halve_until_epoch"].get<int64_t>();
        if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"].get<int64_t>();
        if (j.contains("threads")) c.threads = j["threads"].get<int64_t>();
        if (j.contains("beam")) c.beam = j["beam"].get<int64_t>();
        if (j.contains("gen_max_len")) c.gen_max_len = j["gen_max_len"].get<int64_t>();
        if (j.contains("length_norm")) c.length_norm = j["length_norm"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    c.validate();
    return c;
}

void RunConfig::validate() const {
    if (emb_dim < 1 || hidden < 1) throw ConfigError("emb_dim and hidden must be >= 1");
    if (d_b < 0) throw ConfigError("d_b must be >= 0");
    if (max_src_len < 1 || max_tgt_len < 1) throw ConfigError("length limits must be >= 1");
    if (src_vocab_size < 0 || tgt_vocab_size < 0) throw ConfigError("vocab sizes must be >= 0");
    if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
    tokenizer_mode_from_string(tokenizer);  // validates
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lr < 0) throw ConfigError("lr must be >= 0");
    if (!(clip_lo < clip_hi)) throw ConfigError("clip range must satisfy lo < hi");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (beam < 1) throw ConfigError("beam must be >= 1");
    if (gen_max_len < 0) throw ConfigError("gen_max_len must be >= 0");
}

int64_t RunConfig::vocab_cap(bool source) const {
    const int64_t configured = source ? src_vocab_size : tgt_vocab_size;
    if (configured > 0) return configured;
    return tokenizer_mode() == TokenizerMode::whitespace ? 50000 : 10000;
}

ModelConfig RunConfig::model_config(int64_t src_vocab, int64_t tgt_vocab) const {
    ModelConfig m;
    m.src_vocab_size = src_vocab;
    m.tgt_vocab_size = tgt_vocab;
    m.emb_dim = emb_dim;
    m.hidden = hidden;
    m.cgu_enabled = cgu;
    m.d_b = d_b;
    m.seed = seed;
    m.max_src_len = max_src_len;
    m.max_tgt_len = max_tgt_len;
    m.tokenizer = tokenizer;
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.lr = lr;
    t.beta1 = beta1;
    t.beta2 = beta2;
    t.eps = eps;
    t.clip_lo = clip_lo;
    t.clip_hi = clip_hi;
    t.lr_halve_until_epoch =
        lr_halve_until_epoch < 0 ? std::numeric_limits<int64_t>::max() : lr_halve_until_epoch;
    t.seed = seed;
    t.checkpoint_every = checkpoint_every;
    t.threads = static_cast<int>(threads);
    return t;
}

}  // namespace cgusum
