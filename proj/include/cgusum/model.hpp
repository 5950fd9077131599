#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgusum/cgu.hpp"
#include "cgusum/data.hpp"
#include "cgusum/decoder.hpp"
#include "cgusum/layers.hpp"

namespace cgusum {

struct ModelConfig {
    int64_t src_vocab_size = 0;
    int64_t tgt_vocab_size = 0;
    int64_t emb_dim = 512;
    int64_t hidden = 512;
    bool cgu_enabled = true;
    int64_t d_b = 0;  // CGU branch width; 0 means d_h / 2
    uint64_t seed = 1;
    int64_t max_src_len = 400;
    int64_t max_tgt_len = 100;
    // Token space definition; rides along so generation tokenizes inputs the
    // same way training did.
    std::string tokenizer = "whitespace";

    int64_t d_h() const { return 2 * hidden; }
    int64_t branch_width() const { return d_b > 0 ? d_b : hidden; }
    void validate() const;
};

/// Ordered name -> Tensor registry. Iteration and serialization follow
/// registration order so checkpoints are byte-stable.
class ParamStore {
public:
    void add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    size_t size() const { return entries_.size(); }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, size_t> index_;
};

using GradMap = std::map<std::string, Tensor>;

/// Per-pass binding of every parameter into one graph, plus the assembled
/// layer views over those vars.
struct BoundModel {
    Graph* g = nullptr;
    std::map<std::string, Var> vars;
    BiLstmVars encoder;
    CguVars cgu;
    DecoderVars decoder;
    Var dec_init_h_w, dec_init_h_b, dec_init_c_w, dec_init_c_b;
};

struct SequenceLoss {
    Var total;                      // sum of per-step NLL, this sequence
    std::vector<double> step_nll;   // forward values per step
};

struct BatchLoss {
    double loss = 0.0;  // mean per-sequence NLL (sum over steps / N)
    std::vector<std::vector<double>> per_token_nll;
};

/// Embeddings -> BiLSTM encoder -> CGU -> attention decoder -> loss.
/// Owns the parameter registry; all forward passes bind parameters into a
/// caller-provided graph.
class Model {
public:
    Model() = default;
    static Model init(const ModelConfig& cfg, Dtype dt);
    // Restores from checkpoint tensors; validates presence and shapes.
    static Model from_params(const ModelConfig& cfg, ParamStore params);

    const ModelConfig& config() const { return cfg_; }
    Dtype dtype() const { return dtype_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    BoundModel bind(Graph& g) const;

    // Encoder plus optional CGU refinement; mask is all-true (sequences are
    // processed at their real length).
    EncoderStates encode(BoundModel& bm, const std::vector<int>& src_ids) const;
    // Initial decoder state from the final states of both directions.
    LstmState initial_decoder_state(BoundModel& bm, const EncoderStates& enc) const;
    DecodeStep step(BoundModel& bm, int y_prev, const LstmState& state,
                    const EncoderStates& enc) const;

    // Teacher-forced loss of one sequence. tgt_ids must be BOS ... EOS.
    SequenceLoss sequence_loss(BoundModel& bm, const std::vector<int>& src_ids,
                               const std::vector<int>& tgt_ids) const;

    // Batch loss per the training objective: mean over sequences of summed
    // -log p, padding steps excluded. Summation over sequences uses a
    // value-canonical order so the result is invariant under batch reorder.
    BatchLoss forward_loss(const Batch& batch) const;

    // Loss and gradients of one batch sequence, scaled by inv_n (the batch
    // normalization). Thread-safe over distinct sequences.
    std::pair<double, GradMap> seq_loss_gradients(const Batch& batch, size_t i, double inv_n) const;

    // Gradients of forward_loss w.r.t. every parameter (zeros when a
    // parameter is unreachable). Returns the loss as well. Accumulation runs
    // in sequence-index order regardless of worker count.
    double loss_and_gradients(const Batch& batch, GradMap& grads, int threads = 1) const;

private:
    ModelConfig cfg_;
    Dtype dtype_ = Dtype::f32;
    ParamStore params_;
};

}  // namespace cgusum
