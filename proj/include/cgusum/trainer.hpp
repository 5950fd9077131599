#pragma once

#include <functional>
#include <limits>
#include <string>

#include "cgusum/checkpoint.hpp"
#include "cgusum/model.hpp"

namespace cgusum {

struct TrainConfig {
    int64_t batch_size = 64;
    int64_t epochs = 1;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_lo = -10.0;
    double clip_hi = 10.0;
    // The learning rate is halved at the end of every epoch up to and
    // including this one; afterwards it stays constant. The default never
    // stops halving.
    int64_t lr_halve_until_epoch = std::numeric_limits<int64_t>::max();
    uint64_t seed = 1;
    int64_t checkpoint_every = 1;  // 0 disables periodic checkpoints
    int threads = 1;               // capped by CGU_NUM_THREADS when set

    void validate() const;
};

/// First and second moment estimates per parameter plus the shared step
/// counter. Moments match their parameters' shapes and dtypes.
class AdamState {
public:
    AdamState(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    int64_t step_count() const { return t_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }
    const GradMap& m() const { return m_; }
    const GradMap& v() const { return v_; }
    GradMap& m() { return m_; }
    GradMap& v() { return v_; }
    void set_step_count(int64_t t) { t_ = t; }

    // Bias-corrected Adam update, applied in place to params.
    void step(ParamStore& params, const GradMap& grads, double lr);

private:
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    GradMap m_, v_;
};

/// Elementwise clamp into [lo, hi]. NaN gradients are reported with the
/// parameter name.
void clip_gradients(GradMap& grads, double lo, double hi);

/// End-of-epoch schedule step: exactly half.
double halve_lr(double lr);

struct EpochStats {
    int64_t epoch = 0;
    double lr = 0.0;          // rate used during the epoch
    double train_loss = 0.0;  // mean per-sequence NLL over the epoch
    double per_token_nll = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<EpochStats> log;
    double final_lr = 0.0;
};

// Effective worker count after the CGU_NUM_THREADS cap.
int effective_threads(int requested);

/// Deterministic given the seed: init, shuffling, and batch order are fixed.
/// When out_dir is nonempty, appends one JSON line per epoch to
/// out_dir/train_log.jsonl and writes periodic + final checkpoints there.
TrainResult train(const std::vector<EncodedPair>& corpus, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const std::string& out_dir = "",
                  const std::function<void(const EpochStats&)>& on_epoch = nullptr);

}  // namespace cgusum
