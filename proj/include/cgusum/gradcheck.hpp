#pragma once

#include <string>
#include <vector>

#include "cgusum/model.hpp"

namespace cgusum {

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
};

struct GradCheckOptions {
    int64_t hidden = 4;
    int64_t emb_dim = 4;
    int64_t vocab = 12;
    int64_t src_len = 5;
    int64_t tgt_len = 4;  // content tokens, BOS/EOS added on top
    uint64_t seed = 7;
    bool cgu = true;
    double eps = 1e-5;
    // Test hook: bump one analytic gradient entry so the report flags it.
    std::string corrupt_param;
};

/// Float64 full-model check of analytic gradients against central finite
/// differences. Reports max |analytic - fd| / max(1, |analytic|) per
/// parameter, every parameter exactly once. Dims above 64 are refused.
std::vector<GradCheckEntry> model_gradcheck(const GradCheckOptions& opt);

}  // namespace cgusum
