#pragma once

#include <vector>

#include "cgusum/model.hpp"

namespace cgusum {

/// Partial or complete decode. Tokens exclude BOS/EOS; log_prob accumulates
/// every sampled step including the EOS step of finished hypotheses.
struct Hypothesis {
    std::vector<int> tokens;
    double log_prob = 0.0;
    bool finished = false;

    // Steps taken: one per emitted token plus the EOS step when finished.
    int64_t steps() const { return static_cast<int64_t>(tokens.size()) + (finished ? 1 : 0); }
    double ranking_score(bool length_norm) const {
        if (!length_norm) return log_prob;
        return log_prob / static_cast<double>(std::max<int64_t>(1, steps()));
    }
};

/// Argmax decoding; ties break toward the lowest token id. PAD and BOS are
/// never emitted. Stops at EOS or after max_len tokens.
std::vector<int> greedy_decode(const Model& model, const std::vector<int>& src_ids, int64_t max_len);

/// Standard beam search over cumulative log-probabilities. Hypotheses that
/// select EOS among the step's survivors retire to the finished pool; the
/// final answer maximizes the ranking score (total log-prob, divided by step
/// count when length_norm is on) with deterministic (score, token sequence)
/// tie-breaking.
std::vector<int> beam_search(const Model& model, const std::vector<int>& src_ids, int64_t beam,
                             int64_t max_len, bool length_norm);

/// All hypotheses the search would rank at the end; used by tests and by the
/// exhaustive-enumeration oracle.
std::vector<Hypothesis> beam_search_candidates(const Model& model, const std::vector<int>& src_ids,
                                               int64_t beam, int64_t max_len);

}  // namespace cgusum
