#pragma once

#include <array>
#include <string>
#include <vector>

#include "cgusum/error.hpp"

namespace cgusum {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

using TokenSeq = std::vector<std::string>;

/// Clipped n-gram overlap F1: counts with multiplicity, clipped per n-gram
/// type. Either side shorter than n scores zero.
RougeScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int64_t n);

/// Longest-common-subsequence F1 with beta = 1.
RougeScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

/// Repetition proxy: per sentence, (total - distinct) / total n-grams, then
/// 100 * mean over sentences. Sentences with no n-grams count as 0.
double duplicate_rate(const std::vector<TokenSeq>& sentences, int64_t n);

struct DuplicateReport {
    // Index i holds the (i+1)-gram percentage.
    std::array<double, 4> pct{};
};

struct CorpusEval {
    RougeScore rouge1;
    RougeScore rouge2;
    RougeScore rougeL;
    DuplicateReport candidate_dup;
    DuplicateReport reference_dup;
    int64_t pairs = 0;

    std::string to_json() const;
};

/// Macro-averaged ROUGE over aligned pairs plus duplicate rates over the
/// candidates (reference rates are kept for the comparison table).
CorpusEval corpus_eval(const std::vector<TokenSeq>& candidates,
                       const std::vector<TokenSeq>& references);

}  // namespace cgusum
