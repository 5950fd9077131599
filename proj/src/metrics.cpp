#include "cgusum/metrics.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"

namespace cgusum {

namespace {

double f1_of(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

std::map<TokenSeq, int64_t> ngram_counts(const TokenSeq& toks, int64_t n) {
    std::map<TokenSeq, int64_t> counts;
    if (static_cast<int64_t>(toks.size()) < n) return counts;
    for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i)
        ++counts[TokenSeq(toks.begin() + static_cast<long>(i),
                          toks.begin() + static_cast<long>(i) + n)];
    return counts;
}

}  // namespace

RougeScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int64_t n) {
    if (n < 1) throw InputError("rouge_n: n must be >= 1");
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    int64_t cand_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [gram, c] : cand) cand_total += c;
    for (const auto& [gram, c] : ref) ref_total += c;
    for (const auto& [gram, c] : cand) {
        auto it = ref.find(gram);
        if (it != ref.end()) overlap += std::min(c, it->second);
    }
    RougeScore s;
    if (cand_total == 0 || ref_total == 0) return s;
    s.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
    s.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
    s.f1 = f1_of(s.precision, s.recall);
    return s;
}

RougeScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
    RougeScore s;
    if (candidate.empty() || reference.empty()) return s;
    const size_t n = candidate.size(), m = reference.size();
    std::vector<int64_t> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1
                                                          : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[m]);
    s.precision = lcs / static_cast<double>(n);
    s.recall = lcs / static_cast<double>(m);
    s.f1 = f1_of(s.precision, s.recall);
    return s;
}

double duplicate_rate(const std::vector<TokenSeq>& sentences, int64_t n) {
    if (n < 1 || n > 4) throw InputError("duplicate_rate: n must be in 1..4");
    if (sentences.empty()) throw InputError("duplicate_rate: empty corpus");
    double acc = 0.0;
    for (const TokenSeq& sent : sentences) {
        const auto counts = ngram_counts(sent, n);
        int64_t total = 0;
        for (const auto& [gram, c] : counts) total += c;
        if (total == 0) continue;  // contributes 0
        const int64_t distinct = static_cast<int64_t>(counts.size());
        acc += static_cast<double>(total - distinct) / static_cast<double>(total);
    }
    return 100.0 * acc / static_cast<double>(sentences.size());
}

CorpusEval corpus_eval(const std::vector<TokenSeq>& candidates,
                       const std::vector<TokenSeq>& references) {
    if (candidates.size() != references.size())
        throw InputError("corpus_eval: " + std::to_string(candidates.size()) + " candidates vs " +
                         std::to_string(references.size()) + " references");
    if (candidates.empty()) throw InputError("corpus_eval: no pairs");
    CorpusEval ev;
    ev.pairs = static_cast<int64_t>(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) {
        const RougeScore r1 = rouge_n(candidates[i], references[i], 1);
        const RougeScore r2 = rouge_n(candidates[i], references[i], 2);
        const RougeScore rl = rouge_l(candidates[i], references[i]);
        ev.rouge1.precision += r1.precision;
        ev.rouge1.recall += r1.recall;
        ev.rouge1.f1 += r1.f1;
        ev.rouge2.precision += r2.precision;
        ev.rouge2.recall += r2.recall;
        ev.rouge2.f1 += r2.f1;
        ev.rougeL.precision += rl.precision;
        ev.rougeL.recall += rl.recall;
        ev.rougeL.f1 += rl.f1;
    }
    const double inv = 1.0 / static_cast<double>(ev.pairs);
    for (RougeScore* s : {&ev.rouge1, &ev.rouge2, &ev.rougeL}) {
        s->precision *= inv;
        s->recall *= inv;
        s->f1 *= inv;
    }
    for (int64_t n = 1; n <= 4; ++n) {
        ev.candidate_dup.pct[static_cast<size_t>(n - 1)] = duplicate_rate(candidates, n);
        ev.reference_dup.pct[static_cast<size_t>(n - 1)] = duplicate_rate(references, n);
    }
    return ev;
}

std::string CorpusEval::to_json() const {
    nlohmann::json j = {{"rouge1_f", rouge1.f1},
                        {"rouge2_f", rouge2.f1},
                        {"rougeL_f", rougeL.f1},
                        {"dup",
                         {{"1", candidate_dup.pct[0]},
                          {"2", candidate_dup.pct[1]},
                          {"3", candidate_dup.pct[2]},
                          {"4", candidate_dup.pct[3]}}},
                        {"pairs", pairs}};
    return j.dump();
}

}  // namespace cgusum
