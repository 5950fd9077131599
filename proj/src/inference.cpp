#include "cgusum/inference.hpp"

#include <algorithm>
#include <cmath>

namespace cgusum {

namespace {

// One live decoding path: emitted tokens plus the decoder state to extend it.
struct LiveHyp {
    std::vector<int> tokens;
    double log_prob = 0.0;
    LstmState state;
};

struct Extension {
    size_t parent;
    int token;
    double log_prob;  // cumulative
};

bool extension_less(const Extension& a, const Extension& b, const std::vector<LiveHyp>& live) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    // Deterministic tie-break: lexicographic token sequence.
    const std::vector<int>& pa = live[a.parent].tokens;
    const std::vector<int>& pb = live[b.parent].tokens;
    if (pa != pb) return pa < pb;
    return a.token < b.token;
}

}  // namespace

std::vector<int> greedy_decode(const Model& model, const std::vector<int>& src_ids, int64_t max_len) {
    if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
    Graph g;
    BoundModel bm = model.bind(g);
    EncoderStates enc = model.encode(bm, src_ids);
    LstmState state = model.initial_decoder_state(bm, enc);
    std::vector<int> out;
    int y_prev = Vocab::kBos;
    const int64_t vocab = model.config().tgt_vocab_size;
    while (static_cast<int64_t>(out.size()) < max_len) {
        DecodeStep step = model.step(bm, y_prev, state, enc);
        state = step.state;
        const Tensor& p = step.p_vocab.value();
        int best = -1;
        double best_p = -1.0;
        for (int64_t id = 0; id < vocab; ++id) {
            if (id == Vocab::kPad || id == Vocab::kBos) continue;
            const double pv = p.get(id);
            if (pv > best_p) {
                best_p = pv;
                best = static_cast<int>(id);
            }
        }
        if (best == Vocab::kEos) break;
        out.push_back(best);
        y_prev = best;
    }
    return out;
}

std::vector<Hypothesis> beam_search_candidates(const Model& model, const std::vector<int>& src_ids,
                                               int64_t beam, int64_t max_len) {
    if (beam < 1) throw ConfigError("beam_search: beam must be >= 1");
    if (max_len < 1) throw ConfigError("beam_search: max_len must be >= 1");
    Graph g;
    BoundModel bm = model.bind(g);
    EncoderStates enc = model.encode(bm, src_ids);

    std::vector<LiveHyp> live;
    live.push_back(LiveHyp{{}, 0.0, model.initial_decoder_state(bm, enc)});
    std::vector<Hypothesis> finished;
    const int64_t vocab = model.config().tgt_vocab_size;

    for (int64_t step_no = 0; step_no < max_len && !live.empty(); ++step_no) {
        std::vector<Extension> pool;
        std::vector<LstmState> states(live.size());
        for (size_t h = 0; h < live.size(); ++h) {
            const int y_prev = live[h].tokens.empty() ? Vocab::kBos : live[h].tokens.back();
            DecodeStep out = model.step(bm, y_prev, live[h].state, enc);
            states[h] = out.state;
            const Tensor& p = out.p_vocab.value();
            for (int64_t id = 0; id < vocab; ++id) {
                if (id == Vocab::kPad || id == Vocab::kBos) continue;
                pool.push_back(Extension{h, static_cast<int>(id),
                                         live[h].log_prob + std::log(p.get(id))});
            }
        }
        std::sort(pool.begin(), pool.end(),
                  [&live](const Extension& a, const Extension& b) { return extension_less(a, b, live); });
        if (static_cast<int64_t>(pool.size()) > beam) pool.resize(static_cast<size_t>(beam));

        std::vector<LiveHyp> next_live;
        for (const Extension& ext : pool) {
            if (ext.token == Vocab::kEos) {
                Hypothesis done;
                done.tokens = live[ext.parent].tokens;
                done.log_prob = ext.log_prob;
                done.finished = true;
                finished.push_back(std::move(done));
            } else {
                LiveHyp h;
                h.tokens = live[ext.parent].tokens;
                h.tokens.push_back(ext.token);
                h.log_prob = ext.log_prob;
                h.state = states[ext.parent];
                next_live.push_back(std::move(h));
            }
        }
        live = std::move(next_live);
    }
    // Paths that hit the length cap compete as unfinished hypotheses.
    for (const LiveHyp& h : live) {
        Hypothesis cap;
        cap.tokens = h.tokens;
        cap.log_prob = h.log_prob;
        cap.finished = false;
        finished.push_back(std::move(cap));
    }
    return finished;
}

std::vector<int> beam_search(const Model& model, const std::vector<int>& src_ids, int64_t beam,
                             int64_t max_len, bool length_norm) {
    std::vector<Hypothesis> candidates = beam_search_candidates(model, src_ids, beam, max_len);
    if (candidates.empty()) return {};
    const Hypothesis* best = &candidates[0];
    for (const Hypothesis& h : candidates) {
        const double hs = h.ranking_score(length_norm);
        const double bs = best->ranking_score(length_norm);
        if (hs > bs || (hs == bs && h.tokens < best->tokens)) best = &h;
    }
    return best->tokens;
}

}  // namespace cgusum
