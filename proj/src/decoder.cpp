#include "cgusum/decoder.hpp"

#include <algorithm>

namespace cgusum {

Var attention_weights(Var s_prev, const EncoderStates& enc, Var w_a) {
    if (std::none_of(enc.mask.begin(), enc.mask.end(), [](bool b) { return b; }))
        throw InputError("attention_weights: every source position is masked");
    // e = H (w_a^T s), so e_i = s^T w_a h_i.
    Var scores = matvec(enc.h, matvec_t(w_a, s_prev));
    return softmax_masked(scores, enc.mask);
}

Var context_vector(Var alpha, Var h) {
    if (alpha.shape().size() != 1 || h.shape().size() != 2 || alpha.shape()[0] != h.shape()[0])
        throw ShapeError("context_vector: alpha " + shape_str(alpha.shape()) + " vs h " +
                         shape_str(h.shape()));
    return matvec_t(h, alpha);
}

DecodeStep decode_step(int y_prev_id, const LstmState& state, const EncoderStates& enc,
                       const DecoderVars& p) {
    Var x = embed_row(p.embedding, y_prev_id);
    LstmState next = lstm_cell(p.lstm, x, state);
    // Scores use the state from before this step's update.
    Var alpha = attention_weights(state.h, enc, p.w_a);
    Var c = context_vector(alpha, enc.h);
    Var logits = add(matvec(p.w_out, concat({c, next.h})), p.b_out);
    DecodeStep out;
    out.p_vocab = softmax(logits, 0);
    out.logits = logits;
    out.state = next;
    out.alpha = alpha;
    return out;
}

}  // namespace cgusum
