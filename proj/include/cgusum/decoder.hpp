#pragma once

#include "cgusum/layers.hpp"

namespace cgusum {

/// Decoder-side parameters bound into a graph. w_a is the bilinear attention
/// score matrix [d_s, d_h]; w_out/b_out map [c_t; s_t] to vocabulary logits.
struct DecoderVars {
    Var embedding;  // [|Y|, emb_dim]
    LstmVars lstm;
    Var w_a;    // [d_s, d_h]
    Var w_out;  // [|Y|, d_h + d_s]
    Var b_out;  // [|Y|]
};

struct DecodeStep {
    Var p_vocab;     // distribution over the target vocabulary
    Var logits;      // pre-softmax logits (used for the training loss)
    LstmState state; // updated (s, C)
    Var alpha;       // attention row over source positions
};

/// Attention distribution e_i = s_prev^T w_a h_i over unmasked positions,
/// normalized with softmax. Masked positions get exactly zero weight.
Var attention_weights(Var s_prev, const EncoderStates& enc, Var w_a);

/// c = sum_i alpha_i h_i.
Var context_vector(Var alpha, Var h);

/// One decoder step: embeds the previous token, advances the LSTM, attends
/// over the encoder states with the PREVIOUS hidden state, and maps
/// [context; new state] to a vocabulary distribution.
DecodeStep decode_step(int y_prev_id, const LstmState& state, const EncoderStates& enc,
                       const DecoderVars& p);

}  // namespace cgusum
