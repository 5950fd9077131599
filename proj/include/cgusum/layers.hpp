#pragma once

#include <utility>
#include <vector>

#include "cgusum/graph.hpp"

namespace cgusum {

/// LSTM cell parameters bound into a graph. w_x is [4*hidden, input],
/// w_h is [4*hidden, hidden], b is [4*hidden]. Gate blocks are laid out in
/// the fixed order [input, forget, candidate, output].
struct LstmVars {
    Var w_x;
    Var w_h;
    Var b;
};

struct LstmState {
    Var h;
    Var c;
};

/// One LSTM step:
///   [i, f, g, o] = w_x * x + w_h * h_prev + b
///   c = sigmoid(f) .* c_prev + sigmoid(i) .* tanh(g)
///   h = sigmoid(o) .* tanh(c)
LstmState lstm_cell(const LstmVars& p, Var x, const LstmState& prev);

/// Per-token bidirectional encoder outputs. Row i of h is the concatenation
/// of the forward state at i and the backward state at i, so d_h = 2*hidden.
/// mask marks real tokens (true) versus padding (false).
struct EncoderStates {
    Var h;
    std::vector<bool> mask;
    // Final states of each direction (the backward "final" is at token 0),
    // used to initialize the decoder.
    LstmState fwd_final;
    LstmState bwd_final;
};

struct BiLstmVars {
    Var embedding;  // [V, emb_dim]
    LstmVars fwd;
    LstmVars bwd;
};

/// Runs both directions over the token ids with zero initial states and
/// stacks [fwd_i; bwd_i] per position.
EncoderStates bilstm_encode(Graph& g, const BiLstmVars& p, const std::vector<int>& src_ids);

}  // namespace cgusum
