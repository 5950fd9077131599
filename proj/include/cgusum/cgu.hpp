#pragma once

#include "cgusum/layers.hpp"

namespace cgusum {

struct ConvVars {
    Var w;  // [k, d_in, d_out]
    Var b;  // [d_out]
};

/// Convolutional gated unit parameters. Three parallel branches over the
/// encoder outputs (k=1; k=3; k=3 twice, avoiding a single large kernel),
/// each mapping d_h -> d_b with ReLU, channel-concatenated and merged back to
/// d_h by a k=1 convolution. w_att is the learned key projection of the
/// scaled dot-product self-attention.
struct CguVars {
    ConvVars branch1;   // k=1, d_h -> d_b
    ConvVars branch2;   // k=3, d_h -> d_b
    ConvVars branch3a;  // k=3, d_h -> d_b
    ConvVars branch3b;  // k=3, d_b -> d_b
    ConvVars merge;     // k=1, 3*d_b -> d_h
    Var w_att;          // [d_h, d_h]
};

struct GateOutput {
    Var h_tilde;      // refined states, n x d_h
    Var gate_values;  // sigmoid outputs in (0,1), n x d_h
};

/// Parallel-branch convolution block: merge(concat(b1(h), b2(h), b3b(b3a(h)))).
Var inception_block(Var h, const CguVars& p);

/// Scaled dot-product self-attention over the rows of g:
/// q = v = g, k = g * w_att^T, out = softmax(q k^T / sqrt(d_h)) v.
/// Masked key positions are excluded from every softmax lane.
Var self_attention(Var g, Var w_att, const std::vector<bool>& mask);

/// h_tilde = h .* sigmoid(g): the gate attenuates each dimension of the
/// encoder output based on the convolution and self-attention features.
GateOutput gate(Var h, Var g);

/// Full unit over encoder states. With bypass the input is returned
/// untouched, which reduces the model to the plain attention seq2seq.
EncoderStates cgu_apply(const EncoderStates& enc, const CguVars& p, bool bypass);

}  // namespace cgusum
