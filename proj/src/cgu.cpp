#include "cgusum/cgu.hpp"

#include <algorithm>
#include <cmath>

namespace cgusum {

Var inception_block(Var h, const CguVars& p) {
    Var b1 = conv1d_same(h, p.branch1.w, p.branch1.b, Activation::relu);
    Var b2 = conv1d_same(h, p.branch2.w, p.branch2.b, Activation::relu);
    Var b3 = conv1d_same(conv1d_same(h, p.branch3a.w, p.branch3a.b, Activation::relu), p.branch3b.w,
                         p.branch3b.b, Activation::relu);
    return conv1d_same(concat_cols({b1, b2, b3}), p.merge.w, p.merge.b, Activation::relu);
}

Var self_attention(Var g, Var w_att, const std::vector<bool>& mask) {
    const Shape& gs = g.shape();
    if (gs.size() != 2) throw ShapeError("self_attention: rank-2 input required");
    const int64_t d = gs[1];
    if (w_att.shape() != Shape{d, d})
        throw ShapeError("self_attention: w_att " + shape_str(w_att.shape()) + " vs features " +
                         shape_str(gs));
    if (mask.size() != static_cast<size_t>(gs[0]))
        throw ShapeError("self_attention: mask length mismatch");
    // q = v = g; k = g w_att^T; d_k is the feature dimension.
    Var k = matmul(g, transpose(w_att));
    Var scores = scale(matmul(g, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    Var alpha = softmax_rows_masked(scores, mask);
    return matmul(alpha, g);
}

GateOutput gate(Var h, Var g) {
    if (h.shape() != g.shape())
        throw ShapeError("gate: " + shape_str(h.shape()) + " vs " + shape_str(g.shape()));
    Var gv = sigmoid(g);
    return GateOutput{mul(h, gv), gv};
}

EncoderStates cgu_apply(const EncoderStates& enc, const CguVars& p, bool bypass) {
    if (bypass) return enc;
    const bool partial = std::any_of(enc.mask.begin(), enc.mask.end(), [](bool b) { return !b; });
    // Padding rows are zeroed so the convolution windows treat them exactly
    // like the zero padding beyond the sequence ends.
    Var h_in = partial ? zero_rows(enc.h, enc.mask) : enc.h;
    Var features = self_attention(inception_block(h_in, p), p.w_att, enc.mask);
    GateOutput gated = gate(enc.h, features);
    EncoderStates out = enc;
    out.h = gated.h_tilde;
    return out;
}

}  // namespace cgusum
