#include "cgusum/layers.hpp"

namespace cgusum {

LstmState lstm_cell(const LstmVars& p, Var x, const LstmState& prev) {
    const Shape& wx_shape = p.w_x.shape();
    const int64_t hidden4 = wx_shape[0];
    if (hidden4 % 4 != 0) throw ShapeError("lstm_cell: w_x rows must be 4*hidden");
    const int64_t hidden = hidden4 / 4;
    Var pre = add(add(matvec(p.w_x, x), matvec(p.w_h, prev.h)), p.b);
    Var gi = slice(pre, 0, hidden);
    Var gf = slice(pre, hidden, 2 * hidden);
    Var gg = slice(pre, 2 * hidden, 3 * hidden);
    Var go = slice(pre, 3 * hidden, 4 * hidden);
    Var c = add(mul(sigmoid(gf), prev.c), mul(sigmoid(gi), tanh_op(gg)));
    Var h = mul(sigmoid(go), tanh_op(c));
    return LstmState{h, c};
}

EncoderStates bilstm_encode(Graph& g, const BiLstmVars& p, const std::vector<int>& src_ids) {
    if (src_ids.empty()) throw InputError("bilstm_encode: empty source sequence");
    const int64_t n = static_cast<int64_t>(src_ids.size());
    const int64_t hidden = p.fwd.w_h.shape()[1];
    const Dtype dt = g.value(p.embedding).dtype();

    std::vector<Var> emb(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        emb[static_cast<size_t>(i)] = embed_row(p.embedding, src_ids[static_cast<size_t>(i)]);

    LstmState zero{g.input(Tensor::zeros({hidden}, dt)), g.input(Tensor::zeros({hidden}, dt))};

    std::vector<Var> fwd_h(static_cast<size_t>(n));
    LstmState st = zero;
    for (int64_t i = 0; i < n; ++i) {
        st = lstm_cell(p.fwd, emb[static_cast<size_t>(i)], st);
        fwd_h[static_cast<size_t>(i)] = st.h;
    }
    const LstmState fwd_final = st;

    std::vector<Var> bwd_h(static_cast<size_t>(n));
    st = zero;
    for (int64_t i = n - 1; i >= 0; --i) {
        st = lstm_cell(p.bwd, emb[static_cast<size_t>(i)], st);
        bwd_h[static_cast<size_t>(i)] = st.h;
    }
    const LstmState bwd_final = st;

    Var h = concat_cols({stack_rows(fwd_h), stack_rows(bwd_h)});
    EncoderStates out;
    out.h = h;
    out.mask.assign(static_cast<size_t>(n), true);
    out.fwd_final = fwd_final;
    out.bwd_final = bwd_final;
    return out;
}

}  // namespace cgusum
