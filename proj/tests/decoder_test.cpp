#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cgusum/decoder.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cgusum;
using cgusum::testutil::rand_tensor;

namespace {

EncoderStates states_of(Graph& g, const Tensor& h, std::vector<bool> mask = {}) {
    EncoderStates enc;
    enc.h = g.input(h);
    enc.mask = mask.empty() ? std::vector<bool>(static_cast<size_t>(h.shape()[0]), true)
                            : std::move(mask);
    const int64_t hidden = h.shape()[1] / 2;
    enc.fwd_final = {g.input(Tensor::zeros({hidden}, h.dtype())),
                     g.input(Tensor::zeros({hidden}, h.dtype()))};
    enc.bwd_final = enc.fwd_final;
    return enc;
}

struct DecoderFixture {
    int64_t vocab, emb, d_s, d_h;
    Tensor table, wx, wh, b, wa, wout, bout;
    DecoderFixture(int64_t vocab_, int64_t emb_, int64_t d_s_, int64_t d_h_, Rng& rng,
                   bool zero_out = false)
        : vocab(vocab_), emb(emb_), d_s(d_s_), d_h(d_h_) {
        table = rand_tensor({vocab, emb}, rng);
        wx = rand_tensor({4 * d_s, emb}, rng);
        wh = rand_tensor({4 * d_s, d_s}, rng);
        b = rand_tensor({4 * d_s}, rng);
        wa = rand_tensor({d_s, d_h}, rng);
        wout = zero_out ? Tensor::zeros({vocab, d_h + d_s}, Dtype::f64)
                        : rand_tensor({vocab, d_h + d_s}, rng);
        bout = zero_out ? Tensor::zeros({vocab}, Dtype::f64) : rand_tensor({vocab}, rng);
    }
    DecoderVars bind(Graph& g) const {
        return DecoderVars{g.input(table), LstmVars{g.input(wx), g.input(wh), g.input(b)},
                           g.input(wa), g.input(wout), g.input(bout)};
    }
};

}  // namespace

TEST_CASE("attention_weights with zero w_a is uniform over unmasked positions") {
    Rng rng(1);
    Graph g;
    EncoderStates enc = states_of(g, rand_tensor({4, 6}, rng), {true, true, false, true});
    Var s = g.input(rand_tensor({3}, rng));
    const Tensor alpha = attention_weights(s, enc, g.input(Tensor::zeros({3, 6}, Dtype::f64))).value();
    CHECK(alpha.get(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(alpha.get(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(alpha.get(2) == 0.0);
    CHECK(alpha.get(3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("attention_weights over a single unmasked position is [1]") {
    Rng rng(2);
    Graph g;
    EncoderStates enc = states_of(g, rand_tensor({1, 4}, rng));
    const Tensor alpha =
        attention_weights(g.input(rand_tensor({2}, rng)), enc, g.input(rand_tensor({2, 4}, rng)))
            .value();
    CHECK(alpha.get(0) == 1.0);
}

TEST_CASE("attention_weights matches the direct score/softmax oracle") {
    Rng rng(3);
    const Tensor h = rand_tensor({3, 4}, rng);
    const Tensor wa = rand_tensor({2, 4}, rng);
    const Tensor s = rand_tensor({2}, rng);
    Graph g;
    EncoderStates enc = states_of(g, h);
    const Tensor alpha = attention_weights(g.input(s), enc, g.input(wa)).value();

    std::vector<double> scores(3, 0.0);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t r = 0; r < 2; ++r)
            for (int64_t c = 0; c < 4; ++c) scores[i] += s.get(r) * wa.get2(r, c) * h.get2(i, c);
    const double mx = std::max({scores[0], scores[1], scores[2]});
    double denom = 0;
    for (double v : scores) denom += std::exp(v - mx);
    double total = 0;
    for (int64_t i = 0; i < 3; ++i) {
        CHECK(alpha.get(i) == doctest::Approx(std::exp(scores[i] - mx) / denom).epsilon(1e-12));
        total += alpha.get(i);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("attention_weights requires at least one unmasked row") {
    Rng rng(4);
    Graph g;
    EncoderStates enc = states_of(g, rand_tensor({2, 4}, rng), {false, false});
    CHECK_THROWS_AS(attention_weights(g.input(rand_tensor({2}, rng)), enc,
                                      g.input(rand_tensor({2, 4}, rng))),
                    InputError);
}

TEST_CASE("context_vector: one-hot selects a row, uniform averages rows") {
    Rng rng(5);
    Graph g;
    const Tensor h = rand_tensor({3, 4}, rng);
    Var hv = g.input(h);
    const Tensor picked = context_vector(g.input(Tensor::from_f64({3}, {0, 1, 0})), hv).value();
    for (int64_t c = 0; c < 4; ++c) CHECK(picked.get(c) == h.get2(1, c));

    const Tensor avg =
        context_vector(g.input(Tensor::from_f64({3}, {1.0 / 3, 1.0 / 3, 1.0 / 3})), hv).value();
    for (int64_t c = 0; c < 4; ++c) {
        const double mean = (h.get2(0, c) + h.get2(1, c) + h.get2(2, c)) / 3.0;
        CHECK(avg.get(c) == doctest::Approx(mean).epsilon(1e-12));
    }
    CHECK_THROWS_AS(context_vector(g.input(Tensor::from_f64({2}, {0.5, 0.5})), hv), ShapeError);
}

TEST_CASE("context_vector matches the weighted-sum loop oracle") {
    Rng rng(6);
    Graph g;
    const Tensor h = rand_tensor({5, 3}, rng);
    Tensor alpha = rand_tensor({5}, rng, 0.01, 1.0);
    double z = 0;
    for (int64_t i = 0; i < 5; ++i) z += alpha.get(i);
    for (int64_t i = 0; i < 5; ++i) alpha.set(i, alpha.get(i) / z);
    const Tensor c = context_vector(g.input(alpha), g.input(h)).value();
    for (int64_t j = 0; j < 3; ++j) {
        double want = 0;
        for (int64_t i = 0; i < 5; ++i) want += alpha.get(i) * h.get2(i, j);
        CHECK(c.get(j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("decode_step with zero output weights gives a uniform vocabulary distribution") {
    Rng rng(7);
    DecoderFixture fx(5, 3, 2, 4, rng, /*zero_out=*/true);
    Graph g;
    EncoderStates enc = states_of(g, rand_tensor({2, 4}, rng));
    LstmState st{g.input(rand_tensor({2}, rng)), g.input(rand_tensor({2}, rng))};
    DecodeStep out = decode_step(1, st, enc, fx.bind(g));
    for (int64_t i = 0; i < 5; ++i) CHECK(out.p_vocab.value().get(i) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("decode_step distributions are positive and sum to one for random params") {
    Rng rng(8);
    for (int rep = 0; rep < 25; ++rep) {
        DecoderFixture fx(6, 2, 3, 4, rng);
        Graph g;
        EncoderStates enc = states_of(g, rand_tensor({3, 4}, rng));
        LstmState st{g.input(rand_tensor({3}, rng)), g.input(rand_tensor({3}, rng))};
        DecodeStep out = decode_step(static_cast<int>(rng.index(6)), st, enc, fx.bind(g));
        double total = 0;
        for (int64_t i = 0; i < 6; ++i) {
            CHECK(out.p_vocab.value().get(i) > 0.0);
            total += out.p_vocab.value().get(i);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("decode_step equals chaining lstm_cell, attention, context, and output map") {
    Rng rng(9);
    DecoderFixture fx(5, 3, 4, 4, rng);
    const Tensor h = rand_tensor({2, 4}, rng);
    const Tensor s0 = rand_tensor({4}, rng);
    const Tensor c0 = rand_tensor({4}, rng);
    const int y_prev = 3;

    Graph g;
    EncoderStates enc = states_of(g, h);
    LstmState st{g.input(s0), g.input(c0)};
    DecodeStep got = decode_step(y_prev, st, enc, fx.bind(g));

    // Scripted composition of the three sub-operations.
    Graph g2;
    DecoderVars p = fx.bind(g2);
    EncoderStates enc2 = states_of(g2, h);
    LstmState st2{g2.input(s0), g2.input(c0)};
    LstmState next = lstm_cell(p.lstm, embed_row(p.embedding, y_prev), st2);
    Var alpha = attention_weights(st2.h, enc2, p.w_a);  // previous state scores
    Var ctx = context_vector(alpha, enc2.h);
    Var logits = add(matvec(p.w_out, concat({ctx, next.h})), p.b_out);
    const Tensor want = softmax(logits, 0).value();

    for (int64_t i = 0; i < 5; ++i)
        CHECK(got.p_vocab.value().get(i) == doctest::Approx(want.get(i)).epsilon(1e-12));
    for (int64_t i = 0; i < 4; ++i)
        CHECK(got.state.h.value().get(i) == doctest::Approx(next.h.value().get(i)).epsilon(1e-12));
}

TEST_CASE("decode_step is deterministic: identical inputs give identical bits") {
    Rng rng(10);
    DecoderFixture fx(6, 3, 2, 4, rng);
    const Tensor h = rand_tensor({3, 4}, rng);
    const Tensor s0 = rand_tensor({2}, rng);
    const Tensor c0 = rand_tensor({2}, rng);
    Tensor first, second;
    for (int run = 0; run < 2; ++run) {
        Graph g;
        EncoderStates enc = states_of(g, h);
        LstmState st{g.input(s0), g.input(c0)};
        DecodeStep out = decode_step(2, st, enc, fx.bind(g));
        (run == 0 ? first : second) = out.p_vocab.value();
    }
    CHECK(first.same_bits(second));
}

TEST_CASE("attention assigns exactly zero to masked positions and renormalizes") {
    Rng rng(11);
    Graph g;
    const std::vector<bool> mask{false, true, true, false, true};
    EncoderStates enc = states_of(g, rand_tensor({5, 4}, rng), mask);
    const Tensor alpha =
        attention_weights(g.input(rand_tensor({2}, rng)), enc, g.input(rand_tensor({2, 4}, rng)))
            .value();
    double total = 0;
    for (size_t i = 0; i < 5; ++i) {
        if (!mask[i]) CHECK(alpha.get(static_cast<int64_t>(i)) == 0.0);
        total += alpha.get(static_cast<int64_t>(i));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}
