#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cgusum/cgu.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cgusum;
using cgusum::testutil::fd_check;
using cgusum::testutil::rand_tensor;

namespace {

struct CguFixture {
    int64_t d_h, d_b;
    Tensor b1w, b1b, b2w, b2b, b3aw, b3ab, b3bw, b3bb, mw, mb, watt;

    CguFixture(int64_t d_h_, int64_t d_b_, Rng& rng, bool zero = false) : d_h(d_h_), d_b(d_b_) {
        auto mk = [&](Shape s) { return zero ? Tensor::zeros(s, Dtype::f64) : rand_tensor(s, rng); };
        b1w = mk({1, d_h, d_b});
        b1b = mk({d_b});
        b2w = mk({3, d_h, d_b});
        b2b = mk({d_b});
        b3aw = mk({3, d_h, d_b});
        b3ab = mk({d_b});
        b3bw = mk({3, d_b, d_b});
        b3bb = mk({d_b});
        mw = mk({1, 3 * d_b, d_h});
        mb = mk({d_h});
        watt = mk({d_h, d_h});
    }

    CguVars bind(Graph& g) const {
        return CguVars{ConvVars{g.input(b1w), g.input(b1b)}, ConvVars{g.input(b2w), g.input(b2b)},
                       ConvVars{g.input(b3aw), g.input(b3ab)}, ConvVars{g.input(b3bw), g.input(b3bb)},
                       ConvVars{g.input(mw), g.input(mb)}, g.input(watt)};
    }
};

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

// Direct three-loop scaled dot-product attention with key projection.
std::vector<double> attention_oracle(const Tensor& g, const Tensor& watt,
                                     const std::vector<bool>& mask) {
    const int64_t n = g.shape()[0], d = g.shape()[1];
    std::vector<double> k(static_cast<size_t>(n * d), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t r = 0; r < d; ++r)
            for (int64_t c = 0; c < d; ++c) k[i * d + r] += watt.get2(r, c) * g.get2(i, c);
    std::vector<double> out(static_cast<size_t>(n * d), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> scores(static_cast<size_t>(n), 0.0);
        double mx = -1e300;
        for (int64_t j = 0; j < n; ++j) {
            if (!mask[static_cast<size_t>(j)]) continue;
            double s = 0;
            for (int64_t c = 0; c < d; ++c) s += g.get2(i, c) * k[j * d + c];
            scores[static_cast<size_t>(j)] = s / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, scores[static_cast<size_t>(j)]);
        }
        double denom = 0;
        for (int64_t j = 0; j < n; ++j)
            if (mask[static_cast<size_t>(j)]) denom += std::exp(scores[static_cast<size_t>(j)] - mx);
        for (int64_t j = 0; j < n; ++j) {
            if (!mask[static_cast<size_t>(j)]) continue;
            const double a = std::exp(scores[static_cast<size_t>(j)] - mx) / denom;
            for (int64_t c = 0; c < d; ++c) out[i * d + c] += a * g.get2(j, c);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("inception_block with all-zero weights gives zeros") {
    Rng rng(1);
    CguFixture fx(6, 3, rng, /*zero=*/true);
    Graph g;
    const Tensor out = inception_block(g.input(rand_tensor({4, 6}, rng)), fx.bind(g)).value();
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.get(i) == 0.0);
}

TEST_CASE("inception_block preserves n x d_h for n in {1,4,9}") {
    Rng rng(2);
    CguFixture fx(6, 3, rng);
    for (int64_t n : {int64_t{1}, int64_t{4}, int64_t{9}}) {
        Graph g;
        Var out = inception_block(g.input(rand_tensor({n, 6}, rng)), fx.bind(g));
        CHECK(out.shape() == Shape{n, 6});
    }
}

TEST_CASE("inception_block equals scripting its convolutions step by step") {
    Rng rng(3);
    CguFixture fx(6, 3, rng);
    const Tensor input = rand_tensor({4, 6}, rng);
    Graph g;
    const Tensor got = inception_block(g.input(input), fx.bind(g)).value();

    Graph g2;
    CguVars p = fx.bind(g2);
    Var h = g2.input(input);
    Var b1 = conv1d_same(h, p.branch1.w, p.branch1.b, Activation::relu);
    Var b2 = conv1d_same(h, p.branch2.w, p.branch2.b, Activation::relu);
    Var b3a = conv1d_same(h, p.branch3a.w, p.branch3a.b, Activation::relu);
    Var b3 = conv1d_same(b3a, p.branch3b.w, p.branch3b.b, Activation::relu);
    Var merged = conv1d_same(concat_cols({b1, b2, b3}), p.merge.w, p.merge.b, Activation::relu);
    const Tensor want = merged.value();
    for (int64_t i = 0; i < got.numel(); ++i)
        CHECK(got.get(i) == doctest::Approx(want.get(i)).epsilon(1e-12));
}

TEST_CASE("self_attention on a single row returns the row itself") {
    Rng rng(4);
    Graph g;
    const Tensor input = rand_tensor({1, 4}, rng);
    const Tensor out = self_attention(g.input(input), g.input(rand_tensor({4, 4}, rng)), {true}).value();
    for (int64_t i = 0; i < 4; ++i) CHECK(out.get(i) == doctest::Approx(input.get(i)).epsilon(1e-15));
}

TEST_CASE("self_attention with zero w_att averages the unmasked rows") {
    Rng rng(5);
    Graph g;
    const Tensor input = rand_tensor({3, 4}, rng);
    const Tensor out =
        self_attention(g.input(input), g.input(Tensor::zeros({4, 4}, Dtype::f64)),
                       {true, true, true})
            .value();
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t c = 0; c < 4; ++c) {
            const double mean = (input.get2(0, c) + input.get2(1, c) + input.get2(2, c)) / 3.0;
            CHECK(out.get2(i, c) == doctest::Approx(mean).epsilon(1e-12));
        }
}

TEST_CASE("self_attention matches the three-loop oracle") {
    Rng rng(6);
    const Tensor input = rand_tensor({3, 4}, rng);
    const Tensor watt = rand_tensor({4, 4}, rng);
    const std::vector<bool> mask{true, true, true};
    Graph g;
    const Tensor out = self_attention(g.input(input), g.input(watt), mask).value();
    const auto want = attention_oracle(input, watt, mask);
    for (int64_t i = 0; i < out.numel(); ++i)
        CHECK(out.get(i) == doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("self_attention with a partial mask matches the oracle and errors when all masked") {
    Rng rng(7);
    const Tensor input = rand_tensor({4, 3}, rng);
    const Tensor watt = rand_tensor({3, 3}, rng);
    const std::vector<bool> mask{true, false, true, false};
    Graph g;
    const Tensor out = self_attention(g.input(input), g.input(watt), mask).value();
    const auto want = attention_oracle(input, watt, mask);
    for (int64_t i = 0; i < 2; ++i)  // unmasked query rows 0 and 2
        for (int64_t c = 0; c < 3; ++c) {
            const int64_t row = i == 0 ? 0 : 2;
            CHECK(out.get2(row, c) == doctest::Approx(want[static_cast<size_t>(row * 3 + c)]).epsilon(1e-12));
        }
    Graph g2;
    CHECK_THROWS_AS(
        self_attention(g2.input(input), g2.input(watt), {false, false, false, false}), InputError);
}

TEST_CASE("gate: zero pre-activation halves the input exactly") {
    Rng rng(8);
    Graph g;
    const Tensor h = rand_tensor({3, 4}, rng);
    GateOutput out = gate(g.input(h), g.input(Tensor::zeros({3, 4}, Dtype::f64)));
    for (int64_t i = 0; i < h.numel(); ++i) {
        CHECK(out.h_tilde.value().get(i) == 0.5 * h.get(i));
        CHECK(out.gate_values.value().get(i) == 0.5);
    }
}

TEST_CASE("gate matches the elementwise scalar oracle") {
    Rng rng(9);
    Graph g;
    const Tensor h = rand_tensor({3, 4}, rng);
    const Tensor pre = rand_tensor({3, 4}, rng, -4, 4);
    GateOutput out = gate(g.input(h), g.input(pre));
    for (int64_t i = 0; i < h.numel(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-pre.get(i)));
        CHECK(out.h_tilde.value().get(i) == doctest::Approx(h.get(i) * s).epsilon(1e-15));
    }
    Graph g2;
    CHECK_THROWS_AS(gate(g2.input(h), g2.input(rand_tensor({4, 3}, rng))), ShapeError);
}

TEST_CASE("gate values stay in (0,1) and can only attenuate") {
    Rng rng(10);
    CguFixture fx(6, 3, rng);
    for (int rep = 0; rep < 100; ++rep) {
        Graph g;
        const Tensor h = rand_tensor({5, 6}, rng, -2, 2);
        EncoderStates enc = states_of(g, h);
        EncoderStates out = cgu_apply(enc, fx.bind(g), false);
        Var features = self_attention(inception_block(enc.h, fx.bind(g)), g.input(fx.watt), enc.mask);
        GateOutput gated = gate(enc.h, features);
        for (int64_t i = 0; i < h.numel(); ++i) {
            CHECK(gated.gate_values.value().get(i) > 0.0);
            CHECK(gated.gate_values.value().get(i) < 1.0);
            CHECK(std::abs(out.h.value().get(i)) <= std::abs(h.get(i)));
        }
    }
}

TEST_CASE("cgu_apply bypass returns the input bitwise") {
    Rng rng(11);
    CguFixture fx(6, 3, rng);
    Graph g;
    const Tensor h = rand_tensor({4, 6}, rng);
    EncoderStates enc = states_of(g, h);
    EncoderStates out = cgu_apply(enc, fx.bind(g), true);
    CHECK(out.h.id == enc.h.id);
    CHECK(out.h.value().same_bits(h));
}

TEST_CASE("cgu_apply with all-zero parameters halves the encoder states") {
    Rng rng(12);
    CguFixture fx(6, 3, rng, /*zero=*/true);
    Graph g;
    const Tensor h = rand_tensor({4, 6}, rng);
    EncoderStates out = cgu_apply(states_of(g, h), fx.bind(g), false);
    for (int64_t i = 0; i < h.numel(); ++i) CHECK(out.h.value().get(i) == 0.5 * h.get(i));
}

TEST_CASE("cgu_apply preserves the sequence length at every stage") {
    Rng rng(13);
    CguFixture fx(4, 2, rng);
    for (int64_t n : {int64_t{1}, int64_t{3}, int64_t{8}}) {
        Graph g;
        EncoderStates out = cgu_apply(states_of(g, rand_tensor({n, 4}, rng)), fx.bind(g), false);
        CHECK(out.h.shape() == Shape{n, 4});
        CHECK(out.mask.size() == static_cast<size_t>(n));
    }
}

TEST_CASE("masked rows never influence unmasked outputs") {
    Rng rng(14);
    CguFixture fx(6, 3, rng);
    const std::vector<bool> mask{true, true, false, true, false};
    Tensor h = rand_tensor({5, 6}, rng);
    Graph g;
    const Tensor out0 = cgu_apply(states_of(g, h, mask), fx.bind(g), false).h.value();
    // Rewrite the masked rows arbitrarily.
    for (int64_t j = 0; j < 6; ++j) {
        h.set(2 * 6 + j, 17.0 + static_cast<double>(j));
        h.set(4 * 6 + j, -9.0 - static_cast<double>(j));
    }
    Graph g2;
    const Tensor out1 = cgu_apply(states_of(g2, h, mask), fx.bind(g2), false).h.value();
    for (int64_t i : {int64_t{0}, int64_t{1}, int64_t{3}})
        for (int64_t j = 0; j < 6; ++j) CHECK(out0.get2(i, j) == out1.get2(i, j));
}

TEST_CASE("cgu_apply gradients w.r.t. all unit parameters match finite differences") {
    Rng rng(15);
    const Tensor h = rand_tensor({4, 6}, rng, 0.2, 1.0);
    const auto rep = fd_check(
        [&](Graph& g, const std::vector<Var>& v) {
            CguVars p{ConvVars{v[0], v[1]}, ConvVars{v[2], v[3]}, ConvVars{v[4], v[5]},
                      ConvVars{v[6], v[7]}, ConvVars{v[8], v[9]}, v[10]};
            EncoderStates enc = states_of(g, h);
            return cgu_apply(enc, p, false).h;
        },
        {rand_tensor({1, 6, 3}, rng, 0.1, 0.9), rand_tensor({3}, rng, 0.1, 0.9),
         rand_tensor({3, 6, 3}, rng, 0.1, 0.9), rand_tensor({3}, rng, 0.1, 0.9),
         rand_tensor({3, 6, 3}, rng, 0.1, 0.9), rand_tensor({3}, rng, 0.1, 0.9),
         rand_tensor({3, 3, 3}, rng, 0.1, 0.9), rand_tensor({3}, rng, 0.1, 0.9),
         rand_tensor({1, 9, 6}, rng, 0.1, 0.9), rand_tensor({6}, rng, 0.1, 0.9),
         rand_tensor({6, 6}, rng, 0.1, 0.9)},
        1e-5);
    CHECK(rep.max_rel_err < 1e-4);
}
