#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cgusum/rng.hpp"
#include "cgusum/tensor.hpp"
#include "doctest.h"

using namespace cgusum;

TEST_CASE("shape_numel multiplies extents and rejects non-positive ones") {
    CHECK(shape_numel({}) == 1);
    CHECK(shape_numel({3}) == 3);
    CHECK(shape_numel({2, 3, 4}) == 24);
    CHECK_THROWS_AS(shape_numel({2, 0}), ShapeError);
    CHECK_THROWS_AS(shape_numel({-1}), ShapeError);
}

TEST_CASE("buffer length must equal the product of extents") {
    CHECK_NOTHROW(Tensor::from_f64({2, 3}, std::vector<double>(6, 0.0)));
    CHECK_THROWS_AS(Tensor::from_f64({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
    CHECK_THROWS_AS(Tensor::from_f32({4}, std::vector<float>(3, 0.0f)), ShapeError);
}

TEST_CASE("element access, fill, and rank-0 scalars") {
    Tensor t = Tensor::zeros({2, 2}, Dtype::f32);
    t.set(3, 1.5);
    CHECK(t.get(3) == doctest::Approx(1.5));
    CHECK(t.get2(1, 1) == doctest::Approx(1.5));
    CHECK_THROWS_AS(t.get(4), ShapeError);

    Tensor s = Tensor::scalar(Dtype::f64, 2.25);
    CHECK(s.rank() == 0);
    CHECK(s.numel() == 1);
    CHECK(s.get(0) == 2.25);
}

TEST_CASE("all_finite flags NaN and Inf") {
    Tensor t = Tensor::zeros({3}, Dtype::f64);
    CHECK(t.all_finite());
    t.set(1, std::nan(""));
    CHECK_FALSE(t.all_finite());
    t.set(1, 0.0);
    t.set(2, std::numeric_limits<double>::infinity());
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("in-place accumulate and scale") {
    Tensor a = Tensor::from_f64({2}, {1.0, 2.0});
    Tensor b = Tensor::from_f64({2}, {0.5, -1.0});
    a.add_(b);
    CHECK(a.get(0) == 1.5);
    CHECK(a.get(1) == 1.0);
    a.scale_(2.0);
    CHECK(a.get(0) == 3.0);
    Tensor c = Tensor::zeros({3}, Dtype::f64);
    CHECK_THROWS_AS(a.add_(c), ShapeError);
    CHECK_THROWS_AS(a.add_(Tensor::zeros({2}, Dtype::f32)), ShapeError);
}

TEST_CASE("same_bits distinguishes dtype, shape, and payload") {
    Tensor a = Tensor::from_f64({2}, {1.0, 2.0});
    Tensor b = Tensor::from_f64({2}, {1.0, 2.0});
    CHECK(a.same_bits(b));
    b.set(1, 2.0000001);
    CHECK_FALSE(a.same_bits(b));
    CHECK_FALSE(a.same_bits(Tensor::from_f32({2}, {1.0f, 2.0f})));
    CHECK_FALSE(a.same_bits(Tensor::from_f64({1, 2}, {1.0, 2.0})));
}

TEST_CASE("cast converts payloads and keeps shape") {
    Tensor a = Tensor::from_f64({2}, {0.5, -3.0});
    Tensor b = a.cast(Dtype::f32);
    CHECK(b.dtype() == Dtype::f32);
    CHECK(b.shape() == Shape{2});
    CHECK(b.get(1) == doctest::Approx(-3.0));
}

TEST_CASE("seeded rng reproduces draws and shuffles") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform(-0.1, 0.1) == b.uniform(-0.1, 0.1));
    std::vector<int> va{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<int> vb = va;
    a.shuffle(va);
    b.shuffle(vb);
    CHECK(va == vb);
}

TEST_CASE("uniform tensors are inside the interval and seed-stable") {
    Rng r1(7), r2(7);
    Tensor a = Tensor::uniform({50}, Dtype::f64, r1, -0.1, 0.1);
    Tensor b = Tensor::uniform({50}, Dtype::f64, r2, -0.1, 0.1);
    CHECK(a.same_bits(b));
    for (int64_t i = 0; i < a.numel(); ++i) {
        CHECK(a.get(i) >= -0.1);
        CHECK(a.get(i) < 0.1);
    }
}
