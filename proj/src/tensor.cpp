#include "cgusum/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "cgusum/rng.hpp"

namespace cgusum {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(Shape shape, Dtype dt) {
    Tensor t;
    t.numel_ = shape_numel(shape);
    t.shape_ = std::move(shape);
    t.dtype_ = dt;
    t.defined_ = true;
    if (dt == Dtype::f32) {
        t.data_ = std::vector<float>(static_cast<size_t>(t.numel_), 0.0f);
    } else {
        t.data_ = std::vector<double>(static_cast<size_t>(t.numel_), 0.0);
    }
    return t;
}

Tensor Tensor::full(Shape shape, Dtype dt, double value) {
    Tensor t = zeros(std::move(shape), dt);
    with_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        for (auto& x : t.data<T>()) x = static_cast<T>(value);
    });
    return t;
}

Tensor Tensor::scalar(Dtype dt, double value) { return full(Shape{}, dt, value); }

Tensor Tensor::from_f32(Shape shape, std::vector<float> data) {
    Tensor t;
    t.numel_ = shape_numel(shape);
    if (t.numel_ != static_cast<int64_t>(data.size()))
        throw ShapeError("buffer length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    t.shape_ = std::move(shape);
    t.dtype_ = Dtype::f32;
    t.defined_ = true;
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::from_f64(Shape shape, std::vector<double> data) {
    Tensor t;
    t.numel_ = shape_numel(shape);
    if (t.numel_ != static_cast<int64_t>(data.size()))
        throw ShapeError("buffer length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    t.shape_ = std::move(shape);
    t.dtype_ = Dtype::f64;
    t.defined_ = true;
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::uniform(Shape shape, Dtype dt, Rng& rng, double lo, double hi) {
    Tensor t = zeros(std::move(shape), dt);
    with_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        for (auto& x : t.data<T>()) x = static_cast<T>(rng.uniform(lo, hi));
    });
    return t;
}

double Tensor::get(int64_t i) const {
    if (i < 0 || i >= numel_) throw ShapeError("flat index out of range");
    return dtype_ == Dtype::f32 ? static_cast<double>(data<float>()[static_cast<size_t>(i)])
                                : data<double>()[static_cast<size_t>(i)];
}

void Tensor::set(int64_t i, double v) {
    if (i < 0 || i >= numel_) throw ShapeError("flat index out of range");
    if (dtype_ == Dtype::f32) {
        data<float>()[static_cast<size_t>(i)] = static_cast<float>(v);
    } else {
        data<double>()[static_cast<size_t>(i)] = v;
    }
}

double Tensor::get2(int64_t row, int64_t col) const {
    if (rank() != 2) throw ShapeError("get2 on tensor of shape " + shape_str(shape_));
    return get(row * shape_[1] + col);
}

bool Tensor::all_finite() const {
    bool ok = true;
    with_dtype(dtype_, [&](auto tag) {
        using T = decltype(tag);
        for (T x : data<T>()) {
            if (!std::isfinite(static_cast<double>(x))) {
                ok = false;
                break;
            }
        }
    });
    return ok;
}

void Tensor::add_(const Tensor& other) {
    if (dtype_ != other.dtype_ || shape_ != other.shape_)
        throw ShapeError("add_ mismatch: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    with_dtype(dtype_, [&](auto tag) {
        using T = decltype(tag);
        auto dst = data<T>();
        auto src = other.data<T>();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    });
}

void Tensor::scale_(double c) {
    with_dtype(dtype_, [&](auto tag) {
        using T = decltype(tag);
        for (auto& x : data<T>()) x = static_cast<T>(x * static_cast<T>(c));
    });
}

Tensor Tensor::cast(Dtype dt) const {
    if (dt == dtype_) return *this;
    Tensor out = Tensor::zeros(shape_, dt);
    for (int64_t i = 0; i < numel_; ++i) out.set(i, get(i));
    return out;
}

bool Tensor::same_bits(const Tensor& other) const {
    if (!defined_ || !other.defined_) return defined_ == other.defined_;
    if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
    bool eq = true;
    with_dtype(dtype_, [&](auto tag) {
        using T = decltype(tag);
        auto a = data<T>();
        auto b = other.data<T>();
        eq = std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
    });
    return eq;
}

std::vector<double> Tensor::to_f64_vector() const {
    std::vector<double> out(static_cast<size_t>(numel_));
    for (int64_t i = 0; i < numel_; ++i) out[static_cast<size_t>(i)] = get(i);
    return out;
}

}  // namespace cgusum
