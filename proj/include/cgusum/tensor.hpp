#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cgusum/error.hpp"

namespace cgusum {

class Rng;

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

inline const char* dtype_name(Dtype dt) { return dt == Dtype::f32 ? "f32" : "f64"; }

// Row-major extents. Rank 0 (empty shape) is a scalar with one element.
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major numeric array. The universal value carrier: every
/// learnable computation flows through these. Values produced by graph ops
/// are treated as immutable; mutation is reserved for parameter storage
/// (init, optimizer updates) and gradient buffers.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, Dtype dt);
    static Tensor full(Shape shape, Dtype dt, double value);
    static Tensor scalar(Dtype dt, double value);
    static Tensor from_f32(Shape shape, std::vector<float> data);
    static Tensor from_f64(Shape shape, std::vector<double> data);
    // Flat row-major fill from seeded draws in [lo, hi).
    static Tensor uniform(Shape shape, Dtype dt, Rng& rng, double lo, double hi);

    bool defined() const { return defined_; }
    const Shape& shape() const { return shape_; }
    Dtype dtype() const { return dtype_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return numel_; }

    template <class T>
    std::span<const T> data() const {
        return std::span<const T>(std::get<std::vector<T>>(data_));
    }
    template <class T>
    std::span<T> data() {
        return std::span<T>(std::get<std::vector<T>>(data_));
    }

    // Converting element access by flat index. Bounds-checked.
    double get(int64_t i) const;
    void set(int64_t i, double v);
    double get2(int64_t row, int64_t col) const;  // rank-2 convenience

    bool all_finite() const;
    void add_(const Tensor& other);    // elementwise in-place accumulate
    void scale_(double c);             // in-place scalar multiply
    Tensor cast(Dtype dt) const;
    bool same_bits(const Tensor& other) const;

    std::vector<double> to_f64_vector() const;

private:
    Shape shape_;
    Dtype dtype_ = Dtype::f32;
    int64_t numel_ = 0;
    bool defined_ = false;
    std::variant<std::vector<float>, std::vector<double>> data_;
};

// Dispatch a callable on the scalar type behind a dtype tag.
template <class F>
decltype(auto) with_dtype(Dtype dt, F&& f) {
    if (dt == Dtype::f32) return f(float{});
    return f(double{});
}

}  // namespace cgusum
