#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace cgusum {

// Seeded RNG with portable draw sequences. std::uniform_real_distribution and
// std::shuffle are implementation-defined, so uniform draws and shuffles are
// derived directly from the mt19937_64 bit stream.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [lo, hi) with 53 bits of mantissa.
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }

    // Uniform index in [0, n). n must be positive.
    uint64_t index(uint64_t n) { return next_u64() % n; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace cgusum
