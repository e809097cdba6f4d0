#pragma once

#include <cmath>
#include <cstdint>

namespace flashdistill {

// Counter-based generator: draw k of stream (seed) is a pure function of
// (seed, k). Streams forked by label are independent, and any point of a
// run can be replayed without replaying the draws before it.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    // Derive an independent named stream.
    Rng fork(std::uint64_t stream) const {
        return Rng(mix(seed_ ^ 0x9e3779b97f4a7c15ull, stream));
    }

    std::uint64_t next_u64() { return mix(seed_, counter_++); }

    // Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        // splitmix64 finalizer over the (seed, counter) pair
        std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace flashdistill
