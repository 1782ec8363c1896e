#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "cmlab/vec.hpp"

namespace cmlab {

// splitmix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64-backed stream with explicit uniform/normal transforms so draws
// are bit-reproducible across standard library versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in (0, 1]; never returns 0 so log() is safe
    double uniform() {
        return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller (no cached spare: one fixed-cost draw per call)
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    Vec normal_vec(std::size_t d) {
        Vec v(d);
        for (auto& x : v) x = normal();
        return v;
    }

    void fill_normal(Vec& v) {
        for (auto& x : v) x = normal();
    }

    // uniform integer in [0, n)
    std::size_t index(std::size_t n) {
        std::size_t i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    // derived independent stream
    Rng spawn() { return Rng(mix_seed(gen_(), 0x5eedULL)); }

  private:
    std::mt19937_64 gen_;
};

}  // namespace cmlab
