#pragma once

#include <cmath>
#include <cstdint>

namespace maskgrad {

// SplitMix64 finalizer (Steele, Lea & Flood 2014; public domain reference
// constants). Used both as the generator transition and for key mixing, so
// every random draw in the project is reproducible from documented integers.
inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Counter-based SplitMix64 stream. Streams for (seed, a, b) are derived by
// keyed mixing, so e.g. per-(step, sample) mask sampling is deterministic
// regardless of evaluation order or batching.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    static Rng stream(uint64_t seed, uint64_t a, uint64_t b = 0) {
        uint64_t s = mix64(seed ^ (0xA0761D6478BD642Full * (a + 1)));
        s = mix64(s ^ (0xE7037ED1A0B428DBull * (b + 1)));
        return Rng(s);
    }

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n); n >= 1. Fixed-point multiply keeps the draw
    // a pure function of one next_u64() call.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller (one value per call, cached pair dropped
    // for stream simplicity).
    double normal();

  private:
    uint64_t state_;
};

inline double Rng::normal() {
    // u1 in (0,1] to keep log finite.
    double u1 = 1.0 - uniform01();
    double u2 = uniform01();
    constexpr double two_pi = 6.283185307179586476925286766559;
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(two_pi * u2);
}

}  // namespace maskgrad
