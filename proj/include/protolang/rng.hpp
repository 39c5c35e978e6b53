#ifndef PROTOLANG_RNG_HPP
#define PROTOLANG_RNG_HPP

#include <cmath>
#include <cstdint>

namespace protolang {

// Deterministic pseudo-random stream with hierarchical sub-stream
// derivation. Children are derived from the stream's *initial* seed, not
// its evolving state, so child(i) is independent of how many draws the
// parent has made. Ensembles keyed by run index are therefore
// order-independent and safe to evaluate in parallel.
//
// Generator: xoshiro256++, state seeded through splitmix64. All float
// conversions and the Gaussian transform are implemented here rather than
// taken from <random> so that output is identical across standard
// libraries and platforms.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t seed() const { return seed_; }

    RandomStream child(std::uint64_t index) const {
        std::uint64_t x = seed_;
        std::uint64_t a = splitmix64(x);
        x = a ^ (0x9E3779B97F4A7C15ull * (index + 1));
        std::uint64_t b = splitmix64(x);
        return RandomStream(b);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in the open interval (0,1); never returns an endpoint.
    double uniform_open01() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    // Standard normal via Box-Muller on two fresh uniforms.
    double normal() {
        double u1 = uniform_open01();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Exp(1) by inverse transform.
    double exponential() { return -std::log(uniform_open01()); }

  private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t seed_;
    std::uint64_t state_[4];
};

}  // namespace protolang

#endif
