#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace ncct {

// Deterministic, platform-independent random streams.
//
// std::mt19937 is portable but the <random> distributions are not
// (libstdc++ and libc++ disagree), so every draw here is hand-rolled on
// top of a SplitMix64 core. All results are bit-identical across
// platforms and compilers.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Mix an arbitrary-length key into a single 64-bit seed.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> key) {
    std::uint64_t state = 0x243F6A8885A308D3ull; // pi digits
    for (std::uint64_t k : key) {
        state ^= k;
        splitmix64(state);
        state ^= splitmix64(state);
    }
    return state;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds (0, 1, 2, ...)
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Unbiased integer in [0, n) by rejection sampling.
    std::uint64_t uniform_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // In [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Box-Muller (one value per call; the pair's
    // second half is discarded to keep the draw count predictable).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // First k entries of a uniform random permutation of [0, n)
    // (partial Fisher-Yates).
    std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n,
                                                          std::uint32_t k);

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

inline std::vector<std::uint32_t> Rng::sample_without_replacement(std::uint32_t n,
                                                                  std::uint32_t k) {
    std::vector<std::uint32_t> pool(n);
    for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    for (std::uint32_t i = 0; i < k; ++i) {
        std::uint32_t j = i + static_cast<std::uint32_t>(uniform_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

} // namespace ncct
