// SPDX-License-Identifier: Apache-2.0
//
// Deterministic RNG. All randomness in the pipeline flows through Rng so
// that results do not depend on the standard library's distribution
// implementations. Streams are derived by hashing a parent seed with a
// string tag, which makes per-utterance / per-parameter streams
// order-independent.

#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace ts2 {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a over a tag string, folded with the parent seed via splitmix.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(parent ^ h);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index) {
    return splitmix64(derive_seed(parent, tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// xoshiro256** core with explicit double / integer draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) {
            s = splitmix64(s);
            w = s;
        }
        has_gauss_ = false;
        gauss_next_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased (rejection sampling).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_int(int lo, int hi) {  // inclusive range [lo, hi]
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller with cached spare.
    double gauss(double mu = 0.0, double sigma = 1.0) {
        if (has_gauss_) {
            has_gauss_ = false;
            return mu + gauss_next_ * sigma;
        }
        const double u = 1.0 - uniform();  // (0, 1], keeps log finite
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double a = 6.283185307179586 * v;
        gauss_next_ = r * std::sin(a);
        has_gauss_ = true;
        return mu + r * std::cos(a) * sigma;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    bool has_gauss_;
    double gauss_next_;
};

}  // namespace ts2
