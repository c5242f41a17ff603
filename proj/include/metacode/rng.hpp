#pragma once

// Seeded random streams. Every run derives named substreams from one root
// seed so that adding draws in one module never shifts another module's
// sequence. Distributions are hand-rolled on top of mt19937_64 to keep the
// byte-for-byte reproducibility contract independent of the standard
// library's distribution implementations.

#include <cstdint>
#include <random>
#include <string_view>

namespace metacode {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(name);
    h ^= root + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= index * 0xbf58476d1ce4e5b9ull;
    // splitmix64 finalizer
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    static RngStream derive(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
        return RngStream(mix_seed(root, name, index));
    }

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53-bit mantissa
    double next_double() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // uniform index in [0, n), multiply-shift bound (bias ~ n / 2^64)
    std::size_t next_index(std::size_t n) {
        using u128 = unsigned __int128;
        return static_cast<std::size_t>((u128(gen_()) * u128(n)) >> 64);
    }

    bool bernoulli(double p) { return next_double() < p; }

    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 1e-300) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // uniform in [lo, hi)
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace metacode
