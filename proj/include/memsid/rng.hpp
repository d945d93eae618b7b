#ifndef MEMSID_RNG_HPP
#define MEMSID_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace memsid {

/// Deterministic splittable PRNG (SplitMix64, Steele/Lea/Flood constants).
/// Chosen over std::mt19937 + std:: distributions because the distribution
/// algorithms below are fully specified here: the same seed reproduces the
/// same sequence on any platform, which the wafer harness relies on.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Standard normal via Box-Muller; always consumes exactly two uniforms.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Poisson count via Knuth's multiplication method (fine for small rates).
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= next_double();
        } while (p > limit);
        return k - 1;
    }

    /// Stateless avalanche mix (the SplitMix64 finalizer).
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Per-die seed derived from the wafer seed and the die's (row, col).
/// Depends only on the die position, never on grid shape, so shrinking the
/// grid leaves every remaining die's stream untouched.
inline std::uint64_t die_seed(std::uint64_t wafer_seed, int row, int col) {
    std::uint64_t h = SplitMix64::mix(wafer_seed + 0x9e3779b97f4a7c15ull);
    h = SplitMix64::mix(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(row)) + 0xd1b54a32d192ed03ull));
    h = SplitMix64::mix(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(col)) + 0x8cb92ba72f3d8dd7ull));
    return h;
}

/// Independent sub-stream of a die's stream (thickness draw, acquisition
/// noise, static-sweep noise, ... each get their own salt).
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t salt) {
    return SplitMix64::mix(seed ^ SplitMix64::mix(salt + 0xbf58476d1ce4e5b9ull));
}

namespace seed_salt {
inline constexpr std::uint64_t thickness = 1;
inline constexpr std::uint64_t acquisition = 2;
inline constexpr std::uint64_t static_sweep = 3;
}  // namespace seed_salt

}  // namespace memsid

#endif  // MEMSID_RNG_HPP
