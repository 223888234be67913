#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace repchain {

/// splitmix64 finalizer. Used to derive independent, stable sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Sub-seed for chunk `index` of a run seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Seeded random stream. Variates are produced from raw 64-bit draws with
/// explicit transforms so results do not depend on the standard library's
/// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in (0, 1], 53 bits.
    double uniform_pos() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform double in [0, 1), 53 bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Number of Bernoulli(p) trials up to and including the first success.
    std::int64_t geometric(double p) {
        if (!(p > 0.0) || p > 1.0) {
            throw std::invalid_argument("geometric: success probability must be in (0, 1]");
        }
        if (p == 1.0) {
            return 1;
        }
        const double k = std::ceil(std::log(uniform_pos()) / std::log1p(-p));
        if (k < 1.0) {
            return 1;
        }
        if (k > 9.0e18) {
            return std::numeric_limits<std::int64_t>::max() / 4;
        }
        return static_cast<std::int64_t>(k);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace repchain
