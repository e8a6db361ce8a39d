#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace progtex {

// Counter-based randomness: every draw is a pure function of (key, index), so
// results do not depend on evaluation order.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// Uniform in (0, 1]; never returns 0 so it is safe under log().
constexpr double unit_uniform(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

class NoiseStream {
public:
    constexpr NoiseStream() = default;
    constexpr explicit NoiseStream(std::uint64_t key) : key_(key) {}

    /// Derive an independent sub-stream, e.g. per step and per sampler branch.
    constexpr NoiseStream fork(std::uint64_t tag) const { return NoiseStream(hash_combine(key_, tag)); }

    constexpr std::uint64_t bits(std::uint64_t index) const { return hash_combine(key_, index); }

    double uniform(std::uint64_t index) const { return unit_uniform(bits(index)); }

    /// Standard normal via Box-Muller on two position-indexed uniforms.
    double gaussian(std::uint64_t index) const {
        const double u1 = unit_uniform(bits(2 * index));
        const double u2 = unit_uniform(bits(2 * index + 1));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    constexpr std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_ = 0;
};

} // namespace progtex
