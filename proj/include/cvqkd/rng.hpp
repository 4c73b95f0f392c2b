// Counter-based pseudo random numbers. Every draw is a pure function of
// (key, counter), so streams are reproducible and can be split freely.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <utility>

#include "cvqkd/common.hpp"

namespace cvqkd {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent child seed: mix64(mix64(seed) ^ mix64(tag + golden)).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix64(mix64(seed) ^ mix64(tag + 0x9e3779b97f4a7c15ULL));
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(derive_seed(seed, stream)) {}

    std::uint64_t next_u64() noexcept {
        return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL);
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Two independent standard normals (Box-Muller).
    std::pair<double, double> normal_pair() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = two_pi * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

    double normal() noexcept { return normal_pair().first; }

    /// Circular complex Gaussian with E|z|^2 = variance.
    cplx complex_normal(double variance) noexcept {
        const auto [re, im] = normal_pair();
        const double s = std::sqrt(0.5 * variance);
        return {s * re, s * im};
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace cvqkd
