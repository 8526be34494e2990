#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace risopt {

using Rng = std::mt19937_64;

namespace detail {

// SplitMix64 mixing step; used to derive well-separated seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Engine for Monte Carlo trial `trial` of a run seeded with `seed`.
/// The stream depends only on (seed, trial), never on execution order,
/// so trials can run on any worker in any order.
inline Rng make_trial_rng(std::uint64_t seed, std::uint64_t trial) {
    std::uint64_t s = seed;
    std::uint64_t a = detail::splitmix64(s);
    s ^= trial + 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = detail::splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return Rng(seq);
}

/// One draw of a circularly-symmetric complex Gaussian with E|x|^2 = 1.
inline std::complex<double> sample_cn(Rng& rng) {
    static constexpr double inv_sqrt2 = 0.70710678118654752440;
    std::normal_distribution<double> n01(0.0, 1.0);
    const double re = n01(rng);
    const double im = n01(rng);
    return {re * inv_sqrt2, im * inv_sqrt2};
}

} // namespace risopt
