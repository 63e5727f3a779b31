#pragma once

// Counter-based uniform/normal stream. Output n of stream s is a pure
// function of (seed, s, n), so any observation block or column can be
// generated independently and in parallel with bit-identical results.

#include <cstdint>

#include "coarsemom/gauss.hpp"

namespace coarsemom {

namespace detail {

inline constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

} // namespace detail

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : base_(detail::mix64(detail::mix64(seed + 1) + stream * detail::kGamma)) {}

    // Uniform on the open interval (0,1); 53 significant bits.
    double uniform(std::uint64_t counter) const {
        const std::uint64_t bits = detail::mix64(base_ + (counter + 1) * detail::kGamma);
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via inverse CDF; deterministic in (seed, stream, counter).
    double normal(std::uint64_t counter) const { return std_quantile(uniform(counter)); }

    // Equiprobable pick from {0, ..., n-1}.
    int pick(std::uint64_t counter, int n) const {
        const int v = static_cast<int>(uniform(counter) * n);
        return v >= n ? n - 1 : v;
    }

private:
    std::uint64_t base_;
};

} // namespace coarsemom
