#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "codelab/types.hpp"

namespace codelab {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic seed for a child stream: hash of (parent, a, b).
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(mix64(parent) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

/// Counter-based N(0, I_2) draw keyed by (seed, step, stream).
///
/// Every reverse step of every stream reads its own key, so results do not
/// depend on how streams are batched, ordered or split across threads. Step
/// t keys the noise that produces x_{t-1}; the initial state x_T (or x_tau)
/// uses key T + 1 (tau + 1).
inline Point2 stream_normal(std::uint64_t seed, std::uint64_t step, std::uint64_t stream) {
    const std::uint64_t k = derive_seed(seed, step, stream);
    const std::uint64_t a = mix64(k);
    const std::uint64_t b = mix64(k ^ 0x5851f42d4c957f2dULL);
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;          // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

}  // namespace codelab
