#pragma once

#include <cstdint>
#include <random>

namespace gapkit {

// All randomness flows through mt19937_64. The conversions below are written
// out instead of using <random> distributions so streams are identical across
// standard library implementations.
using Rng = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Child seed for one unit of work: mix64(root ^ mix64(id ^ mix64(purpose))).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t id, std::uint64_t purpose);

// Uniform in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

// Uniform in [lo, hi).
double uniform(Rng& rng, double lo, double hi);

// Standard normal via Box-Muller (one value per call, no cached pair).
double standard_normal(Rng& rng);

// Uniform integer in [0, n). Rejection sampling, no modulo bias.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

namespace purpose {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kHparams = 3;
inline constexpr std::uint64_t kGgpFit = 4;
}  // namespace purpose

}  // namespace gapkit
