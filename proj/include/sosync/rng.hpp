#pragma once

#include <cstdint>
#include <random>

namespace sosync {

using Rng = std::mt19937_64;

// SplitMix64 step. Used to derive independent per-task seeds from a base
// seed so that trials in a sweep own their streams regardless of execution
// order.
std::uint64_t splitmix64(std::uint64_t& state);

// Stable seed for sub-task (a, b) of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

Rng make_rng(std::uint64_t seed);

double uniform(Rng& rng, double lo, double hi);
double gaussian(Rng& rng);

}  // namespace sosync
