#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lfd {

using Rng = std::mt19937_64;

uint64_t splitmix64(uint64_t x);

// Deterministic per-purpose generator derived from the run seed. Streams with
// different names are statistically independent; no global entropy is used.
Rng make_stream(uint64_t seed, std::string_view name);

}  // namespace lfd
