// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <random>

namespace visionrf {

// Every stochastic component takes its generator explicitly; nothing is seeded implicitly.
using Rng = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Per-episode (or per-run) seed derived from a master seed. Depends only on
// (master, index), so parallel generation is order-independent:
//   derive_seed(m, i) = mix64(m ^ mix64(i + 0x9E3779B97F4A7C15))
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace visionrf
