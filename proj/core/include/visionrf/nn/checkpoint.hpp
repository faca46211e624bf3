// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "visionrf/nn/network.hpp"

namespace visionrf::nn {

// A trained model on disk: <dir>/manifest.json plus <dir>/params.bin (little-endian float64,
// parameter tensors in spec order).
struct Checkpoint {
  NetworkSpec spec;
  Params params;
  std::map<std::string, double> hyperparameters;  // lr, standardization stats, ...
  std::map<std::string, std::string> tags;        // variant names and other labels
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

inline constexpr std::string_view kCheckpointFormat = "1";

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(std::string_view text);

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace visionrf::nn
