// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>

#include "visionrf/nn/network.hpp"

namespace visionrf::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  Params m;
  Params v;
};

// Zero moments shaped like `params`.
AdamState make_adam_state(const Params& params, AdamConfig config = {});

// One bias-corrected Adam update, in place. Throws ShapeError when shapes disagree.
void adam_step(Params& params, const Params& grads, AdamState& state);

}  // namespace visionrf::nn
