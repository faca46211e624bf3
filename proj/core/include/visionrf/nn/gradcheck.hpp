// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "visionrf/nn/network.hpp"

namespace visionrf::nn {

struct GradcheckOptions {
  int instances = 20;   // random networks per layer type
  double step = 1e-5;   // central-difference step
  std::uint64_t seed = 0;
};

struct GradcheckRow {
  std::string layer;
  int instances = 0;
  std::size_t checked = 0;  // scalar derivatives compared
  double max_rel_error = 0.0;
};

// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

// Max relative error between backward() and central differences of loss = sum(w * y) over
// every parameter and input element.
double check_gradients(const NetworkSpec& spec, const Params& params, const std::vector<Tensor>& inputs,
                       const Tensor& weights, double step, std::size_t* checked = nullptr);

// One row per layer type in the menu.
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options = {});

}  // namespace visionrf::nn
