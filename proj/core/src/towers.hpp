// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <vector>

#include "visionrf/config.hpp"
#include "visionrf/error.hpp"
#include "visionrf/nn/network.hpp"

namespace visionrf::detail {

inline int conv_out(int n, int k, int s) { return n < k ? 0 : (n - k) / s + 1; }

// Conv -> ReLU -> Conv -> ReLU -> Flatten -> Dense(feature_width).
inline std::vector<nn::Layer> conv_tower(int in_channels, int height, int width, const ConvTowerConfig& t,
                                         int feature_width) {
  const int h1 = conv_out(height, t.conv1_kernel, t.conv1_stride);
  const int w1 = conv_out(width, t.conv1_kernel, t.conv1_stride);
  const int h2 = conv_out(h1, t.conv2_kernel, t.conv2_stride);
  const int w2 = conv_out(w1, t.conv2_kernel, t.conv2_stride);
  if (h2 < 1 || w2 < 1) throw DomainError("frame too small for the conv tower");
  if (feature_width < 1) throw DomainError("feature width must be positive");
  return {nn::Conv2D{in_channels, t.conv1_channels, t.conv1_kernel, t.conv1_stride},
          nn::ReLU{},
          nn::Conv2D{t.conv1_channels, t.conv2_channels, t.conv2_kernel, t.conv2_stride},
          nn::ReLU{},
          nn::Flatten{},
          nn::Dense{t.conv2_channels * h2 * w2, feature_width}};
}

}  // namespace visionrf::detail
