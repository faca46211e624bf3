// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include <gtest/gtest.h>

#include "pipeline.hpp"

int main(int argc, char** argv) {
  visionrf::pipeline::tune_allocator();
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
