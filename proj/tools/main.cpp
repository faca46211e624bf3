// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "cli.hpp"
#include "pipeline.hpp"

int main(int argc, char** argv) {
  visionrf::pipeline::tune_allocator();
  return visionrf::cli::run(argc, argv);
}
