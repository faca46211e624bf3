// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "visionrf/config.hpp"
#include "visionrf/dataset.hpp"
#include "visionrf/handover.hpp"
#include "visionrf/inpaint.hpp"
#include "visionrf/predictor.hpp"

// Experiment steps shared by the command-line runner and the acceptance suite.
namespace visionrf::pipeline {

// Keeps large tensor buffers on the heap between steps instead of returning them to the
// kernel; training allocates and frees the same sizes thousands of times.
void tune_allocator();

struct EpisodeSet {
  std::vector<Episode> episodes;
  std::vector<std::size_t> indices;  // dataset index of each episode (from its directory name)
};

// Every ep_NNNNN directory under `root`, in index order.
EpisodeSet read_dataset(const std::filesystem::path& root);
EpisodeSet generate_set(const ScenarioConfig& config, std::uint64_t master_seed, int workers);

struct WindowSplit {
  std::vector<SampleWindow> train;
  std::vector<SampleWindow> test;
};

WindowSplit predictor_windows(const ScenarioConfig& config, const EpisodeSet& set);

PredictorTrainResult train_predictor(const ScenarioConfig& config, const WindowSplit& split,
                                     PredictorVariant variant, std::uint64_t seed);

struct InpaintSplit {
  std::vector<InpaintSample> train;
  std::vector<InpaintSample> test;
};

// Training samples use the configured mask mode; held-out samples always use the right-third mask
// so every model is judged on the same occlusion.
InpaintSplit inpaint_samples(const ScenarioConfig& config, const EpisodeSet& set, std::uint64_t seed);

InpaintTrainResult train_inpainter(const ScenarioConfig& config, const InpaintSplit& split, InpaintVariant variant,
                                   std::uint64_t seed);

struct InpaintEvaluation {
  std::string method;
  std::vector<InpaintReportRow> rows;
  double median_mse_present = 0.0;  // over samples with a pedestrian inside the mask
  double median_mse_all = 0.0;
  double balanced_accuracy = 0.0;
  std::size_t present = 0;
};

InpaintEvaluation evaluate_inpainter(const ScenarioConfig& config, const InpaintModel& model,
                                     std::span<const InpaintSample> samples);
InpaintEvaluation evaluate_background_fill(const ScenarioConfig& config, std::span<const InpaintSample> samples);
void write_inpaint_summary(const std::filesystem::path& path, std::span<const InpaintEvaluation> evaluations);

// Median of a non-empty list (mean of the middle pair for even sizes).
double median(std::vector<double> values);

}  // namespace visionrf::pipeline
