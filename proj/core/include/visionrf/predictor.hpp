// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "visionrf/config.hpp"
#include "visionrf/dataset.hpp"
#include "visionrf/nn/checkpoint.hpp"
#include "visionrf/nn/network.hpp"

namespace visionrf {

enum class PredictorVariant { kImg, kRf, kImgRf };

std::string_view variant_name(PredictorVariant v);
PredictorVariant parse_predictor_variant(std::string_view name);

struct PredictorDims {
  int width = 64;
  int height = 48;
  int t_past = 8;
  ConvTowerConfig tower;
  int feature_width = 32;
  int hidden = 64;
};

PredictorDims predictor_dims(const ScenarioConfig& config);

// IMG_RF: per-step conv tower features concatenated with that step's rss, RNNCell over T_past,
// Dense(hidden, 1). IMG drops the rss input; RF keeps only the rss input.
nn::NetworkSpec build_predictor(PredictorVariant variant, const PredictorDims& dims);

struct Standardizer {
  double mean = 0.0;
  double std = 1.0;
  double apply(double x) const { return (x - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

// Mean and population std of the labels; std is floored at 1e-6.
Standardizer fit_standardizer(std::span<const SampleWindow> windows);

struct PredictorModel {
  PredictorVariant variant = PredictorVariant::kImgRf;
  PredictorDims dims;
  nn::NetworkSpec spec;
  nn::Params params;
  Standardizer rss;
  double far_clip = 12.0;
  std::uint64_t seed = 0;
  std::int64_t step = 0;

  nn::Checkpoint to_checkpoint() const;
  static PredictorModel from_checkpoint(const nn::Checkpoint& ckpt);
};

struct PredictorTrainConfig {
  double lr = 1e-3;
  int batch = 32;
  int epochs = 30;
  int steps_per_epoch = 0;    // 0 = one pass over the training windows
  int max_val_windows = 512;  // evenly spaced subset used for the per-epoch validation loss
};

PredictorTrainConfig predictor_train_config(const ScenarioConfig& config);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean standardized MSE over the epoch's batches
  double val_loss = 0.0;    // NaN without validation windows
};

struct PredictorTrainResult {
  PredictorModel model;
  std::vector<EpochStats> history;
};

// Deterministic given `seed`. Throws DomainError on an empty training set and NumericError when
// the loss stops being finite.
PredictorTrainResult train_predictor(std::span<const SampleWindow> train, std::span<const SampleWindow> validation,
                                     PredictorVariant variant, const PredictorDims& dims,
                                     const PredictorTrainConfig& config, double far_clip, std::uint64_t seed);

// Network inputs for windows [begin, end): frames [B, T, 1, H, W] scaled by 1 / far_clip, rss [B, T, 1]
// standardized. Only the inputs the variant uses are returned, in spec order.
std::vector<nn::Tensor> predictor_inputs(const PredictorModel& model, std::span<const SampleWindow> windows);

// De-standardized dBm predictions.
std::vector<double> predict_rss(const PredictorModel& model, std::span<const SampleWindow> windows);

// Last observed rss of each window.
std::vector<double> persistence_predictions(std::span<const SampleWindow> windows);

struct RmseReport {
  std::array<double, 3> rmse{};        // indexed by Condition
  std::array<std::size_t, 3> count{};
  double overall = 0.0;
  std::size_t total = 0;

  double of(Condition c) const { return rmse[static_cast<std::size_t>(c)]; }
};

// RMSE in dB per label condition; NaN for empty partitions.
RmseReport rmse_report(std::span<const double> predictions, std::span<const SampleWindow> windows);
RmseReport evaluate_rmse(const PredictorModel& model, std::span<const SampleWindow> windows);

// condition,count,rmse_db rows for LOS, NLOS, TRANSITION and ALL.
void write_rmse_report(const std::filesystem::path& path, const RmseReport& report);

}  // namespace visionrf
