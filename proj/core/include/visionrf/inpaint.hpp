// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visionrf/config.hpp"
#include "visionrf/dataset.hpp"
#include "visionrf/depthcam.hpp"
#include "visionrf/nn/checkpoint.hpp"
#include "visionrf/nn/network.hpp"
#include "visionrf/predictor.hpp"

namespace visionrf {

enum class InpaintVariant { kImgRf, kRfOnly };

std::string_view inpaint_variant_name(InpaintVariant v);
InpaintVariant parse_inpaint_variant(std::string_view name);

struct InpaintDims {
  int width = 64;
  int height = 48;
  int rss_window = 32;
  ConvTowerConfig tower;
  int image_latent = 64;
  int rss_latent = 64;
  int decoder_channels = 16;
};

InpaintDims inpaint_dims(const ScenarioConfig& config);

// Decoder seed grid: Dense(latent -> C * gh * gw), then two (NearestUpsample x2, valid Conv)
// stages with kernels 4 and 3 land exactly on height x width. Throws DomainError when the frame
// size does not admit such a grid.
struct DecoderGrid {
  int height = 0;
  int width = 0;
};
DecoderGrid decoder_grid(int height, int width);

// IMG_RF: conv tower on (depth, mask) plus a dense tower on the rss window, concatenated into the
// latent. RF_ONLY keeps only the rss tower.
nn::NetworkSpec build_inpainter(InpaintVariant variant, const InpaintDims& dims);

struct InpaintSample {
  std::size_t episode = 0;
  int tick = 0;
  const DepthFrame* truth = nullptr;  // unmasked frame owned by the episode
  PixelRect mask;
  std::vector<double> rss;            // rss_window dBm values at rss_stride ticks ending at `tick`
};

DepthFrame masked_input(const InpaintSample& sample);

enum class MaskMode { kRightThird, kRandom };
MaskMode parse_mask_mode(std::string_view name);

// One sample per eligible tick (every `sample_stride`-th, with a full rss window behind it).
// Random masks are drawn from `rng`; the right-third mask ignores it.
std::vector<InpaintSample> make_inpaint_samples(const Episode& episode, std::size_t trace, int rss_window,
                                                int rss_stride, MaskMode mode, int sample_stride, Rng& rng,
                                                std::size_t episode_index = 0);

struct InpaintModel {
  InpaintVariant variant = InpaintVariant::kImgRf;
  InpaintDims dims;
  nn::NetworkSpec spec;
  nn::Params params;
  Standardizer rss;
  double near_clip = 0.1;
  double far_clip = 12.0;
  std::uint64_t seed = 0;
  std::int64_t step = 0;

  nn::Checkpoint to_checkpoint() const;
  static InpaintModel from_checkpoint(const nn::Checkpoint& ckpt);
};

struct InpaintTrainConfig {
  double lr = 1e-3;
  int batch = 16;
  int steps = 3000;
  double lambda = 0.8;
};

InpaintTrainConfig inpaint_train_config(const ScenarioConfig& config);

struct InpaintTrainResult {
  InpaintModel model;
  std::vector<double> loss_history;  // weighted loss per step
};

// lambda * MSE(masked pixels) + (1 - lambda) * MSE(unmasked pixels), depth scaled by 1 / far_clip.
struct WeightedLoss {
  double loss = 0.0;
  nn::Tensor grad;
};
WeightedLoss weighted_mse(const nn::Tensor& pred, const nn::Tensor& target, const nn::Tensor& mask, double lambda);

InpaintTrainResult train_inpainter(std::span<const InpaintSample> samples, InpaintVariant variant,
                                   const InpaintDims& dims, const InpaintTrainConfig& config,
                                   const CameraModel& camera, std::uint64_t seed);

std::vector<nn::Tensor> inpaint_inputs(const InpaintModel& model, std::span<const DepthFrame> masked,
                                       std::span<const std::vector<double>> rss);

// Composited reconstruction: unmasked pixels copied from the input, masked pixels from the network
// (clamped to the clip range). The mask is carried over.
DepthFrame reconstruct(const InpaintModel& model, const DepthFrame& masked_frame, std::span<const double> rss_window);
std::vector<DepthFrame> reconstruct_batch(const InpaintModel& model, std::span<const InpaintSample> samples);

// Masked pixels replaced by the blocker-free background render.
DepthFrame background_fill(const DepthFrame& masked_frame, const DepthFrame& background);

// Blocker-free render of the configured room.
DepthFrame background_frame(const ScenarioConfig& config);

struct InpaintMetrics {
  double masked_mse = 0.0;  // m^2 over mask == 1
  bool presence_pred = false;
  bool presence_true = false;
};

// Presence: some masked pixel is nearer than background - threshold. Empty mask -> DomainError.
InpaintMetrics inpaint_metrics(const DepthFrame& recon, const DepthFrame& truth, std::span<const std::uint8_t> mask,
                               const DepthFrame& background, double detect_threshold_m);

// Mean of true-positive and true-negative rates; a class with no samples is left out.
double balanced_accuracy(std::span<const InpaintMetrics> metrics);

struct InpaintReportRow {
  std::size_t sample_id = 0;
  InpaintMetrics metrics;
};

void write_inpaint_report(const std::filesystem::path& path, std::span<const InpaintReportRow> rows);

// Side-by-side truth / masked input / composited output.
void write_triptych(const std::filesystem::path& path, const DepthFrame& truth, const DepthFrame& masked,
                    const DepthFrame& composited, const CameraModel& camera);

}  // namespace visionrf
