// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "visionrf/channel.hpp"
#include "visionrf/depthcam.hpp"
#include "visionrf/geometry.hpp"
#include "visionrf/scene.hpp"

namespace visionrf {

struct WorldConfig {
  Rect bounds{0.0, 0.0, 8.0, 6.0};
  double dt = 1.0 / 30.0;
  double duration = 10.0;  // seconds per episode
  std::uint64_t seed = 1;
  double v_max = 2.0;
  bool height_gated = false;
};

// One base station and the parameters of its link to the station.
struct LinkConfig {
  int id = 1;
  Vec2 position;
  double height = 1.5;
  LinkParams params;
};

struct PedestrianConfig {
  int count = 2;
  double speed = 1.0;
  double radius = 0.3;
  double height = 1.7;
};

struct DatasetConfig {
  int episodes = 200;
  int horizon = 4;      // look-ahead H in ticks
  int test_every = 5;   // episode i is held out when i % test_every == test_every - 1
  int workers = 1;
};

struct ConvTowerConfig {
  int conv1_channels = 8;
  int conv1_kernel = 4;
  int conv1_stride = 2;
  int conv2_channels = 16;
  int conv2_kernel = 4;
  int conv2_stride = 2;
};

struct PredictorConfig {
  std::string variant = "IMG_RF";
  int link = 1;
  int t_past = 8;
  int rss_stride = 1;
  ConvTowerConfig tower;
  int feature_width = 32;
  int hidden = 64;
  double lr = 1e-3;
  int batch = 32;
  int epochs = 30;
  int steps_per_epoch = 0;  // 0 = one pass over the training windows
};

struct HandoverConfig {
  std::string observation = "IMG";
  double noise_floor_dbm = -90.0;
  double b_eff_mbps = 20.0;
  double r_max_mbps = 150.0;
  int t_ho = 6;
  int frame_downsample = 2;
  ConvTowerConfig tower;
  int feature_width = 32;
  int hidden = 64;
  double gamma = 0.95;
  int replay_capacity = 10000;
  int target_sync = 500;
  double lr = 1e-3;
  int batch = 32;
  int train_steps = 20000;
  int learning_starts = 500;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int eval_episodes = 20;
  int lead_window = 30;
  double threshold_db = 6.0;  // rss-threshold baseline: hand over when the other BS is this much stronger
  double approach_speed = 1.0; // scripted trajectory for the action-value trace
};

struct InpaintConfig {
  std::string variant = "IMG_RF";
  int link = 1;
  int rss_window = 32;
  int rss_stride = 2;
  std::string mask = "right_third";
  ConvTowerConfig tower;
  int image_latent = 64;
  int rss_latent = 64;
  int decoder_channels = 16;
  double lambda = 0.8;
  double detect_threshold_m = 1.0;
  double lr = 1e-3;
  int batch = 16;
  int steps = 3000;
  int sample_stride = 1;  // keep every k-th eligible tick
};

struct OutputConfig {
  std::string root = "runs";
};

struct ScenarioConfig {
  WorldConfig world;
  CameraModel camera;
  Node station{0, {5.0, 0.5}, 1.5};
  std::vector<LinkConfig> links;
  PedestrianConfig pedestrians;
  DatasetConfig dataset;
  PredictorConfig predictor;
  HandoverConfig handover;
  InpaintConfig inpaint;
  OutputConfig output;

  // Throws ConfigError naming the first offending key.
  void validate() const;

  int n_ticks() const;
  std::vector<Link> make_links() const;
  const LinkConfig& link(int id) const;
  std::size_t link_index(int id) const;
};

// Parses a TOML document. Missing keys take defaults; unknown keys are errors.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);

// Defaults with two links: the reference scenario used by the acceptance suite.
ScenarioConfig reference_config();

// Every field, defaults materialized, as JSON with sorted keys.
std::string resolved_config_json(const ScenarioConfig& config);
void write_resolved_config(const std::filesystem::path& dir, const ScenarioConfig& config);

}  // namespace visionrf
