// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visionrf/channel.hpp"
#include "visionrf/config.hpp"
#include "visionrf/depthcam.hpp"
#include "visionrf/scene.hpp"

namespace visionrf {

enum class Condition : std::uint8_t { kLos = 0, kNlos = 1, kTransition = 2 };

std::string_view condition_name(Condition c);
Condition parse_condition(std::string_view name);

inline constexpr std::string_view kEpisodeFormat = "1";

struct EpisodeManifest {
  std::string format_version{kEpisodeFormat};
  std::uint64_t seed = 0;
  double dt = 1.0 / 30.0;
  int n_ticks = 0;
  int horizon = 4;
  CameraModel camera;
  std::vector<Link> links;
  friend bool operator==(const EpisodeManifest&, const EpisodeManifest&) = default;
};

struct Episode {
  EpisodeManifest manifest;
  std::vector<DepthFrame> frames;
  std::vector<PowerTrace> traces;               // one per link, manifest order
  std::vector<std::vector<Condition>> labels;   // [link][tick]
  friend bool operator==(const Episode&, const Episode&) = default;

  std::size_t trace_index(int link_id) const;
  // True when the link is blocked at `tick` (label NLOS).
  bool blocked(std::size_t link, int tick) const {
    return labels[link][static_cast<std::size_t>(tick)] == Condition::kNlos;
  }
};

// Random initial pedestrians (uniform position, uniform heading, configured speed).
Scene initial_scene(const ScenarioConfig& config, Rng& rng);

// Per-tick LOS/NLOS state of every link over `n` ticks starting from `scene` (scene is stepped).
// Used for labels; the per-tick rule is NLOS if blocked now, else TRANSITION if the state at
// t + horizon differs, else LOS.
std::vector<Condition> condition_labels(std::span<const std::uint8_t> blocked, int n_ticks, int horizon);

// Steps the scene n_ticks times from a seeded initial state, recording frames, rss and labels.
Episode generate_episode(const ScenarioConfig& config, std::uint64_t seed);

// Same, starting from a caller-supplied scene; `rng` feeds shadowing.
Episode record_episode(const ScenarioConfig& config, Scene scene, Rng& rng, std::uint64_t seed);

// A training example. Frames are referenced, not copied; the episode must outlive the window.
struct SampleWindow {
  std::size_t episode = 0;         // caller-defined episode index
  int t = 0;                       // last observed tick
  std::vector<const DepthFrame*> past_frames;  // T_past frames ending at t, every rss_stride-th tick
  std::vector<double> past_rss;                // T_past dBm values, same ticks
  double label_rss = 0.0;                      // dBm at t + H
  Condition label_condition = Condition::kLos;  // over the interval (t, t + H]
};

// One window per t in [(T_past - 1) * rss_stride, n_ticks - 1 - H].
std::vector<SampleWindow> make_windows(const Episode& episode, std::size_t trace, int t_past, int horizon,
                                       int rss_stride, std::size_t episode_index = 0);

// Window label: TRANSITION if the LOS/NLOS state at t + H differs from t, else the state at t + H.
Condition window_condition(const Episode& episode, std::size_t trace, int t, int horizon);

std::string episode_dir_name(std::size_t index);

void write_episode(const Episode& episode, const std::filesystem::path& dir);
Episode read_episode(const std::filesystem::path& dir);

// Episodes 0..count-1 with seeds derive_seed(master, i); identical for any worker count.
std::vector<Episode> generate_episodes(const ScenarioConfig& config, std::uint64_t master_seed,
                                       std::size_t first, std::size_t count, int workers);

// Generates and writes <root>/ep_%05d for i in [0, count).
void generate_dataset(const ScenarioConfig& config, std::uint64_t master_seed, std::size_t count,
                      const std::filesystem::path& root, int workers);

// Runs fn(i) for i in [0, n) on `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

bool is_test_episode(std::size_t index, int test_every);

}  // namespace visionrf
