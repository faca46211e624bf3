// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "pipeline.hpp"

#include <malloc.h>

#include <algorithm>
#include <charconv>

#include "visionrf/csv.hpp"
#include "visionrf/error.hpp"
#include "visionrf/seed.hpp"

namespace visionrf::pipeline {
namespace {

constexpr std::uint64_t kMaskStream = 2;

bool parse_episode_dir(const std::string& name, std::size_t& index) {
  if (name.size() < 4 || name.compare(0, 3, "ep_") != 0) return false;
  const char* b = name.data() + 3;
  const char* e = name.data() + name.size();
  auto [p, ec] = std::from_chars(b, e, index);
  return ec == std::errc() && p == e;
}

}  // namespace

void tune_allocator() {
#ifdef M_MMAP_THRESHOLD
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

EpisodeSet read_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw FormatError("dataset directory not found: " + root.string());
  std::vector<std::pair<std::size_t, std::filesystem::path>> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    std::size_t index = 0;
    if (entry.is_directory() && parse_episode_dir(entry.path().filename().string(), index)) {
      dirs.emplace_back(index, entry.path());
    }
  }
  if (dirs.empty()) throw FormatError("no episodes under " + root.string());
  std::sort(dirs.begin(), dirs.end());
  EpisodeSet set;
  for (const auto& [index, dir] : dirs) {
    set.episodes.push_back(read_episode(dir));
    set.indices.push_back(index);
  }
  return set;
}

EpisodeSet generate_set(const ScenarioConfig& config, std::uint64_t master_seed, int workers) {
  EpisodeSet set;
  const auto n = static_cast<std::size_t>(config.dataset.episodes);
  set.episodes = generate_episodes(config, master_seed, 0, n, workers);
  for (std::size_t i = 0; i < n; ++i) set.indices.push_back(i);
  return set;
}

WindowSplit predictor_windows(const ScenarioConfig& config, const EpisodeSet& set) {
  WindowSplit split;
  const auto& p = config.predictor;
  for (std::size_t k = 0; k < set.episodes.size(); ++k) {
    const Episode& ep = set.episodes[k];
    auto w = make_windows(ep, ep.trace_index(p.link), p.t_past, config.dataset.horizon, p.rss_stride, set.indices[k]);
    auto& dst = is_test_episode(set.indices[k], config.dataset.test_every) ? split.test : split.train;
    dst.insert(dst.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return split;
}

PredictorTrainResult train_predictor(const ScenarioConfig& config, const WindowSplit& split,
                                     PredictorVariant variant, std::uint64_t seed) {
  return visionrf::train_predictor(split.train, split.test, variant, predictor_dims(config),
                                   predictor_train_config(config), config.camera.far_clip, seed);
}

InpaintSplit inpaint_samples(const ScenarioConfig& config, const EpisodeSet& set, std::uint64_t seed) {
  const auto& p = config.inpaint;
  const MaskMode train_mode = parse_mask_mode(p.mask);
  Rng rng(derive_seed(seed, kMaskStream));
  InpaintSplit split;
  for (std::size_t k = 0; k < set.episodes.size(); ++k) {
    const Episode& ep = set.episodes[k];
    const bool test = is_test_episode(set.indices[k], config.dataset.test_every);
    auto s = make_inpaint_samples(ep, ep.trace_index(p.link), p.rss_window, p.rss_stride,
                                  test ? MaskMode::kRightThird : train_mode, p.sample_stride, rng, set.indices[k]);
    auto& dst = test ? split.test : split.train;
    dst.insert(dst.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return split;
}

InpaintTrainResult train_inpainter(const ScenarioConfig& config, const InpaintSplit& split, InpaintVariant variant,
                                   std::uint64_t seed) {
  return visionrf::train_inpainter(split.train, variant, inpaint_dims(config), inpaint_train_config(config),
                                   config.camera, seed);
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

InpaintEvaluation summarize(std::string method, std::span<const DepthFrame> recon,
                            std::span<const InpaintSample> samples, const ScenarioConfig& config) {
  const DepthFrame background = background_frame(config);
  InpaintEvaluation ev;
  ev.method = std::move(method);
  std::vector<InpaintMetrics> metrics;
  std::vector<double> all, present;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const InpaintMetrics m = inpaint_metrics(recon[i], *samples[i].truth, recon[i].mask, background,
                                             config.inpaint.detect_threshold_m);
    metrics.push_back(m);
    ev.rows.push_back({i, m});
    all.push_back(m.masked_mse);
    if (m.presence_true) present.push_back(m.masked_mse);
  }
  ev.present = present.size();
  ev.median_mse_all = all.empty() ? 0.0 : median(all);
  ev.median_mse_present = present.empty() ? 0.0 : median(present);
  ev.balanced_accuracy = metrics.empty() ? 0.0 : balanced_accuracy(metrics);
  return ev;
}

}  // namespace

InpaintEvaluation evaluate_inpainter(const ScenarioConfig& config, const InpaintModel& model,
                                     std::span<const InpaintSample> samples) {
  const auto recon = reconstruct_batch(model, samples);
  return summarize(std::string(inpaint_variant_name(model.variant)), recon, samples, config);
}

InpaintEvaluation evaluate_background_fill(const ScenarioConfig& config, std::span<const InpaintSample> samples) {
  const DepthFrame background = background_frame(config);
  std::vector<DepthFrame> recon;
  recon.reserve(samples.size());
  for (const auto& s : samples) recon.push_back(background_fill(masked_input(s), background));
  return summarize("BACKGROUND", recon, samples, config);
}

void write_inpaint_summary(const std::filesystem::path& path, std::span<const InpaintEvaluation> evaluations) {
  CsvTable t;
  t.header = {"method", "samples", "present", "median_masked_mse_present", "median_masked_mse_all",
              "balanced_accuracy"};
  for (const auto& e : evaluations) {
    t.rows.push_back({e.method, std::to_string(e.rows.size()), std::to_string(e.present),
                      format_double(e.median_mse_present), format_double(e.median_mse_all),
                      format_double(e.balanced_accuracy)});
  }
  write_csv(path, t);
}

}  // namespace visionrf::pipeline
