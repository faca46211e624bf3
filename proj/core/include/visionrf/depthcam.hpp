// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "visionrf/geometry.hpp"
#include "visionrf/scene.hpp"

namespace visionrf {

// Fixed pinhole depth camera. Yaw is measured from +x toward +y, pitch upward.
struct CameraModel {
  Vec3 position{0.1, 3.0, 1.2};
  double yaw = 0.0;
  double pitch = 0.0;
  double hfov = 1.5707963267948966;
  double vfov = 1.0471975511965976;
  int width = 64;
  int height = 48;
  double near_clip = 0.1;
  double far_clip = 12.0;
  double frame_rate = 30.0;

  void validate() const;
  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

// Row-major z-depth image in meters. `mask` is empty or width*height entries (1 = missing);
// masked pixels hold the sentinel 0.
struct DepthFrame {
  std::uint64_t tick = 0;
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> mask;

  float at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  bool has_mask() const { return !mask.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  friend bool operator==(const DepthFrame&, const DepthFrame&) = default;
};

struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// One ray per pixel center; nearest hit among pedestrian cylinders and the bounding walls,
// clamped to [near_clip, far_clip]. Rays that hit nothing read far_clip.
DepthFrame render_depth(const Scene& scene, const CameraModel& camera);

// Sets depth to 0 and mask to 1 inside `rect`. Throws DomainError when rect leaves the frame.
DepthFrame apply_mask(const DepthFrame& frame, const PixelRect& rect);

// Box-filter downsampling by an integer factor; masks are not carried over.
DepthFrame downsample(const DepthFrame& frame, int factor);

// The right third of a frame (default inpainting occlusion).
PixelRect right_third(int width, int height);

// Binary PGM (P5, maxval 65535) with depth quantized linearly over [near_clip, far_clip].
// Several frames of equal height are written side by side.
void write_pgm(const std::filesystem::path& path, std::span<const DepthFrame> frames,
               double near_clip, double far_clip);

}  // namespace visionrf
