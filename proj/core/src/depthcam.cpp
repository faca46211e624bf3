// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/depthcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "visionrf/error.hpp"

namespace visionrf {
namespace {

struct Ray {
  Vec3 origin;
  Vec3 dir;  // forward component is exactly 1, so the ray parameter is z-depth
};

constexpr double kNoHit = std::numeric_limits<double>::infinity();

double hit_walls(const Ray& ray, const Rect& b) {
  double t = kNoHit;
  if (ray.dir.x > 0.0) t = std::min(t, (b.x_max - ray.origin.x) / ray.dir.x);
  if (ray.dir.x < 0.0) t = std::min(t, (b.x_min - ray.origin.x) / ray.dir.x);
  if (ray.dir.y > 0.0) t = std::min(t, (b.y_max - ray.origin.y) / ray.dir.y);
  if (ray.dir.y < 0.0) t = std::min(t, (b.y_min - ray.origin.y) / ray.dir.y);
  return t >= 0.0 ? t : kNoHit;
}

// Side surface and top cap of a vertical cylinder standing on the floor.
double hit_cylinder(const Ray& ray, const Pedestrian& p) {
  double best = kNoHit;
  const double ox = ray.origin.x - p.position.x;
  const double oy = ray.origin.y - p.position.y;
  const double a = ray.dir.x * ray.dir.x + ray.dir.y * ray.dir.y;
  const double r2 = p.radius * p.radius;
  if (a > 0.0) {
    const double b = 2.0 * (ox * ray.dir.x + oy * ray.dir.y);
    const double c = ox * ox + oy * oy - r2;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      for (double t : {(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)}) {
        if (t <= 0.0) continue;
        const double z = ray.origin.z + t * ray.dir.z;
        if (z >= 0.0 && z <= p.height) {
          best = t;
          break;
        }
      }
    }
  }
  if (ray.dir.z != 0.0) {
    const double t = (p.height - ray.origin.z) / ray.dir.z;
    if (t > 0.0 && t < best) {
      const double hx = ox + t * ray.dir.x;
      const double hy = oy + t * ray.dir.y;
      if (hx * hx + hy * hy <= r2) best = t;
    }
  }
  return best;
}

}  // namespace

void CameraModel::validate() const {
  auto fail = [](const std::string& what) { throw DomainError("invalid camera: " + what); };
  if (!(near_clip > 0.0 && near_clip < far_clip)) fail("need 0 < near_clip < far_clip");
  if (width < 8 || height < 8) fail("resolution must be at least 8x8");
  if (!(frame_rate > 0.0)) fail("frame_rate must be > 0");
  if (!(hfov > 0.0 && hfov < std::numbers::pi) || !(vfov > 0.0 && vfov < std::numbers::pi)) {
    fail("fields of view must be in (0, pi)");
  }
}

DepthFrame render_depth(const Scene& scene, const CameraModel& camera) {
  camera.validate();
  if (!scene.bounds().contains({camera.position.x, camera.position.y})) {
    throw DomainError("render_depth: camera outside scene bounds");
  }
  const double cy = std::cos(camera.yaw), sy = std::sin(camera.yaw);
  const double cp = std::cos(camera.pitch), sp = std::sin(camera.pitch);
  const Vec3 forward{cp * cy, cp * sy, sp};
  const Vec3 right{sy, -cy, 0.0};
  // up = right x forward
  const Vec3 up{right.y * forward.z - right.z * forward.y, right.z * forward.x - right.x * forward.z,
                right.x * forward.y - right.y * forward.x};
  const double tx = std::tan(camera.hfov / 2.0);
  const double ty = std::tan(camera.vfov / 2.0);

  DepthFrame frame;
  frame.tick = scene.tick();
  frame.width = camera.width;
  frame.height = camera.height;
  frame.depth.resize(frame.pixel_count());

  for (int v = 0; v < camera.height; ++v) {
    const double yn = (1.0 - 2.0 * (v + 0.5) / camera.height) * ty;
    for (int u = 0; u < camera.width; ++u) {
      const double xn = (2.0 * (u + 0.5) / camera.width - 1.0) * tx;
      Ray ray{camera.position,
              {forward.x + xn * right.x + yn * up.x, forward.y + xn * right.y + yn * up.y,
               forward.z + xn * right.z + yn * up.z}};
      double t = hit_walls(ray, scene.bounds());
      for (const auto& p : scene.pedestrians()) t = std::min(t, hit_cylinder(ray, p));
      const double d = std::clamp(t, camera.near_clip, camera.far_clip);
      frame.depth[static_cast<std::size_t>(v) * camera.width + u] = static_cast<float>(d);
    }
  }
  return frame;
}

DepthFrame apply_mask(const DepthFrame& frame, const PixelRect& rect) {
  if (rect.x0 < 0 || rect.y0 < 0 || rect.w < 0 || rect.h < 0 || rect.x0 + rect.w > frame.width ||
      rect.y0 + rect.h > frame.height) {
    throw DomainError("apply_mask: rect (" + std::to_string(rect.x0) + "," + std::to_string(rect.y0) +
                      "," + std::to_string(rect.w) + "," + std::to_string(rect.h) +
                      ") outside frame " + std::to_string(frame.width) + "x" +
                      std::to_string(frame.height));
  }
  DepthFrame out = frame;
  if (out.mask.empty()) out.mask.assign(out.pixel_count(), 0);
  for (int y = rect.y0; y < rect.y0 + rect.h; ++y) {
    for (int x = rect.x0; x < rect.x0 + rect.w; ++x) {
      const auto i = static_cast<std::size_t>(y) * out.width + x;
      out.depth[i] = 0.0f;
      out.mask[i] = 1;
    }
  }
  return out;
}

DepthFrame downsample(const DepthFrame& frame, int factor) {
  if (factor < 1 || frame.width / factor < 1 || frame.height / factor < 1) {
    throw DomainError("downsample: bad factor " + std::to_string(factor));
  }
  DepthFrame out;
  out.tick = frame.tick;
  out.width = frame.width / factor;
  out.height = frame.height / factor;
  out.depth.resize(out.pixel_count());
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) acc += frame.at(x * factor + dx, y * factor + dy);
      }
      out.depth[static_cast<std::size_t>(y) * out.width + x] = static_cast<float>(acc * inv);
    }
  }
  return out;
}

PixelRect right_third(int width, int height) {
  const int w = width / 3;
  return {width - w, 0, w, height};
}

void write_pgm(const std::filesystem::path& path, std::span<const DepthFrame> frames, double near_clip,
               double far_clip) {
  if (frames.empty()) throw DomainError("write_pgm: no frames");
  const int h = frames.front().height;
  int total_w = 0;
  for (const auto& f : frames) {
    if (f.height != h) throw DomainError("write_pgm: frame heights differ");
    total_w += f.width;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "P5\n" << total_w << ' ' << h << "\n65535\n";
  const double span = far_clip - near_clip;
  for (int y = 0; y < h; ++y) {
    for (const auto& f : frames) {
      for (int x = 0; x < f.width; ++x) {
        const double q = std::clamp((f.at(x, y) - near_clip) / span, 0.0, 1.0);
        const auto v = static_cast<std::uint16_t>(std::lround(q * 65535.0));
        const char be[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
        out.write(be, 2);
      }
    }
  }
}

}  // namespace visionrf
