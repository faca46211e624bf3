// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "visionrf/error.hpp"

namespace visionrf {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError("invalid scene: " + what);
}

// Folds a coordinate back into [lo, hi], flipping the velocity once per wall contact.
void reflect(double& pos, double& vel, double lo, double hi) {
  while (pos > hi || pos < lo) {
    if (pos > hi) {
      pos = 2.0 * hi - pos;
    } else {
      pos = 2.0 * lo - pos;
    }
    vel = -vel;
  }
}

}  // namespace

Scene::Scene(Rect bounds, std::vector<Node> base_stations, Node station,
             std::vector<Pedestrian> pedestrians, double dt, double v_max, std::uint64_t tick)
    : bounds_(bounds),
      base_stations_(std::move(base_stations)),
      station_(station),
      pedestrians_(std::move(pedestrians)),
      dt_(dt),
      v_max_(v_max),
      tick_(tick) {
  require(bounds_.x_max > bounds_.x_min && bounds_.y_max > bounds_.y_min, "empty bounds");
  require(std::isfinite(dt_) && dt_ > 0.0, "dt must be > 0");
  require(std::isfinite(v_max_) && v_max_ >= 0.0, "v_max must be >= 0");
  for (const auto& bs : base_stations_) {
    require(bounds_.contains(bs.position), "base station " + std::to_string(bs.id) + " outside bounds");
  }
  require(bounds_.contains(station_.position), "station outside bounds");
  for (const auto& p : pedestrians_) {
    const std::string who = "pedestrian " + std::to_string(p.id);
    require(bounds_.contains(p.position), who + " outside bounds");
    require(p.radius > 0.0, who + " radius must be > 0");
    require(p.height > 0.0, who + " height must be > 0");
    require(norm(p.velocity) <= v_max_ * (1.0 + 1e-12), who + " faster than v_max");
  }
}

const Pedestrian* Scene::find_pedestrian(int id) const {
  for (const auto& p : pedestrians_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

Scene step_scene(const Scene& scene) {
  Scene next = scene;
  const Rect& b = scene.bounds_;
  for (auto& p : next.pedestrians_) {
    p.position.x += p.velocity.x * scene.dt_;
    p.position.y += p.velocity.y * scene.dt_;
    reflect(p.position.x, p.velocity.x, b.x_min, b.x_max);
    reflect(p.position.y, p.velocity.y, b.y_min, b.y_max);
  }
  next.tick_ = scene.tick_ + 1;
  return next;
}

double segment_circle_chord(Vec2 a, Vec2 b, Vec2 center, double radius) {
  // Canonical endpoint order makes the result bitwise symmetric in (a, b).
  if (b.x < a.x || (b.x == a.x && b.y < a.y)) std::swap(a, b);
  const Vec2 d = b - a;
  const double length = norm(d);
  if (length == 0.0) return 0.0;
  const Vec2 u{d.x / length, d.y / length};
  const Vec2 f = center - a;
  const double along = dot(f, u);
  const double cross = f.x * u.y - f.y * u.x;
  const double perp2 = cross * cross;
  const double r2 = radius * radius;
  if (perp2 >= r2) return 0.0;
  const double half = std::sqrt(r2 - perp2);
  const double lo = std::max(along - half, 0.0);
  const double hi = std::min(along + half, length);
  return hi > lo ? hi - lo : 0.0;
}

std::vector<Crossing> los_crossings(const Scene& scene, const Node& tx, const Node& rx,
                                    BlockageOptions options) {
  if (tx.position == rx.position) throw DomainError("los_crossings: tx and rx coincide");
  const double link_height = std::min(tx.height, rx.height);
  std::vector<Crossing> out;
  for (const auto& p : scene.pedestrians()) {
    if (options.height_gated && p.height < link_height) continue;
    const double chord = segment_circle_chord(tx.position, rx.position, p.position, p.radius);
    if (chord > 0.0) out.push_back({p.id, chord});
  }
  return out;
}

}  // namespace visionrf
