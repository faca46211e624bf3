// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <vector>

#include "visionrf/geometry.hpp"

namespace visionrf {

// A radio node: base station or station. Height is the antenna height above the floor.
struct Node {
  int id = 0;
  Vec2 position;
  double height = 1.5;
  friend bool operator==(const Node&, const Node&) = default;
};

// A pedestrian is a vertical cylinder in 3D and a circle in the plan view.
struct Pedestrian {
  int id = 0;
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;
  double height = 1.7;
  friend bool operator==(const Pedestrian&, const Pedestrian&) = default;
};

struct Crossing {
  int pedestrian_id = 0;
  double chord_length = 0.0;
  friend bool operator==(const Crossing&, const Crossing&) = default;
};

struct BlockageOptions {
  // When set, a pedestrian shorter than the lower antenna of the link cannot block it.
  bool height_gated = false;
};

// Immutable plan-view snapshot of the world. Construction validates every invariant,
// so operations on a Scene never need to re-check them.
class Scene {
 public:
  Scene(Rect bounds, std::vector<Node> base_stations, Node station,
        std::vector<Pedestrian> pedestrians, double dt, double v_max,
        std::uint64_t tick = 0);

  const Rect& bounds() const { return bounds_; }
  const std::vector<Node>& base_stations() const { return base_stations_; }
  const Node& station() const { return station_; }
  const std::vector<Pedestrian>& pedestrians() const { return pedestrians_; }
  std::uint64_t tick() const { return tick_; }
  double dt() const { return dt_; }
  double v_max() const { return v_max_; }

  const Pedestrian* find_pedestrian(int id) const;

  friend bool operator==(const Scene&, const Scene&) = default;

 private:
  friend Scene step_scene(const Scene& scene);

  Rect bounds_;
  std::vector<Node> base_stations_;
  Node station_;
  std::vector<Pedestrian> pedestrians_;
  double dt_;
  double v_max_;
  std::uint64_t tick_;
};

// Advances every pedestrian by one tick with specular reflection at the bounds.
Scene step_scene(const Scene& scene);

// Pedestrians whose plan-view circle strictly intersects the open segment tx -> rx.
// Tangency is not a crossing. The result does not depend on the order of tx and rx.
std::vector<Crossing> los_crossings(const Scene& scene, const Node& tx, const Node& rx,
                                    BlockageOptions options = {});

// Chord of the open segment a -> b inside the circle (center, radius); 0 when disjoint or tangent.
double segment_circle_chord(Vec2 a, Vec2 b, Vec2 center, double radius);

}  // namespace visionrf
