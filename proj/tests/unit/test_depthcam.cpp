// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "visionrf/depthcam.hpp"
#include "visionrf/error.hpp"

namespace visionrf {
namespace {

// Camera at (0, 5) looking down +x toward the wall x = 10. Odd resolution puts a pixel
// center exactly on the optical axis.
CameraModel facing_wall() {
  CameraModel c;
  c.position = {0.0, 5.0, 1.0};
  c.yaw = 0.0;
  c.width = 33;
  c.height = 25;
  c.hfov = 2.0 * std::atan(0.4);  // keeps every center-row ray on the far wall
  c.far_clip = 12.0;
  return c;
}

Scene room(std::vector<Pedestrian> peds) {
  return Scene({0.0, 0.0, 10.0, 10.0}, {}, Node{0, {1.0, 1.0}, 1.5}, std::move(peds), 1.0 / 30.0, 2.0);
}

TEST(RenderDepth, CenterRowSeesFlatWallAtTenMeters) {
  const CameraModel cam = facing_wall();
  const DepthFrame f = render_depth(room({}), cam);
  ASSERT_EQ(f.width, 33);
  ASSERT_EQ(f.height, 25);
  const int row = cam.height / 2;
  for (int x = 0; x < cam.width; ++x) EXPECT_NEAR(f.at(x, row), 10.0, 1e-5) << "column " << x;
}

TEST(RenderDepth, CylinderStraightAheadAnalytic) {
  const CameraModel cam = facing_wall();
  // Central ray hits the near side of the cylinder at d - r.
  const DepthFrame f = render_depth(room({Pedestrian{1, {5.0, 5.0}, {0, 0}, 0.3, 1.7}}), cam);
  EXPECT_NEAR(f.at(cam.width / 2, cam.height / 2), 4.7, 1e-5);
}

TEST(RenderDepth, OffAxisCylinderMatchesRayCircleOracle) {
  CameraModel cam = facing_wall();
  const Vec2 c{6.0, 5.4};
  const DepthFrame f = render_depth(room({Pedestrian{1, c, {0, 0}, 0.5, 1.7}}), cam);
  const double tx = std::tan(cam.hfov / 2.0);
  const int row = cam.height / 2;
  for (int u = 0; u < cam.width; ++u) {
    // Ray (1, -xn) in the plan view with z-depth parameter t.
    const double xn = (2.0 * (u + 0.5) / cam.width - 1.0) * tx;
    const double dx = 1.0, dy = -xn;
    const double ox = cam.position.x - c.x, oy = cam.position.y - c.y;
    const double a = dx * dx + dy * dy, b = 2 * (ox * dx + oy * dy), cc = ox * ox + oy * oy - 0.25;
    const double disc = b * b - 4 * a * cc;
    double want = 10.0;  // wall
    if (disc >= 0) want = std::min(want, (-b - std::sqrt(disc)) / (2 * a));
    EXPECT_NEAR(f.at(u, row), want, 1e-5) << "column " << u;
  }
}

TEST(RenderDepth, PedestrianBehindCameraIsInvisible) {
  const CameraModel cam = facing_wall();
  CameraModel c2 = cam;
  c2.position.x = 3.0;
  const DepthFrame empty = render_depth(room({}), c2);
  const DepthFrame behind = render_depth(room({Pedestrian{1, {1.0, 5.0}, {0, 0}, 0.3, 1.7}}), c2);
  EXPECT_EQ(empty.depth, behind.depth);
}

TEST(RenderDepth, ValuesStayInClipRange) {
  CameraModel cam = facing_wall();
  cam.far_clip = 6.0;
  const DepthFrame f = render_depth(room({Pedestrian{1, {0.2, 5.0}, {0, 0}, 0.15, 1.7}}), cam);
  for (float d : f.depth) {
    EXPECT_GE(d, cam.near_clip);
    EXPECT_LE(d, cam.far_clip);
  }
}

TEST(RenderDepthProperty, DeterministicAndMonotoneAlongAxis) {
  const CameraModel cam = facing_wall();
  float prev = 1e9f;
  for (double x = 9.0; x >= 1.0; x -= 0.25) {
    const Scene s = room({Pedestrian{1, {x, 5.0}, {0, 0}, 0.3, 1.7}});
    const DepthFrame a = render_depth(s, cam);
    EXPECT_EQ(a, render_depth(s, cam));
    const float center = a.at(cam.width / 2, cam.height / 2);
    EXPECT_LE(center, prev);
    prev = center;
  }
}

TEST(RenderDepth, RejectsCameraOutsideRoom) {
  CameraModel cam = facing_wall();
  cam.position.x = -1.0;
  EXPECT_THROW(render_depth(room({}), cam), DomainError);
}

TEST(CameraModel, ValidatesInvariants) {
  CameraModel c;
  c.near_clip = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.width = 7;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.frame_rate = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
}

DepthFrame constant_frame(int w, int h, float v) {
  DepthFrame f;
  f.width = w;
  f.height = h;
  f.depth.assign(static_cast<std::size_t>(w) * h, v);
  return f;
}

TEST(ApplyMask, ZeroAreaLeavesDepthUnchanged) {
  const DepthFrame f = constant_frame(10, 8, 3.0f);
  const DepthFrame m = apply_mask(f, {2, 2, 0, 0});
  EXPECT_EQ(m.depth, f.depth);
  EXPECT_EQ(m.mask, std::vector<std::uint8_t>(80, 0));
}

TEST(ApplyMask, WholeFrame) {
  const DepthFrame m = apply_mask(constant_frame(10, 8, 3.0f), {0, 0, 10, 8});
  EXPECT_EQ(m.depth, std::vector<float>(80, 0.0f));
  EXPECT_EQ(m.mask, std::vector<std::uint8_t>(80, 1));
}

TEST(ApplyMask, RightThirdOfSixtyThreeWide) {
  const PixelRect r = right_third(63, 20);
  EXPECT_EQ(r, (PixelRect{42, 0, 21, 20}));
  const DepthFrame m = apply_mask(constant_frame(63, 20, 2.0f), r);
  std::size_t zeroed = 0;
  for (float d : m.depth) zeroed += d == 0.0f;
  EXPECT_EQ(zeroed, 21u * 20u);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 42; ++x) EXPECT_EQ(m.at(x, y), 2.0f);
  }
}

TEST(ApplyMask, IsIdempotent) {
  const DepthFrame f = render_depth(room({Pedestrian{1, {5.0, 5.0}, {0, 0}, 0.3, 1.7}}), facing_wall());
  const PixelRect r{5, 3, 9, 11};
  EXPECT_EQ(apply_mask(apply_mask(f, r), r), apply_mask(f, r));
}

TEST(ApplyMask, OutOfBoundsRectIsADomainError) {
  EXPECT_THROW(apply_mask(constant_frame(10, 8, 1.0f), {5, 0, 6, 8}), DomainError);
  EXPECT_THROW(apply_mask(constant_frame(10, 8, 1.0f), {-1, 0, 2, 2}), DomainError);
}

TEST(Downsample, BoxAverages) {
  DepthFrame f = constant_frame(4, 2, 0.0f);
  f.depth = {1, 2, 3, 4, 5, 6, 7, 8};
  const DepthFrame d = downsample(f, 2);
  ASSERT_EQ(d.width, 2);
  ASSERT_EQ(d.height, 1);
  EXPECT_FLOAT_EQ(d.depth[0], 3.5f);
  EXPECT_FLOAT_EQ(d.depth[1], 5.5f);
}

TEST(WritePgm, HeaderAndQuantization) {
  testing::TempDir dir;
  DepthFrame a = constant_frame(3, 2, 0.1f), b = constant_frame(2, 2, 12.0f);
  const DepthFrame frames[] = {a, b};
  write_pgm(dir / "x.pgm", frames, 0.1, 12.0);
  const std::string data = testing::slurp(dir / "x.pgm");
  const std::string header = "P5\n5 2\n65535\n";
  ASSERT_EQ(data.substr(0, header.size()), header);
  ASSERT_EQ(data.size(), header.size() + 5 * 2 * 2);
  // Big-endian 16-bit samples: near clip -> 0, far clip -> 65535.
  const auto px = [&](int i) {
    return (static_cast<unsigned char>(data[header.size() + 2 * i]) << 8) |
           static_cast<unsigned char>(data[header.size() + 2 * i + 1]);
  };
  EXPECT_EQ(px(0), 0);
  EXPECT_EQ(px(3), 65535);
}

}  // namespace
}  // namespace visionrf
