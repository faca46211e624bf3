// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <variant>

#include "test_support.hpp"
#include "visionrf/error.hpp"
#include "visionrf/inpaint.hpp"

namespace visionrf {
namespace {

int concat_width(const nn::NetworkSpec& s) {
  // Sum of branch output widths feeding the trunk's Concat.
  int total = 0;
  for (const auto& b : s.branches) {
    for (auto it = b.layers.rbegin(); it != b.layers.rend(); ++it) {
      if (const auto* d = std::get_if<nn::Dense>(&*it)) {
        total += d->out;
        break;
      }
    }
  }
  return total;
}

TEST(BuildInpainter, RfOnlyHasOneBranch) {
  const auto s = build_inpainter(InpaintVariant::kRfOnly, InpaintDims{});
  EXPECT_EQ(s.branches.size(), 1u);
  EXPECT_EQ(s.inputs.size(), 1u);
  EXPECT_EQ(concat_width(s), 64);
}

TEST(BuildInpainter, LatentIsSumOfBranchWidths) {
  InpaintDims d;
  const auto s = build_inpainter(InpaintVariant::kImgRf, d);
  ASSERT_EQ(s.branches.size(), 2u);
  EXPECT_EQ(concat_width(s), 128);
  d.image_latent = 40;
  d.rss_latent = 24;
  const auto t = build_inpainter(InpaintVariant::kImgRf, d);
  EXPECT_EQ(concat_width(t), 64);
  const auto* first = std::get_if<nn::Dense>(&t.trunk.at(1));
  ASSERT_NE(first, nullptr);
  EXPECT_EQ(first->in, 64);
}

TEST(BuildInpainter, OutputMatchesFrameShape) {
  const auto s = build_inpainter(InpaintVariant::kImgRf, InpaintDims{});
  EXPECT_EQ(nn::infer_output_shape(s), (std::vector<int>{1, 48, 64}));
  EXPECT_EQ(s.inputs[0].shape, (std::vector<int>{2, 48, 64}));
  EXPECT_EQ(s.inputs[1].shape, (std::vector<int>{32}));
  InpaintDims small;
  small.width = 32;
  small.height = 24;
  EXPECT_EQ(nn::infer_output_shape(build_inpainter(InpaintVariant::kRfOnly, small)), (std::vector<int>{1, 24, 32}));
}

TEST(DecoderGrid, InvertsUpsampleConvStages) {
  // Forward: g -> 2g - 3 (k4) -> 2(2g - 3) - 2 (k3).
  for (int h : {24, 48, 96}) {
    const DecoderGrid g = decoder_grid(h, h);
    EXPECT_EQ(2 * (2 * g.height - 3) - 2, h);
  }
  const DecoderGrid g = decoder_grid(48, 64);
  EXPECT_EQ(g.height, 14);
  EXPECT_EQ(g.width, 18);
  EXPECT_THROW(decoder_grid(25, 64), DomainError);
}

TEST(InpaintVariantNames, RoundTrip) {
  for (auto v : {InpaintVariant::kImgRf, InpaintVariant::kRfOnly}) EXPECT_EQ(parse_inpaint_variant(inpaint_variant_name(v)), v);
  EXPECT_THROW(parse_inpaint_variant("IMG"), ConfigError);
  EXPECT_EQ(parse_mask_mode("random"), MaskMode::kRandom);
  EXPECT_THROW(parse_mask_mode("left_half"), ConfigError);
}

nn::Tensor tensor_of(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return nn::Tensor({1, 1, 1, n}, std::move(v));
}

TEST(WeightedMse, LambdaZeroIsUnmaskedMseOnly) {
  const nn::Tensor pred = tensor_of({1.0, 2.0, 3.0, 4.0});
  const nn::Tensor target = tensor_of({0.0, 0.0, 0.0, 0.0});
  const nn::Tensor mask = tensor_of({1.0, 1.0, 0.0, 0.0});
  const WeightedLoss l = weighted_mse(pred, target, mask, 0.0);
  EXPECT_DOUBLE_EQ(l.loss, (9.0 + 16.0) / 2.0);
  EXPECT_EQ(l.grad[0], 0.0);
  EXPECT_EQ(l.grad[1], 0.0);
  const WeightedLoss one = weighted_mse(pred, target, mask, 1.0);
  EXPECT_DOUBLE_EQ(one.loss, (1.0 + 4.0) / 2.0);
  const WeightedLoss mix = weighted_mse(pred, target, mask, 0.8);
  EXPECT_DOUBLE_EQ(mix.loss, 0.8 * 2.5 + 0.2 * 12.5);
}

TEST(WeightedMse, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> p(12), t(12), m(12);
  for (int i = 0; i < 12; ++i) {
    p[static_cast<std::size_t>(i)] = u(gen);
    t[static_cast<std::size_t>(i)] = u(gen);
    m[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1.0 : 0.0;
  }
  const nn::Tensor target = tensor_of(t), mask = tensor_of(m);
  const WeightedLoss l = weighted_mse(tensor_of(p), target, mask, 0.7);
  for (std::size_t i = 0; i < 12; ++i) {
    auto q = p;
    q[i] += 1e-6;
    const double up = weighted_mse(tensor_of(q), target, mask, 0.7).loss;
    q[i] -= 2e-6;
    const double down = weighted_mse(tensor_of(q), target, mask, 0.7).loss;
    EXPECT_NEAR(l.grad[i], (up - down) / 2e-6, 1e-8);
  }
}

// Small-frame episodes shared by the sample and training tests.
class InpaintData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config = new ScenarioConfig(reference_config());
    config->world.duration = 4.0;
    config->camera.width = 32;
    config->camera.height = 24;
    config->pedestrians.count = 3;
    episode = new Episode(generate_episode(*config, 8));
  }
  static void TearDownTestSuite() {
    delete episode;
    delete config;
  }
  static InpaintDims dims() { return inpaint_dims(*config); }
  static ScenarioConfig* config;
  static Episode* episode;
};
ScenarioConfig* InpaintData::config = nullptr;
Episode* InpaintData::episode = nullptr;

TEST_F(InpaintData, SamplesCarryStridedRssOldestFirst) {
  Rng rng(1);
  const auto s = make_inpaint_samples(*episode, 0, 32, 2, MaskMode::kRightThird, 1, rng, 5);
  const int n = episode->manifest.n_ticks;
  ASSERT_EQ(static_cast<int>(s.size()), n - 62);
  EXPECT_EQ(s.front().tick, 62);
  for (const auto& x : s) {
    ASSERT_EQ(x.rss.size(), 32u);
    for (int k = 0; k < 32; ++k) {
      EXPECT_EQ(x.rss[static_cast<std::size_t>(k)], episode->traces[0].rss_dbm[static_cast<std::size_t>(x.tick - 2 * (31 - k))]);
    }
    EXPECT_EQ(x.truth, &episode->frames[static_cast<std::size_t>(x.tick)]);
    EXPECT_EQ(x.mask, right_third(32, 24));
    EXPECT_EQ(x.episode, 5u);
  }
  EXPECT_EQ(make_inpaint_samples(*episode, 0, 32, 2, MaskMode::kRightThird, 4, rng).size(), (s.size() + 3) / 4);
}

TEST_F(InpaintData, RandomMasksStayInsideFrame) {
  Rng rng(3);
  const auto s = make_inpaint_samples(*episode, 1, 8, 1, MaskMode::kRandom, 1, rng);
  for (const auto& x : s) {
    EXPECT_GE(x.mask.w, 8);
    EXPECT_LE(x.mask.w, 16);
    EXPECT_GE(x.mask.h, 12);
    EXPECT_LE(x.mask.h, 24);
    EXPECT_GE(x.mask.x0, 0);
    EXPECT_LE(x.mask.x0 + x.mask.w, 32);
    EXPECT_LE(x.mask.y0 + x.mask.h, 24);
  }
  const DepthFrame in = masked_input(s[0]);
  std::size_t masked = 0;
  for (auto m : in.mask) masked += m;
  EXPECT_EQ(masked, static_cast<std::size_t>(s[0].mask.w * s[0].mask.h));
}

TEST_F(InpaintData, ZeroStepsReturnsInitialization) {
  Rng rng(1);
  const auto s = make_inpaint_samples(*episode, 0, 32, 2, MaskMode::kRightThird, 8, rng);
  InpaintTrainConfig tc;
  tc.steps = 0;
  const auto r = train_inpainter(s, InpaintVariant::kImgRf, dims(), tc, config->camera, 7);
  Rng init(derive_seed(7, 0));
  EXPECT_EQ(r.model.params, nn::init_params(r.model.spec, init));
  EXPECT_TRUE(r.loss_history.empty());
  EXPECT_THROW(train_inpainter({}, InpaintVariant::kImgRf, dims(), tc, config->camera, 7), DomainError);
}

TEST_F(InpaintData, DeterministicAndCheckpointable) {
  Rng rng(1);
  const auto s = make_inpaint_samples(*episode, 0, 32, 2, MaskMode::kRightThird, 8, rng);
  InpaintTrainConfig tc;
  tc.steps = 10;
  tc.batch = 4;
  const auto a = train_inpainter(s, InpaintVariant::kImgRf, dims(), tc, config->camera, 3);
  const auto b = train_inpainter(s, InpaintVariant::kImgRf, dims(), tc, config->camera, 3);
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(a.loss_history, b.loss_history);
  testing::TempDir dir;
  nn::save_checkpoint(dir / "m", a.model.to_checkpoint());
  const InpaintModel back = InpaintModel::from_checkpoint(nn::load_checkpoint(dir / "m"));
  EXPECT_EQ(back.variant, InpaintVariant::kImgRf);
  const auto r1 = reconstruct_batch(back, s);
  const auto r2 = reconstruct_batch(a.model, s);
  EXPECT_EQ(r1, r2);
}

double full_set_loss(const InpaintModel& m, std::span<const InpaintSample> s, double lambda) {
  std::vector<DepthFrame> masked;
  std::vector<std::vector<double>> rss;
  for (const auto& x : s) {
    masked.push_back(masked_input(x));
    rss.push_back(x.rss);
  }
  const nn::Tensor pred = nn::predict(m.spec, m.params, inpaint_inputs(m, masked, rss));
  nn::Tensor target(pred.shape()), mask(pred.shape());
  const std::size_t px = static_cast<std::size_t>(m.dims.width) * m.dims.height;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t p = 0; p < px; ++p) {
      target[i * px + p] = s[i].truth->depth[p] / m.far_clip;
      mask[i * px + p] = masked[i].mask[p];
    }
  }
  return weighted_mse(pred, target, mask, lambda).loss;
}

TEST_F(InpaintData, OverfitsSixteenSamples) {
  Rng rng(1);
  const auto all = make_inpaint_samples(*episode, 0, 32, 2, MaskMode::kRightThird, 1, rng);
  std::vector<InpaintSample> toy;
  for (std::size_t i = 0; i < 16; ++i) toy.push_back(all[i * all.size() / 16]);
  InpaintTrainConfig tc;
  tc.steps = 0;
  const double initial = full_set_loss(train_inpainter(toy, InpaintVariant::kImgRf, dims(), tc, config->camera, 1).model, toy, tc.lambda);
  tc.steps = 3000;
  const auto r = train_inpainter(toy, InpaintVariant::kImgRf, dims(), tc, config->camera, 1);
  EXPECT_EQ(r.loss_history.size(), 3000u);
  EXPECT_LT(full_set_loss(r.model, toy, tc.lambda), 0.1 * initial);
}

TEST_F(InpaintData, CompositingKeepsUnmaskedPixels) {
  Rng rng(4);
  const auto s = make_inpaint_samples(*episode, 0, 32, 2, MaskMode::kRandom, 16, rng);
  InpaintTrainConfig tc;
  tc.steps = 0;
  const InpaintModel m = train_inpainter(s, InpaintVariant::kImgRf, dims(), tc, config->camera, 2).model;
  for (const auto& x : s) {
    const DepthFrame in = masked_input(x);
    const DepthFrame out = reconstruct(m, in, x.rss);
    ASSERT_EQ(out.mask, in.mask);
    for (std::size_t p = 0; p < in.depth.size(); ++p) {
      if (!in.mask[p]) {
        EXPECT_EQ(out.depth[p], in.depth[p]);
      } else {
        EXPECT_GE(out.depth[p], config->camera.near_clip);
        EXPECT_LE(out.depth[p], config->camera.far_clip);
      }
    }
    EXPECT_EQ(reconstruct(m, in, x.rss), out);
  }
  const DepthFrame empty = apply_mask(*s[0].truth, {0, 0, 0, 0});
  EXPECT_EQ(reconstruct(m, empty, s[0].rss), empty);
  EXPECT_THROW(reconstruct(m, downsample(empty, 2), s[0].rss), ShapeError);
}

TEST_F(InpaintData, BackgroundFrameIsEmptyRoomRender) {
  const DepthFrame bg = background_frame(*config);
  ScenarioConfig empty = *config;
  empty.pedestrians.count = 0;
  Rng rng(1);
  EXPECT_EQ(bg.depth, render_depth(initial_scene(empty, rng), config->camera).depth);
  const DepthFrame in = apply_mask(episode->frames[10], right_third(32, 24));
  const DepthFrame filled = background_fill(in, bg);
  for (std::size_t p = 0; p < in.depth.size(); ++p) EXPECT_EQ(filled.depth[p], in.mask[p] ? bg.depth[p] : in.depth[p]);
}

DepthFrame flat(float v) {
  DepthFrame f;
  f.width = 4;
  f.height = 2;
  f.depth.assign(8, v);
  return f;
}

TEST(InpaintMetrics, IdentityAndHalfMeterOffset) {
  const DepthFrame bg = flat(10.0f);
  DepthFrame truth = flat(10.0f);
  truth.depth[3] = 4.7f;
  const std::vector<std::uint8_t> mask{0, 0, 1, 1, 0, 0, 1, 1};
  const InpaintMetrics same = inpaint_metrics(truth, truth, mask, bg, 1.0);
  EXPECT_EQ(same.masked_mse, 0.0);
  EXPECT_EQ(same.presence_pred, same.presence_true);
  DepthFrame shifted = truth;
  for (float& d : shifted.depth) d += 0.5f;
  EXPECT_NEAR(inpaint_metrics(shifted, truth, mask, bg, 1.0).masked_mse, 0.25, 1e-12);
}

TEST(InpaintMetrics, PresenceFromDepthRule) {
  const DepthFrame bg = flat(10.0f);
  DepthFrame truth = flat(10.0f);
  truth.depth[3] = 4.7f;
  const std::vector<std::uint8_t> mask{0, 0, 1, 1, 0, 0, 1, 1};
  const InpaintMetrics m = inpaint_metrics(bg, truth, mask, bg, 1.0);
  EXPECT_TRUE(m.presence_true);
  EXPECT_FALSE(m.presence_pred);
  // Outside the mask does not count.
  const std::vector<std::uint8_t> left{1, 1, 0, 0, 1, 1, 0, 0};
  EXPECT_FALSE(inpaint_metrics(truth, truth, left, bg, 1.0).presence_true);
  EXPECT_THROW(inpaint_metrics(truth, truth, std::vector<std::uint8_t>(8, 0), bg, 1.0), DomainError);
}

TEST(InpaintMetrics, IgnoresUnmaskedReconstruction) {
  const DepthFrame bg = flat(10.0f);
  DepthFrame a = flat(9.0f), b = flat(9.0f);
  b.depth[0] = 0.2f;
  const std::vector<std::uint8_t> mask{0, 1, 1, 1, 1, 1, 1, 1};
  const InpaintMetrics ma = inpaint_metrics(a, bg, mask, bg, 1.0), mb = inpaint_metrics(b, bg, mask, bg, 1.0);
  EXPECT_EQ(ma.masked_mse, mb.masked_mse);
  EXPECT_EQ(ma.presence_pred, mb.presence_pred);
}

TEST(BalancedAccuracy, MeanOfClassRates) {
  std::vector<InpaintMetrics> m{{0, true, true}, {0, false, true}, {0, false, false}, {0, false, false},
                                {0, true, false}, {0, false, false}};
  // TPR 1/2, TNR 3/4.
  EXPECT_DOUBLE_EQ(balanced_accuracy(m), 0.625);
  m = {{0, true, true}, {0, true, true}};
  EXPECT_DOUBLE_EQ(balanced_accuracy(m), 1.0);
}

TEST(InpaintReport, CsvAndTriptych) {
  testing::TempDir dir;
  const std::vector<InpaintReportRow> rows{{0, {0.5, true, false}}};
  write_inpaint_report(dir / "r.csv", rows);
  const std::string text = testing::slurp(dir / "r.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "sample_id,masked_mse,presence_pred,presence_true");
  CameraModel cam;
  cam.width = 4;
  cam.height = 2;
  write_triptych(dir / "t.pgm", flat(3.0f), flat(0.0f), flat(5.0f), cam);
  EXPECT_EQ(testing::slurp(dir / "t.pgm").substr(0, 10), "P5\n12 2\n65");
}

}  // namespace
}  // namespace visionrf
