// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include <gtest/gtest.h>

#include <cmath>
#include <variant>

#include "test_support.hpp"
#include "visionrf/error.hpp"
#include "visionrf/predictor.hpp"

namespace visionrf {
namespace {

int count_layers_of(const nn::NetworkSpec& s, auto pred) {
  int n = 0;
  for (const auto& b : s.branches)
    for (const auto& l : b.layers) n += pred(l);
  for (const auto& l : s.trunk) n += pred(l);
  return n;
}

const nn::RNNCell& rnn_of(const nn::NetworkSpec& s) {
  for (const auto& l : s.trunk)
    if (const auto* r = std::get_if<nn::RNNCell>(&l)) return *r;
  for (const auto& b : s.branches)
    for (const auto& l : b.layers)
      if (const auto* r = std::get_if<nn::RNNCell>(&l)) return *r;
  throw std::runtime_error("no RNNCell");
}

TEST(BuildPredictor, RfHasNoConvolution) {
  const auto s = build_predictor(PredictorVariant::kRf, PredictorDims{});
  EXPECT_EQ(count_layers_of(s, [](const nn::Layer& l) { return std::holds_alternative<nn::Conv2D>(l); }), 0);
  EXPECT_EQ(rnn_of(s).in, 1);
  ASSERT_EQ(s.inputs.size(), 1u);
}

TEST(BuildPredictor, ImgRfRnnWidthIsFeaturesPlusOne) {
  PredictorDims d;
  for (int fw : {32, 7}) {
    d.feature_width = fw;
    EXPECT_EQ(rnn_of(build_predictor(PredictorVariant::kImgRf, d)).in, fw + 1);
    EXPECT_EQ(rnn_of(build_predictor(PredictorVariant::kImg, d)).in, fw);
  }
}

TEST(BuildPredictor, DefaultParameterCount) {
  // Conv 1->8 k4 s2 on 48x64 gives 23x31; conv 8->16 k4 s2 gives 10x14.
  const std::size_t conv1 = 8 * 1 * 4 * 4 + 8;
  const std::size_t conv2 = 16 * 8 * 4 * 4 + 16;
  const std::size_t dense = 16 * 10 * 14 * 32 + 32;
  const std::size_t rnn = 64 * 33 + 64 * 64 + 64;
  const std::size_t head = 64 + 1;
  const auto s = build_predictor(PredictorVariant::kImgRf, PredictorDims{});
  EXPECT_EQ(nn::param_count(s), conv1 + conv2 + dense + rnn + head);
  EXPECT_EQ(nn::param_count(s), 80249u);
  EXPECT_EQ(nn::infer_output_shape(s), (std::vector<int>{1}));
}

TEST(BuildPredictor, RejectsInvalidDims) {
  PredictorDims d;
  d.t_past = 0;
  EXPECT_ANY_THROW(build_predictor(PredictorVariant::kImg, d));
  d = {};
  d.width = 6;
  EXPECT_ANY_THROW(build_predictor(PredictorVariant::kImg, d));
}

TEST(PredictorVariantNames, RoundTrip) {
  for (auto v : {PredictorVariant::kImg, PredictorVariant::kRf, PredictorVariant::kImgRf}) {
    EXPECT_EQ(parse_predictor_variant(variant_name(v)), v);
  }
  EXPECT_EQ(variant_name(PredictorVariant::kImgRf), "IMG_RF");
  EXPECT_THROW(parse_predictor_variant("LIDAR"), ConfigError);
}

TEST(Standardizer, RoundTripProperty) {
  const Standardizer s{-71.3, 4.2};
  for (double x = -120.0; x < -20.0; x += 0.37) EXPECT_NEAR(s.invert(s.apply(x)), x, 1e-9);
}

// Small episodes shared by the training tests.
class PredictorData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config = new ScenarioConfig(reference_config());
    config->world.duration = 2.0;
    config->camera.width = 32;
    config->camera.height = 24;
    config->predictor.t_past = 4;
    for (std::uint64_t s = 0; s < 2; ++s) episodes->push_back(generate_episode(*config, s + 1));
    for (std::size_t e = 0; e < episodes->size(); ++e) {
      auto w = make_windows((*episodes)[e], 0, 4, 4, 1, e);
      windows->insert(windows->end(), w.begin(), w.end());
    }
  }
  static void TearDownTestSuite() {
    delete config;
    config = nullptr;
    windows->clear();
    episodes->clear();
  }
  static PredictorDims dims() { return predictor_dims(*config); }

  static ScenarioConfig* config;
  static std::vector<Episode>* episodes;
  static std::vector<SampleWindow>* windows;
};
ScenarioConfig* PredictorData::config = nullptr;
std::vector<Episode>* PredictorData::episodes = new std::vector<Episode>;
std::vector<SampleWindow>* PredictorData::windows = new std::vector<SampleWindow>;

TEST_F(PredictorData, ZeroEpochsReturnsInitialization) {
  PredictorTrainConfig tc;
  tc.epochs = 0;
  const auto r = train_predictor(*windows, {}, PredictorVariant::kImgRf, dims(), tc, 12.0, 5);
  Rng rng(derive_seed(5, 0));
  EXPECT_EQ(r.model.params, nn::init_params(r.model.spec, rng));
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.model.step, 0);
}

TEST_F(PredictorData, SameSeedSameCheckpointBytes) {
  PredictorTrainConfig tc;
  tc.epochs = 2;
  tc.steps_per_epoch = 5;
  testing::TempDir dir;
  for (const char* name : {"a", "b"}) {
    const auto r = train_predictor(*windows, *windows, PredictorVariant::kImgRf, dims(), tc, 12.0, 9);
    nn::save_checkpoint(dir / name, r.model.to_checkpoint());
  }
  EXPECT_EQ(testing::slurp(dir / "a" / "params.bin"), testing::slurp(dir / "b" / "params.bin"));
  EXPECT_EQ(testing::slurp(dir / "a" / "manifest.json"), testing::slurp(dir / "b" / "manifest.json"));
  const auto other = train_predictor(*windows, {}, PredictorVariant::kImgRf, dims(), tc, 12.0, 10);
  EXPECT_NE(other.model.params, nn::load_checkpoint(dir / "a").params);
}

TEST_F(PredictorData, CheckpointRoundTripPredictsTheSame) {
  PredictorTrainConfig tc;
  tc.epochs = 1;
  tc.steps_per_epoch = 3;
  const auto r = train_predictor(*windows, {}, PredictorVariant::kImg, dims(), tc, 12.0, 2);
  testing::TempDir dir;
  nn::save_checkpoint(dir / "m", r.model.to_checkpoint());
  const PredictorModel back = PredictorModel::from_checkpoint(nn::load_checkpoint(dir / "m"));
  EXPECT_EQ(back.variant, PredictorVariant::kImg);
  EXPECT_EQ(predict_rss(back, *windows), predict_rss(r.model, *windows));
}

double standardized_mse(const PredictorModel& m, std::span<const SampleWindow> w) {
  const auto pred = predict_rss(m, w);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double e = (pred[i] - w[i].label_rss) / m.rss.std;
    acc += e * e;
  }
  return acc / static_cast<double>(w.size());
}

TEST_F(PredictorData, OverfitsSixteenWindows) {
  std::vector<SampleWindow> toy;
  for (std::size_t i = 0; i < 16; ++i) toy.push_back((*windows)[i * windows->size() / 16]);
  PredictorTrainConfig tc;
  tc.batch = 16;
  tc.epochs = 0;
  const double initial = standardized_mse(train_predictor(toy, {}, PredictorVariant::kImgRf, dims(), tc, 12.0, 3).model, toy);
  tc.epochs = 20;
  tc.steps_per_epoch = 100;
  const auto r = train_predictor(toy, {}, PredictorVariant::kImgRf, dims(), tc, 12.0, 3);
  EXPECT_EQ(r.model.step, 2000);
  EXPECT_LT(standardized_mse(r.model, toy), 0.1 * initial);
}

TEST_F(PredictorData, HistoryHasOneRowPerEpoch) {
  PredictorTrainConfig tc;
  tc.epochs = 3;
  tc.steps_per_epoch = 2;
  const auto r = train_predictor(*windows, *windows, PredictorVariant::kRf, dims(), tc, 12.0, 1);
  ASSERT_EQ(r.history.size(), 3u);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(r.history[static_cast<std::size_t>(e)].epoch, e);
    EXPECT_TRUE(std::isfinite(r.history[static_cast<std::size_t>(e)].val_loss));
  }
  const auto no_val = train_predictor(*windows, {}, PredictorVariant::kRf, dims(), tc, 12.0, 1);
  EXPECT_TRUE(std::isnan(no_val.history[0].val_loss));
}

TEST_F(PredictorData, EmptyTrainingSetIsRejected) {
  EXPECT_THROW(train_predictor({}, {}, PredictorVariant::kRf, dims(), {}, 12.0, 1), DomainError);
}

TEST_F(PredictorData, InputsAreScaledAndStandardized) {
  PredictorTrainConfig tc;
  tc.epochs = 0;
  const auto m = train_predictor(*windows, {}, PredictorVariant::kImgRf, dims(), tc, 12.0, 1).model;
  const std::span<const SampleWindow> two(windows->data(), 2);
  const auto in = predictor_inputs(m, two);
  ASSERT_EQ(in.size(), 2u);
  EXPECT_EQ(in[0].shape(), (std::vector<int>{2, 4, 1, 24, 32}));
  EXPECT_EQ(in[1].shape(), (std::vector<int>{2, 4, 1}));
  EXPECT_DOUBLE_EQ(in[0][0], two[0].past_frames[0]->depth[0] / 12.0);
  EXPECT_DOUBLE_EQ(in[1][3], m.rss.apply(two[0].past_rss[3]));
  EXPECT_EQ(predictor_inputs(train_predictor(*windows, {}, PredictorVariant::kRf, dims(), tc, 12.0, 1).model, two).size(),
            1u);
}

TEST_F(PredictorData, StandardizerUsesLabelMoments) {
  const Standardizer s = fit_standardizer(*windows);
  double mean = 0.0;
  for (const auto& w : *windows) mean += w.label_rss;
  mean /= static_cast<double>(windows->size());
  double var = 0.0;
  for (const auto& w : *windows) var += (w.label_rss - mean) * (w.label_rss - mean);
  EXPECT_NEAR(s.mean, mean, 1e-9);
  EXPECT_NEAR(s.std, std::sqrt(var / static_cast<double>(windows->size())), 1e-9);
}

TEST_F(PredictorData, RmsePerfectAndBiased) {
  std::vector<double> exact, biased;
  for (const auto& w : *windows) {
    exact.push_back(w.label_rss);
    biased.push_back(w.label_rss + 2.0);
  }
  const RmseReport zero = rmse_report(exact, *windows);
  EXPECT_EQ(zero.overall, 0.0);
  const RmseReport two = rmse_report(biased, *windows);
  EXPECT_NEAR(two.overall, 2.0, 1e-12);
  std::size_t sum = 0;
  for (int c = 0; c < 3; ++c) {
    sum += two.count[static_cast<std::size_t>(c)];
    if (two.count[static_cast<std::size_t>(c)] > 0) EXPECT_NEAR(two.rmse[static_cast<std::size_t>(c)], 2.0, 1e-12);
  }
  EXPECT_EQ(sum, windows->size());
  EXPECT_EQ(two.total, windows->size());
}

TEST_F(PredictorData, PersistenceRepeatsLastRss) {
  const auto p = persistence_predictions(*windows);
  for (std::size_t i = 0; i < windows->size(); ++i) EXPECT_EQ(p[i], (*windows)[i].past_rss.back());
}

TEST(RmseReport, EmptyPartitionIsNanAndSizeMismatchThrows) {
  SampleWindow w;
  w.label_rss = -70.0;
  w.label_condition = Condition::kLos;
  const std::vector<SampleWindow> ws{w};
  const std::vector<double> p{-71.0};
  const RmseReport r = rmse_report(p, ws);
  EXPECT_DOUBLE_EQ(r.of(Condition::kLos), 1.0);
  EXPECT_TRUE(std::isnan(r.of(Condition::kNlos)));
  EXPECT_THROW(rmse_report(std::vector<double>{1.0, 2.0}, ws), DomainError);
}

TEST(RmseReport, CsvLayout) {
  RmseReport r;
  r.rmse = {1.5, 2.5, 3.5};
  r.count = {10, 5, 1};
  r.overall = 2.0;
  r.total = 16;
  testing::TempDir dir;
  write_rmse_report(dir / "r.csv", r);
  const std::string text = testing::slurp(dir / "r.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "condition,count,rmse_db");
  EXPECT_NE(text.find("TRANSITION,1,3.5"), std::string::npos) << text;
  EXPECT_NE(text.find("ALL,16,2"), std::string::npos) << text;
}

}  // namespace
}  // namespace visionrf
