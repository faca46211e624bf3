// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "test_support.hpp"
#include "visionrf/error.hpp"
#include "visionrf/nn/adam.hpp"
#include "visionrf/nn/checkpoint.hpp"
#include "visionrf/nn/gradcheck.hpp"
#include "visionrf/nn/network.hpp"

namespace visionrf::nn {
namespace {

NetworkSpec single(std::vector<int> shape, std::vector<Layer> layers, int steps = 1) {
  NetworkSpec s;
  s.inputs = {InputSpec{"x", std::move(shape), steps}};
  s.branches = {Branch{0, std::move(layers)}};
  return s;
}

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& gen) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.values()) v = u(gen);
  return t;
}

TEST(Forward, DenseScalar) {
  const NetworkSpec s = single({1}, {Dense{1, 1}});
  const Params p{Tensor({1, 1}, {2.0}), Tensor({1}, {0.0})};
  const Tensor y = predict(s, p, {Tensor({1, 1}, {3.0})});
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 1}));
  EXPECT_EQ(y[0], 6.0);
}

TEST(Forward, OneByOneConvIsIdentity) {
  const NetworkSpec s = single({1, 5, 4}, {Conv2D{1, 1, 1, 1}});
  const Params p{Tensor({1, 1, 1, 1}, {1.0}), Tensor({1}, {0.0})};
  std::mt19937_64 gen(1);
  const Tensor x = random_tensor({2, 1, 5, 4}, gen);
  EXPECT_EQ(predict(s, p, {x}), x);
}

TEST(Forward, HandConvolution) {
  const NetworkSpec s = single({1, 2, 2}, {Conv2D{1, 1, 2, 1}});
  const Params p{Tensor({1, 1, 2, 2}, {1, 0, 0, 1}), Tensor({1}, {0.0})};
  const Tensor y = predict(s, p, {Tensor({1, 1, 2, 2}, {1, 2, 3, 4})});
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 5.0);
}

// Direct loop convolution, written independently of the library's im2col path.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  const int oh = (h - k) / stride + 1, ow = (wd - k) / stride + 1;
  Tensor y({n, co, oh, ow});
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b[static_cast<std::size_t>(o)];
          for (int c = 0; c < ci; ++c)
            for (int a = 0; a < k; ++a)
              for (int d = 0; d < k; ++d)
                acc += w[static_cast<std::size_t>(((o * ci + c) * k + a) * k + d)] *
                       x[static_cast<std::size_t>(((s * ci + c) * h + i * stride + a) * wd + j * stride + d)];
          y[static_cast<std::size_t>(((s * co + o) * oh + i) * ow + j)] = acc;
        }
  return y;
}

TEST(ForwardProperty, ConvMatchesDirectLoops) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int ci = 1 + trial % 3, co = 1 + trial % 4, k = 1 + trial % 4, stride = 1 + trial % 2;
    const int h = k + 3 + trial % 5, w = k + 2 + trial % 6;
    const NetworkSpec s = single({ci, h, w}, {Conv2D{ci, co, k, stride}});
    const Params p{random_tensor({co, ci, k, k}, gen), random_tensor({co}, gen)};
    const Tensor x = random_tensor({2, ci, h, w}, gen);
    const Tensor got = predict(s, p, {x});
    const Tensor want = conv_oracle(x, p[0], p[1], stride);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Forward, MaxPoolDropsRaggedEdge) {
  const NetworkSpec s = single({1, 3, 5}, {MaxPool{2}});
  Tensor x({1, 1, 3, 5}, {1, 5, 2, 0, 9,  //
                          3, 4, 8, 1, 9,  //
                          9, 9, 9, 9, 9});
  const Tensor y = predict(s, Params{}, {x});
  EXPECT_EQ(y.shape(), (std::vector<int>{1, 1, 1, 2}));
  EXPECT_EQ(y[0], 5.0);
  EXPECT_EQ(y[1], 8.0);
}

TEST(Forward, UpsampleAndReshape) {
  const NetworkSpec s = single({4}, {Reshape{1, 2, 2}, NearestUpsample{2}});
  const Tensor y = predict(s, Params{}, {Tensor({1, 4}, {1, 2, 3, 4})});
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 1, 4, 4}));
  const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), want);
}

TEST(Forward, ConcatOrdersBranches) {
  NetworkSpec s;
  s.inputs = {InputSpec{"a", {2}}, InputSpec{"b", {1}}};
  s.branches = {Branch{0, {}}, Branch{1, {}}};
  s.trunk = {Concat{{1, 0}}};
  const Tensor y = predict(s, Params{}, {Tensor({1, 2}, {1, 2}), Tensor({1, 1}, {3})});
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{3, 1, 2}));
}

TEST(Forward, ShapeMismatchNamesTheLayer) {
  const NetworkSpec s = single({3}, {Dense{3, 4}, ReLU{}, Dense{5, 1}});
  try {
    infer_output_shape(s);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
  }
  const NetworkSpec ok = single({3}, {Dense{3, 1}});
  Rng rng(1);
  EXPECT_THROW(predict(ok, init_params(ok, rng), {Tensor({1, 4})}), ShapeError);
}

TEST(Forward, NonFiniteOutputIsANumericError) {
  const NetworkSpec s = single({1}, {Dense{1, 1}});
  const Params p{Tensor({1, 1}, {1.0}), Tensor({1}, {0.0})};
  EXPECT_THROW(predict(s, p, {Tensor({1, 1}, {std::numeric_limits<double>::infinity()})}), NumericError);
}

TEST(ForwardProperty, BitwiseDeterministic) {
  const NetworkSpec s = single({1, 12, 10}, {Conv2D{1, 3, 3, 2}, ReLU{}, Flatten{}, Dense{60, 4}, Tanh{}, RNNCell{4, 5}},
                               6);
  Rng rng(4);
  const Params p = init_params(s, rng);
  std::mt19937_64 gen(5);
  const Tensor x = random_tensor({3, 6, 1, 12, 10}, gen);
  const Tensor a = predict(s, p, {x});
  const Tensor b = predict(s, p, {x});
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
}

TEST(Backward, DenseHandChainRule) {
  const NetworkSpec s = single({1}, {Dense{1, 1}});
  const Params p{Tensor({1, 1}, {2.0}), Tensor({1}, {0.0})};
  const ForwardResult f = forward(s, p, {Tensor({1, 1}, {3.0})});
  // loss = 0.5 y^2, so dL/dy = y.
  const Gradients g = backward(s, p, f.cache, f.output);
  EXPECT_DOUBLE_EQ(g.params[0][0], 18.0);
  EXPECT_DOUBLE_EQ(g.params[1][0], 6.0);
  EXPECT_DOUBLE_EQ(g.inputs[0][0], 12.0);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const NetworkSpec s = single({1, 10, 10}, {Conv2D{1, 2, 3, 1}, MaxPool{2}, Tanh{}, Flatten{}, Dense{32, 3}, RNNCell{3, 4}},
                               3);
  Rng rng(6);
  const Params p = init_params(s, rng);
  std::mt19937_64 gen(7);
  const ForwardResult f = forward(s, p, {random_tensor({2, 3, 1, 10, 10}, gen)});
  const Gradients g = backward(s, p, f.cache, Tensor(f.output.shape(), 0.0));
  for (const auto& t : g.params)
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.inputs[0].values()) EXPECT_EQ(v, 0.0);
}

// Central differences computed here rather than through the library's checker.
double fd_oracle_max_error(const NetworkSpec& s, Params p, std::vector<Tensor> x, std::mt19937_64& gen) {
  const ForwardResult f = forward(s, p, x);
  const Tensor w = random_tensor(f.output.shape(), gen);
  const Gradients g = backward(s, p, f.cache, w);
  auto loss = [&](const Params& pp, const std::vector<Tensor>& xx) {
    const Tensor y = predict(s, pp, xx);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += w[i] * y[i];
    return acc;
  };
  const double h = 1e-5;
  double worst = 0.0;
  auto compare = [&](double analytic, double numeric) {
    worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
  };
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      const double keep = p[t][i];
      p[t][i] = keep + h;
      const double up = loss(p, x);
      p[t][i] = keep - h;
      const double down = loss(p, x);
      p[t][i] = keep;
      compare(g.params[t][i], (up - down) / (2 * h));
    }
  }
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (std::size_t i = 0; i < x[t].size(); ++i) {
      const double keep = x[t][i];
      x[t][i] = keep + h;
      const double up = loss(p, x);
      x[t][i] = keep - h;
      const double down = loss(p, x);
      x[t][i] = keep;
      compare(g.inputs[t][i], (up - down) / (2 * h));
    }
  }
  return worst;
}

TEST(BackwardProperty, MatchesFiniteDifferencesForEveryLayer) {
  std::mt19937_64 gen(21);
  struct Case {
    NetworkSpec spec;
    std::vector<int> input;
  };
  const std::vector<Case> cases{
      {single({4}, {Dense{4, 3}}), {2, 4}},
      {single({2, 7, 6}, {Conv2D{2, 3, 3, 2}}), {2, 2, 7, 6}},
      {single({1, 6, 6}, {MaxPool{2}}), {2, 1, 6, 6}},
      {single({5}, {ReLU{}}), {3, 5}},
      {single({5}, {Tanh{}}), {3, 5}},
      {single({3}, {RNNCell{3, 4}}, 5), {2, 5, 3}},
      {single({2, 3, 3}, {Flatten{}, Dense{18, 2}}), {2, 2, 3, 3}},
      {single({6}, {Reshape{1, 2, 3}, NearestUpsample{2}, Conv2D{1, 1, 2, 1}}), {2, 6}},
  };
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(static_cast<std::uint64_t>(100 * c + trial));
      const Params p = init_params(cases[c].spec, rng);
      // Keep ReLU and max-pool inputs away from their kinks.
      Tensor x = random_tensor(cases[c].input, gen);
      for (double& v : x.values()) v += v >= 0 ? 0.05 : -0.05;
      EXPECT_LT(fd_oracle_max_error(cases[c].spec, p, {x}, gen), 1e-4) << "case " << c << " trial " << trial;
    }
  }
}

TEST(BackwardProperty, MultiBranchConcat) {
  NetworkSpec s;
  s.inputs = {InputSpec{"img", {1, 6, 6}, 3}, InputSpec{"rss", {2}, 3}};
  s.branches = {Branch{0, {Conv2D{1, 2, 3, 1}, Tanh{}, Flatten{}, Dense{32, 3}}}, Branch{1, {Dense{2, 2}}}};
  s.trunk = {Concat{{0, 1}}, RNNCell{5, 4}, Dense{4, 1}};
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const Params p = init_params(s, rng);
    EXPECT_LT(fd_oracle_max_error(s, p, {random_tensor({2, 3, 1, 6, 6}, gen), random_tensor({2, 3, 2}, gen)}, gen),
              1e-4);
  }
}

TEST(Gradcheck, EveryLayerBelowTolerance) {
  const auto rows = run_gradcheck();
  EXPECT_GE(rows.size(), 9u);
  for (const auto& r : rows) {
    EXPECT_GE(r.instances, 20) << r.layer;
    EXPECT_GT(r.checked, 0u) << r.layer;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.layer;
  }
}

TEST(RnnStep, ZeroCell) {
  const Tensor z({2, 2}, 0.0);
  const Tensor h = rnn_step(z, z, Tensor({2}, 0.0), Tensor({2}, {0.7, -3.0}), Tensor({2}, {0.1, 0.4}));
  EXPECT_EQ(h[0], 0.0);
  EXPECT_EQ(h[1], 0.0);
}

TEST(RnnStep, IdentityRecurrenceIsTanh) {
  const Tensor h = rnn_step(Tensor({2, 2}, 0.0), Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0), Tensor({2}, {5.0, 5.0}),
                            Tensor({2}, {0.01, -0.2}));
  EXPECT_DOUBLE_EQ(h[0], std::tanh(0.01));
  EXPECT_DOUBLE_EQ(h[1], std::tanh(-0.2));
  EXPECT_NEAR(h[0], 0.01, 1e-6);
}

TEST(RnnStep, ScalarCell) {
  const Tensor one({1, 1}, 1.0);
  const Tensor h = rnn_step(one, one, Tensor({1}, 0.0), Tensor({1}, {0.5}), Tensor({1}, {0.25}));
  EXPECT_NEAR(h[0], 0.63514, 1e-5);
}

TEST(RnnStep, ShapeMismatch) {
  EXPECT_THROW(rnn_step(Tensor({2, 3}), Tensor({2, 2}), Tensor({2}), Tensor({2}), Tensor({2})), ShapeError);
}

TEST(Adam, FirstStepClosedForm) {
  Params p{Tensor({1}, {0.5})};
  AdamState st = make_adam_state(p);
  adam_step(p, Params{Tensor({1}, {1.0})}, st);
  EXPECT_NEAR(0.5 - p[0][0], 1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(0.5 - p[0][0], 9.99999e-4, 1e-9);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, ZeroLearningRateStillUpdatesMoments) {
  Params p{Tensor({2}, {1.0, -1.0})};
  AdamState st = make_adam_state(p, AdamConfig{0.0});
  adam_step(p, Params{Tensor({2}, {2.0, 3.0})}, st);
  EXPECT_EQ(p[0][0], 1.0);
  EXPECT_EQ(p[0][1], -1.0);
  EXPECT_NEAR(st.m[0][0], 0.2, 1e-15);
  EXPECT_NEAR(st.v[0][1], 0.009, 1e-15);
}

TEST(Adam, ZeroGradientsLeaveParams) {
  Params p{Tensor({3}, {1.0, 2.0, 3.0})};
  const Params before = p;
  AdamState st = make_adam_state(p);
  adam_step(p, Params{Tensor({3}, 0.0)}, st);
  EXPECT_EQ(p, before);
}

TEST(Adam, ShapeMismatch) {
  Params p{Tensor({3})};
  AdamState st = make_adam_state(p);
  EXPECT_THROW(adam_step(p, Params{Tensor({2})}, st), ShapeError);
}

TEST(Init, GlorotRangeAndZeroBias) {
  const NetworkSpec s = single({1, 8, 8}, {Conv2D{1, 4, 3, 1}, Flatten{}, Dense{144, 10}});
  Rng rng(2);
  const Params p = init_params(s, rng);
  ASSERT_EQ(p.size(), 4u);
  const double conv_limit = std::sqrt(6.0 / (9.0 + 36.0)), dense_limit = std::sqrt(6.0 / (144.0 + 10.0));
  for (double v : p[0].values()) EXPECT_LE(std::abs(v), conv_limit);
  for (double v : p[2].values()) EXPECT_LE(std::abs(v), dense_limit);
  for (double v : p[1].values()) EXPECT_EQ(v, 0.0);
  for (double v : p[3].values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(param_count(s), 4u * 9 + 4 + 144u * 10 + 10);
  Rng again(2);
  EXPECT_EQ(init_params(s, again), p);
}

TEST(Mse, ValueAndGradient) {
  const LossResult r = mse_loss(Tensor({2, 1}, {1.0, 3.0}), Tensor({2, 1}, {0.0, 1.0}));
  EXPECT_DOUBLE_EQ(r.loss, 2.5);
  EXPECT_DOUBLE_EQ(r.grad[0], 1.0);
  EXPECT_DOUBLE_EQ(r.grad[1], 2.0);
}

TEST(Overfit, FourExamplesBelowOneMilli) {
  const NetworkSpec s = single({2}, {Dense{2, 8}, Tanh{}, Dense{8, 1}});
  Rng rng(1);
  Params p = init_params(s, rng);
  const Tensor x({4, 2}, {0, 0, 0, 1, 1, 0, 1, 1});
  const Tensor y({4, 1}, {0.1, 0.9, 0.9, 0.1});
  AdamState st = make_adam_state(p);
  double loss = 1.0;
  for (int step = 0; step < 5000 && loss >= 1e-3; ++step) {
    const ForwardResult f = forward(s, p, {x});
    const LossResult l = mse_loss(f.output, y);
    loss = l.loss;
    adam_step(p, backward(s, p, f.cache, l.grad, {false}).params, st);
  }
  EXPECT_LT(loss, 1e-3);
}

TEST(Checkpoint, RoundTrip) {
  NetworkSpec s;
  s.inputs = {InputSpec{"img", {1, 8, 8}, 2}, InputSpec{"rss", {1}, 2}};
  s.branches = {Branch{0, {Conv2D{1, 2, 3, 2}, ReLU{}, MaxPool{1}, Flatten{}}}, Branch{1, {}}};
  s.trunk = {Concat{{0, 1}}, RNNCell{19, 3}, Dense{3, 12}, Tanh{}, Reshape{3, 2, 2}, NearestUpsample{2}};
  Rng rng(9);
  Checkpoint c{s, init_params(s, rng), {{"lr", 0.001}, {"mean", -71.25}}, {{"model", "test"}}, 99, 1234};
  testing::TempDir dir;
  save_checkpoint(dir / "m", c);
  const Checkpoint back = load_checkpoint(dir / "m");
  EXPECT_EQ(back.spec, c.spec);
  EXPECT_EQ(back.params, c.params);
  EXPECT_EQ(back.hyperparameters, c.hyperparameters);
  EXPECT_EQ(back.tags, c.tags);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.step, 1234);
  EXPECT_EQ(std::filesystem::file_size(dir / "m" / "params.bin"), param_count(s) * 8);
}

TEST(Checkpoint, TruncatedParamsAreRejected) {
  const NetworkSpec s = single({3}, {Dense{3, 2}});
  Rng rng(1);
  testing::TempDir dir;
  save_checkpoint(dir / "m", Checkpoint{s, init_params(s, rng), {}, {}, 0, 0});
  std::filesystem::resize_file(dir / "m" / "params.bin", 8);
  EXPECT_THROW(load_checkpoint(dir / "m"), TruncatedFileError);
}

}  // namespace
}  // namespace visionrf::nn
