// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "visionrf/seed.hpp"

namespace visionrf::nn {
namespace {

double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

// Inputs are kept away from 0 so ReLU kinks and pooling ties are not straddled by the step.
Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::vector<int> batched(int n, const InputSpec& in) {
  std::vector<int> s;
  s.reserve(in.shape.size() + 2);
  s.push_back(n);
  if (in.steps > 1) s.push_back(in.steps);
  for (int d : in.shape) s.push_back(d);
  return s;
}

struct Case {
  std::string name;
  std::function<NetworkSpec(Rng&)> make;
};

std::vector<Case> cases() {
  return {
      {"Dense",
       [](Rng& r) {
         const int a = pick(r, 1, 6), b = pick(r, 1, 6);
         return NetworkSpec{{{"x", {a}, 1}}, {{0, {Dense{a, b}}}}, {}};
       }},
      {"Conv2D",
       [](Rng& r) {
         const int c = pick(r, 1, 3), o = pick(r, 1, 3), k = pick(r, 1, 3), s = pick(r, 1, 2);
         const int h = k + pick(r, 0, 4), w = k + pick(r, 0, 4);
         return NetworkSpec{{{"x", {c, h, w}, 1}}, {{0, {Conv2D{c, o, k, s}}}}, {}};
       }},
      {"MaxPool",
       [](Rng& r) {
         const int c = pick(r, 1, 3), k = pick(r, 1, 3);
         const int h = k * pick(r, 1, 3) + pick(r, 0, k - 1), w = k * pick(r, 1, 3) + pick(r, 0, k - 1);
         return NetworkSpec{{{"x", {c, h, w}, 1}}, {{0, {MaxPool{k}}}}, {}};
       }},
      {"ReLU",
       [](Rng& r) {
         const int a = pick(r, 1, 8);
         return NetworkSpec{{{"x", {a}, 1}}, {{0, {ReLU{}}}}, {}};
       }},
      {"Tanh",
       [](Rng& r) {
         const int a = pick(r, 1, 8);
         return NetworkSpec{{{"x", {a}, 1}}, {{0, {Tanh{}}}}, {}};
       }},
      {"RNNCell",
       [](Rng& r) {
         const int d = pick(r, 1, 4), h = pick(r, 1, 5), t = pick(r, 1, 4);
         return NetworkSpec{{{"x", {d}, t}}, {{0, {RNNCell{d, h}}}}, {}};
       }},
      {"Concat",
       [](Rng& r) {
         const int a = pick(r, 1, 4), b = pick(r, 1, 4), c = pick(r, 1, 4), d = pick(r, 1, 4);
         const int o = pick(r, 1, 3);
         return NetworkSpec{{{"a", {a}, 1}, {"b", {b}, 1}},
                            {{0, {Dense{a, c}}}, {1, {Dense{b, d}}}},
                            {Concat{{1, 0}}, Dense{c + d, o}}};
       }},
      {"Flatten",
       [](Rng& r) {
         const int c = pick(r, 1, 3), h = pick(r, 1, 3), w = pick(r, 1, 3), o = pick(r, 1, 3);
         return NetworkSpec{{{"x", {c, h, w}, 1}}, {{0, {Flatten{}, Dense{c * h * w, o}}}}, {}};
       }},
      {"Reshape",
       [](Rng& r) {
         const int a = pick(r, 1, 4), c = pick(r, 1, 2), h = pick(r, 2, 3), w = pick(r, 2, 3);
         return NetworkSpec{{{"x", {a}, 1}},
                            {{0, {Dense{a, c * h * w}, Reshape{c, h, w}, Conv2D{c, 1, 2, 1}}}},
                            {}};
       }},
      {"NearestUpsample",
       [](Rng& r) {
         const int c = pick(r, 1, 2), h = pick(r, 1, 3), w = pick(r, 1, 3), f = pick(r, 1, 3);
         return NetworkSpec{{{"x", {c, h, w}, 1}}, {{0, {NearestUpsample{f}, Conv2D{c, 1, 1, 1}}}}, {}};
       }},
  };
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

double check_gradients(const NetworkSpec& spec, const Params& params, const std::vector<Tensor>& inputs,
                       const Tensor& weights, double step, std::size_t* checked) {
  const ForwardResult fr = forward(spec, params, inputs);
  const Gradients g = backward(spec, params, fr.cache, weights);
  double worst = 0.0;
  std::size_t count = 0;
  Params p = params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      const double orig = p[i][j];
      p[i][j] = orig + step;
      const double up = weighted_sum(predict(spec, p, inputs), weights);
      p[i][j] = orig - step;
      const double down = weighted_sum(predict(spec, p, inputs), weights);
      p[i][j] = orig;
      worst = std::max(worst, relative_error(g.params[i][j], (up - down) / (2.0 * step)));
      ++count;
    }
  }
  std::vector<Tensor> x = inputs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      const double orig = x[i][j];
      x[i][j] = orig + step;
      const double up = weighted_sum(predict(spec, params, x), weights);
      x[i][j] = orig - step;
      const double down = weighted_sum(predict(spec, params, x), weights);
      x[i][j] = orig;
      worst = std::max(worst, relative_error(g.inputs[i][j], (up - down) / (2.0 * step)));
      ++count;
    }
  }
  if (checked) *checked += count;
  return worst;
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options) {
  std::vector<GradcheckRow> rows;
  std::uint64_t case_index = 0;
  for (const auto& c : cases()) {
    Rng rng(derive_seed(options.seed, case_index++));
    GradcheckRow row{c.name, options.instances, 0, 0.0};
    for (int k = 0; k < options.instances; ++k) {
      const NetworkSpec spec = c.make(rng);
      Params params = init_params(spec, rng);
      for (auto& t : params) {
        std::normal_distribution<double> jitter(0.0, 0.1);
        for (double& v : t.values()) v += jitter(rng);  // non-zero biases
      }
      const int n = pick(rng, 1, 3);
      std::vector<Tensor> inputs;
      for (const auto& in : spec.inputs) inputs.push_back(random_tensor(batched(n, in), rng));
      const Tensor y = predict(spec, params, inputs);
      const Tensor w = random_tensor(y.shape(), rng);
      row.max_rel_error =
          std::max(row.max_rel_error, check_gradients(spec, params, inputs, w, options.step, &row.checked));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace visionrf::nn
