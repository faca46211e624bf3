// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "visionrf/nn/tensor.hpp"
#include "visionrf/seed.hpp"

namespace visionrf::nn {

// ---- Layer menu ---------------------------------------------------------------------------

struct Dense {
  int in = 0;
  int out = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};

// Valid padding, square kernel, no dilation.
struct Conv2D {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

// Non-overlapping k x k windows; trailing rows/columns that do not fill a window are dropped.
struct MaxPool {
  int kernel = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct Tanh {
  friend bool operator==(const Tanh&, const Tanh&) = default;
};

enum class CellType { kElman };

// Consumes the whole time axis and emits the final hidden state.
struct RNNCell {
  int in = 0;
  int hidden = 0;
  CellType cell = CellType::kElman;
  friend bool operator==(const RNNCell&, const RNNCell&) = default;
};

// Feature-wise concatenation of branch outputs, in the listed order. Only valid as the
// first trunk layer.
struct Concat {
  std::vector<int> branches;
  friend bool operator==(const Concat&, const Concat&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

// Inverse of Flatten: feature vector -> (channels, height, width).
struct Reshape {
  int channels = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const Reshape&, const Reshape&) = default;
};

struct NearestUpsample {
  int factor = 2;
  friend bool operator==(const NearestUpsample&, const NearestUpsample&) = default;
};

using Layer = std::variant<Dense, Conv2D, MaxPool, ReLU, Tanh, RNNCell, Concat, Flatten, Reshape,
                           NearestUpsample>;

std::string layer_name(const Layer& layer);

// ---- Network spec -------------------------------------------------------------------------

// Per-step feature shape of one network input ({D} or {C, H, W}). With steps > 1 the input
// tensor is [N, steps, ...shape], otherwise [N, ...shape].
struct InputSpec {
  std::string name;
  std::vector<int> shape;
  int steps = 1;
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

// Layers applied to one input. Before an RNNCell every layer is applied per time step.
struct Branch {
  int input = 0;
  std::vector<Layer> layers;
  friend bool operator==(const Branch&, const Branch&) = default;
};

// One or more branches feeding a single trunk (the output head). With several branches the
// trunk must start with a Concat naming every branch exactly once.
//
// Layer indices in errors count branch layers first (branch 0, branch 1, ...) then the trunk.
struct NetworkSpec {
  std::vector<InputSpec> inputs;
  std::vector<Branch> branches;
  std::vector<Layer> trunk;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

using Params = std::vector<Tensor>;

// Validates the spec and returns the per-sample output shape (time axis included when the
// trunk ends before any RNNCell). Throws ShapeError naming the offending layer.
std::vector<int> infer_output_shape(const NetworkSpec& spec);

// Parameter tensors in spec order: Dense -> W[out,in], b[out]; Conv2D -> W[out,in,k,k], b[out];
// RNNCell -> W[h,in], U[h,h], b[h].
std::vector<std::vector<int>> param_shapes(const NetworkSpec& spec);
std::size_t param_count(const NetworkSpec& spec);

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
Params init_params(const NetworkSpec& spec, Rng& rng);

// ---- Forward / backward -------------------------------------------------------------------

struct LayerCache {
  Tensor input;
  Tensor aux;                  // tanh output, RNN hidden states
  std::vector<int> argmax;     // max-pool winners
  int steps = 1;
};

struct Cache {
  int batch = 0;
  std::vector<std::vector<LayerCache>> branches;
  std::vector<LayerCache> trunk;
  std::vector<int> branch_widths;  // per-step feature width of each branch output
  std::vector<int> branch_steps;
};

struct ForwardResult {
  Tensor output;
  Cache cache;
};

struct Gradients {
  Params params;
  std::vector<Tensor> inputs;  // empty tensors when not requested
};

struct BackwardOptions {
  bool input_grads = true;
};

// Deterministic forward pass. Throws ShapeError on mismatched inputs and NumericError when
// the output is not finite.
ForwardResult forward(const NetworkSpec& spec, const Params& params, const std::vector<Tensor>& inputs);

// Output only, no cache retained.
Tensor predict(const NetworkSpec& spec, const Params& params, const std::vector<Tensor>& inputs);

// Reverse-mode gradients of a scalar loss whose gradient w.r.t. the output is `grad_out`.
Gradients backward(const NetworkSpec& spec, const Params& params, const Cache& cache,
                   const Tensor& grad_out, BackwardOptions options = {});

// Elman update h' = tanh(W x + U h + b) for a single (unbatched) step.
Tensor rnn_step(const Tensor& w, const Tensor& u, const Tensor& b, const Tensor& x, const Tensor& h);

// ---- Losses ---------------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

// mean((pred - target)^2) over every element.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace visionrf::nn
