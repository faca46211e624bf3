// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "towers.hpp"
#include "visionrf/csv.hpp"
#include "visionrf/error.hpp"
#include "visionrf/nn/adam.hpp"
#include "visionrf/seed.hpp"

namespace visionrf {
namespace {

bool uses_frames(PredictorVariant v) { return v != PredictorVariant::kRf; }
bool uses_rss(PredictorVariant v) { return v != PredictorVariant::kImg; }

nn::Tensor labels_of(const PredictorModel& m, std::span<const SampleWindow> w) {
  nn::Tensor y({static_cast<int>(w.size()), 1});
  for (std::size_t i = 0; i < w.size(); ++i) y[i] = m.rss.apply(w[i].label_rss);
  return y;
}

void put_tower(std::map<std::string, double>& h, const ConvTowerConfig& t) {
  h["conv1_channels"] = t.conv1_channels;
  h["conv1_kernel"] = t.conv1_kernel;
  h["conv1_stride"] = t.conv1_stride;
  h["conv2_channels"] = t.conv2_channels;
  h["conv2_kernel"] = t.conv2_kernel;
  h["conv2_stride"] = t.conv2_stride;
}

int geti(const std::map<std::string, double>& h, const std::string& k) {
  auto it = h.find(k);
  if (it == h.end()) throw FormatError("checkpoint is missing hyperparameter '" + k + "'");
  return static_cast<int>(it->second);
}

double getd(const std::map<std::string, double>& h, const std::string& k) {
  auto it = h.find(k);
  if (it == h.end()) throw FormatError("checkpoint is missing hyperparameter '" + k + "'");
  return it->second;
}

}  // namespace

std::string_view variant_name(PredictorVariant v) {
  switch (v) {
    case PredictorVariant::kImg:
      return "IMG";
    case PredictorVariant::kRf:
      return "RF";
    case PredictorVariant::kImgRf:
      return "IMG_RF";
  }
  return "?";
}

PredictorVariant parse_predictor_variant(std::string_view name) {
  if (name == "IMG") return PredictorVariant::kImg;
  if (name == "RF") return PredictorVariant::kRf;
  if (name == "IMG_RF") return PredictorVariant::kImgRf;
  throw ConfigError("predictor.variant", "unknown variant '" + std::string(name) + "'");
}

PredictorDims predictor_dims(const ScenarioConfig& c) {
  const auto& p = c.predictor;
  return PredictorDims{c.camera.width, c.camera.height, p.t_past, p.tower, p.feature_width, p.hidden};
}

PredictorTrainConfig predictor_train_config(const ScenarioConfig& c) {
  const auto& p = c.predictor;
  PredictorTrainConfig t;
  t.lr = p.lr;
  t.batch = p.batch;
  t.epochs = p.epochs;
  t.steps_per_epoch = p.steps_per_epoch;
  return t;
}

nn::NetworkSpec build_predictor(PredictorVariant variant, const PredictorDims& d) {
  if (d.width < 1 || d.height < 1 || d.t_past < 1 || d.hidden < 1 || d.feature_width < 1) {
    throw DomainError("predictor dims must be positive");
  }
  nn::NetworkSpec spec;
  const nn::InputSpec frames{"frames", {1, d.height, d.width}, d.t_past};
  const nn::InputSpec rss{"rss", {1}, d.t_past};
  switch (variant) {
    case PredictorVariant::kImgRf:
      spec.inputs = {frames, rss};
      spec.branches = {{0, detail::conv_tower(1, d.height, d.width, d.tower, d.feature_width)}, {1, {}}};
      spec.trunk = {nn::Concat{{0, 1}}, nn::RNNCell{d.feature_width + 1, d.hidden}, nn::Dense{d.hidden, 1}};
      break;
    case PredictorVariant::kImg:
      spec.inputs = {frames};
      spec.branches = {{0, detail::conv_tower(1, d.height, d.width, d.tower, d.feature_width)}};
      spec.trunk = {nn::RNNCell{d.feature_width, d.hidden}, nn::Dense{d.hidden, 1}};
      break;
    case PredictorVariant::kRf:
      spec.inputs = {rss};
      spec.branches = {{0, {}}};
      spec.trunk = {nn::RNNCell{1, d.hidden}, nn::Dense{d.hidden, 1}};
      break;
  }
  nn::infer_output_shape(spec);
  return spec;
}

Standardizer fit_standardizer(std::span<const SampleWindow> windows) {
  if (windows.empty()) throw DomainError("cannot standardize an empty window set");
  double mean = 0.0;
  for (const auto& w : windows) mean += w.label_rss;
  mean /= static_cast<double>(windows.size());
  double var = 0.0;
  for (const auto& w : windows) var += (w.label_rss - mean) * (w.label_rss - mean);
  var /= static_cast<double>(windows.size());
  return Standardizer{mean, std::max(std::sqrt(var), 1e-6)};
}

nn::Checkpoint PredictorModel::to_checkpoint() const {
  nn::Checkpoint c;
  c.spec = spec;
  c.params = params;
  c.seed = seed;
  c.step = step;
  c.tags["model"] = "predictor";
  c.tags["variant"] = std::string(variant_name(variant));
  auto& h = c.hyperparameters;
  h["width"] = dims.width;
  h["height"] = dims.height;
  h["t_past"] = dims.t_past;
  h["feature_width"] = dims.feature_width;
  h["hidden"] = dims.hidden;
  put_tower(h, dims.tower);
  h["rss_mean"] = rss.mean;
  h["rss_std"] = rss.std;
  h["far_clip"] = far_clip;
  return c;
}

PredictorModel PredictorModel::from_checkpoint(const nn::Checkpoint& c) {
  auto it = c.tags.find("model");
  if (it == c.tags.end() || it->second != "predictor") throw FormatError("checkpoint is not a predictor");
  PredictorModel m;
  m.variant = parse_predictor_variant(c.tags.at("variant"));
  const auto& h = c.hyperparameters;
  m.dims.width = geti(h, "width");
  m.dims.height = geti(h, "height");
  m.dims.t_past = geti(h, "t_past");
  m.dims.feature_width = geti(h, "feature_width");
  m.dims.hidden = geti(h, "hidden");
  m.dims.tower = {geti(h, "conv1_channels"), geti(h, "conv1_kernel"), geti(h, "conv1_stride"),
                  geti(h, "conv2_channels"), geti(h, "conv2_kernel"), geti(h, "conv2_stride")};
  m.spec = build_predictor(m.variant, m.dims);
  if (!(m.spec == c.spec)) throw FormatError("checkpoint spec does not match its predictor dims");
  m.params = c.params;
  m.rss = {getd(h, "rss_mean"), getd(h, "rss_std")};
  m.far_clip = getd(h, "far_clip");
  m.seed = c.seed;
  m.step = c.step;
  return m;
}

std::vector<nn::Tensor> predictor_inputs(const PredictorModel& m, std::span<const SampleWindow> windows) {
  const int b = static_cast<int>(windows.size());
  const int t = m.dims.t_past;
  std::vector<nn::Tensor> out;
  if (uses_frames(m.variant)) {
    const std::size_t px = static_cast<std::size_t>(m.dims.width) * m.dims.height;
    nn::Tensor f({b, t, 1, m.dims.height, m.dims.width});
    const double scale = 1.0 / m.far_clip;
    double* dst = f.data();
    for (const auto& w : windows) {
      if (static_cast<int>(w.past_frames.size()) != t) throw ShapeError(-1, "window has the wrong T_past");
      for (const DepthFrame* fr : w.past_frames) {
        if (fr->width != m.dims.width || fr->height != m.dims.height) {
          throw ShapeError(-1, "frame size differs from the predictor dims");
        }
        for (std::size_t i = 0; i < px; ++i) dst[i] = fr->depth[i] * scale;
        dst += px;
      }
    }
    out.push_back(std::move(f));
  }
  if (uses_rss(m.variant)) {
    nn::Tensor r({b, t, 1});
    std::size_t k = 0;
    for (const auto& w : windows) {
      if (static_cast<int>(w.past_rss.size()) != t) throw ShapeError(-1, "window has the wrong T_past");
      for (double v : w.past_rss) r[k++] = m.rss.apply(v);
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

double batched_mse(const PredictorModel& m, std::span<const SampleWindow> windows) {
  double sum = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < windows.size(); i += kChunk) {
    const auto part = windows.subspan(i, std::min(kChunk, windows.size() - i));
    const nn::Tensor y = nn::predict(m.spec, m.params, predictor_inputs(m, part));
    for (std::size_t j = 0; j < part.size(); ++j) {
      const double e = y[j] - m.rss.apply(part[j].label_rss);
      sum += e * e;
    }
  }
  return sum / static_cast<double>(windows.size());
}

}  // namespace

PredictorTrainResult train_predictor(std::span<const SampleWindow> train, std::span<const SampleWindow> validation,
                                     PredictorVariant variant, const PredictorDims& dims,
                                     const PredictorTrainConfig& config, double far_clip, std::uint64_t seed) {
  if (train.empty()) throw DomainError("train_predictor: empty training set");
  for (const auto& w : train) {
    if (!std::isfinite(w.label_rss)) throw DomainError("train_predictor: non-finite label");
  }
  if (config.batch < 1 || config.epochs < 0 || config.steps_per_epoch < 0) {
    throw DomainError("train_predictor: invalid training config");
  }
  PredictorTrainResult result;
  PredictorModel& m = result.model;
  m.variant = variant;
  m.dims = dims;
  m.spec = build_predictor(variant, dims);
  m.far_clip = far_clip;
  m.seed = seed;
  m.rss = fit_standardizer(train);
  Rng rng(derive_seed(seed, 0));
  m.params = nn::init_params(m.spec, rng);
  Rng shuffle_rng(derive_seed(seed, 1));

  std::vector<SampleWindow> val;
  if (!validation.empty()) {
    const std::size_t n = std::min<std::size_t>(validation.size(), static_cast<std::size_t>(config.max_val_windows));
    for (std::size_t i = 0; i < n; ++i) val.push_back(validation[i * validation.size() / n]);
  }

  nn::AdamState adam = nn::make_adam_state(m.params, {config.lr});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const int batch = std::min<int>(config.batch, static_cast<int>(train.size()));
  const int steps = config.steps_per_epoch > 0
                        ? config.steps_per_epoch
                        : static_cast<int>((train.size() + static_cast<std::size_t>(batch) - 1) / batch);
  std::vector<SampleWindow> picked(static_cast<std::size_t>(batch));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int s = 0; s < steps; ++s) {
      for (auto& w : picked) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), shuffle_rng);
          cursor = 0;
        }
        w = train[order[cursor++]];
      }
      const nn::ForwardResult fr = nn::forward(m.spec, m.params, predictor_inputs(m, picked));
      const nn::LossResult loss = nn::mse_loss(fr.output, labels_of(m, picked));
      if (!std::isfinite(loss.loss)) {
        throw NumericError("train_predictor: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(s));
      }
      const nn::Gradients g = nn::backward(m.spec, m.params, fr.cache, loss.grad, {false});
      nn::adam_step(m.params, g.params, adam);
      loss_sum += loss.loss;
      ++m.step;
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / steps;
    st.val_loss = val.empty() ? std::numeric_limits<double>::quiet_NaN() : batched_mse(m, val);
    result.history.push_back(st);
  }
  return result;
}

std::vector<double> predict_rss(const PredictorModel& m, std::span<const SampleWindow> windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < windows.size(); i += kChunk) {
    const auto part = windows.subspan(i, std::min(kChunk, windows.size() - i));
    const nn::Tensor y = nn::predict(m.spec, m.params, predictor_inputs(m, part));
    for (std::size_t j = 0; j < part.size(); ++j) out.push_back(m.rss.invert(y[j]));
  }
  return out;
}

std::vector<double> persistence_predictions(std::span<const SampleWindow> windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (w.past_rss.empty()) throw DomainError("window without past rss");
    out.push_back(w.past_rss.back());
  }
  return out;
}

RmseReport rmse_report(std::span<const double> predictions, std::span<const SampleWindow> windows) {
  if (predictions.size() != windows.size()) throw DomainError("rmse_report: prediction count mismatch");
  RmseReport r;
  std::array<double, 3> sq{};
  double total = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double e = predictions[i] - windows[i].label_rss;
    const auto c = static_cast<std::size_t>(windows[i].label_condition);
    sq[c] += e * e;
    ++r.count[c];
    total += e * e;
  }
  for (std::size_t c = 0; c < 3; ++c) {
    r.rmse[c] = r.count[c] ? std::sqrt(sq[c] / static_cast<double>(r.count[c]))
                           : std::numeric_limits<double>::quiet_NaN();
  }
  r.total = windows.size();
  r.overall = r.total ? std::sqrt(total / static_cast<double>(r.total)) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

RmseReport evaluate_rmse(const PredictorModel& model, std::span<const SampleWindow> windows) {
  for (const auto& w : windows) {
    if (static_cast<int>(w.past_rss.size()) != model.dims.t_past) {
      throw DomainError("evaluate_rmse: window T_past differs from the model");
    }
  }
  const auto pred = predict_rss(model, windows);
  return rmse_report(pred, windows);
}

void write_rmse_report(const std::filesystem::path& path, const RmseReport& r) {
  CsvTable t;
  t.header = {"condition", "count", "rmse_db"};
  for (Condition c : {Condition::kLos, Condition::kNlos, Condition::kTransition}) {
    t.rows.push_back({std::string(condition_name(c)), std::to_string(r.count[static_cast<std::size_t>(c)]),
                      format_double(r.of(c))});
  }
  t.rows.push_back({"ALL", std::to_string(r.total), format_double(r.overall)});
  write_csv(path, t);
}

}  // namespace visionrf
