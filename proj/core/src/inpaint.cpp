// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/inpaint.hpp"

#include <algorithm>
#include <cmath>

#include "towers.hpp"
#include "visionrf/csv.hpp"
#include "visionrf/error.hpp"
#include "visionrf/nn/adam.hpp"
#include "visionrf/seed.hpp"

namespace visionrf {
namespace {

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

// Inverts one (upsample x2, valid conv k) stage.
int grid_before(int n, int k) {
  const int up = n + k - 1;
  if (up % 2 != 0) return -1;
  return up / 2;
}

}  // namespace

std::string_view inpaint_variant_name(InpaintVariant v) { return v == InpaintVariant::kImgRf ? "IMG_RF" : "RF_ONLY"; }

InpaintVariant parse_inpaint_variant(std::string_view name) {
  if (name == "IMG_RF") return InpaintVariant::kImgRf;
  if (name == "RF_ONLY") return InpaintVariant::kRfOnly;
  throw ConfigError("inpaint.variant", "unknown variant '" + std::string(name) + "'");
}

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "right_third") return MaskMode::kRightThird;
  if (name == "random") return MaskMode::kRandom;
  throw ConfigError("inpaint.mask", "unknown mask mode '" + std::string(name) + "'");
}

InpaintDims inpaint_dims(const ScenarioConfig& c) {
  const auto& p = c.inpaint;
  return InpaintDims{c.camera.width, c.camera.height, p.rss_window, p.tower, p.image_latent, p.rss_latent,
                     p.decoder_channels};
}

InpaintTrainConfig inpaint_train_config(const ScenarioConfig& c) {
  return InpaintTrainConfig{c.inpaint.lr, c.inpaint.batch, c.inpaint.steps, c.inpaint.lambda};
}

DecoderGrid decoder_grid(int height, int width) {
  const int h = grid_before(height, 3), w = grid_before(width, 3);
  const int gh = h > 0 ? grid_before(h, 4) : -1, gw = w > 0 ? grid_before(w, 4) : -1;
  if (gh < 1 || gw < 1) {
    throw DomainError("frame " + std::to_string(width) + "x" + std::to_string(height) +
                      " does not admit an upsampling decoder grid");
  }
  return {gh, gw};
}

nn::NetworkSpec build_inpainter(InpaintVariant variant, const InpaintDims& d) {
  if (d.rss_window < 1 || d.image_latent < 1 || d.rss_latent < 1 || d.decoder_channels < 2) {
    throw DomainError("inpainter dims must be positive (decoder_channels >= 2)");
  }
  const DecoderGrid g = decoder_grid(d.height, d.width);
  const int c = d.decoder_channels;
  std::vector<nn::Layer> rss_tower{nn::Dense{d.rss_window, d.rss_latent}, nn::ReLU{},
                                   nn::Dense{d.rss_latent, d.rss_latent}};
  auto decoder = [&](int latent) {
    return std::vector<nn::Layer>{nn::Dense{latent, c * g.height * g.width},
                                  nn::ReLU{},
                                  nn::Reshape{c, g.height, g.width},
                                  nn::NearestUpsample{2},
                                  nn::Conv2D{c, c / 2, 4, 1},
                                  nn::ReLU{},
                                  nn::NearestUpsample{2},
                                  nn::Conv2D{c / 2, 1, 3, 1}};
  };
  nn::NetworkSpec spec;
  const nn::InputSpec rss{"rss", {d.rss_window}, 1};
  if (variant == InpaintVariant::kImgRf) {
    spec.inputs = {{"image", {2, d.height, d.width}, 1}, rss};
    spec.branches = {{0, detail::conv_tower(2, d.height, d.width, d.tower, d.image_latent)}, {1, rss_tower}};
    spec.trunk = {nn::Concat{{0, 1}}};
    for (auto& l : decoder(d.image_latent + d.rss_latent)) spec.trunk.push_back(l);
  } else {
    spec.inputs = {rss};
    spec.branches = {{0, rss_tower}};
    spec.trunk = decoder(d.rss_latent);
  }
  const auto out = nn::infer_output_shape(spec);
  if (out != std::vector<int>{1, d.height, d.width}) throw DomainError("inpainter output does not match the frame");
  return spec;
}

DepthFrame masked_input(const InpaintSample& s) {
  if (!s.truth) throw DomainError("inpaint sample without a frame");
  return apply_mask(*s.truth, s.mask);
}

std::vector<InpaintSample> make_inpaint_samples(const Episode& ep, std::size_t trace, int rss_window, int rss_stride,
                                                MaskMode mode, int sample_stride, Rng& rng,
                                                std::size_t episode_index) {
  if (rss_window < 1 || rss_stride < 1 || sample_stride < 1) throw DomainError("inpaint sample params must be >= 1");
  if (trace >= ep.traces.size()) throw DomainError("no such trace");
  const auto& rss = ep.traces[trace].rss_dbm;
  const int w = ep.manifest.camera.width, h = ep.manifest.camera.height;
  std::vector<InpaintSample> out;
  for (int t = (rss_window - 1) * rss_stride; t < ep.manifest.n_ticks; t += sample_stride) {
    InpaintSample s;
    s.episode = episode_index;
    s.tick = t;
    s.truth = &ep.frames[static_cast<std::size_t>(t)];
    if (mode == MaskMode::kRightThird) {
      s.mask = right_third(w, h);
    } else {
      const int mw = std::uniform_int_distribution<int>(std::max(1, w / 4), std::max(1, w / 2))(rng);
      const int mh = std::uniform_int_distribution<int>(std::max(1, h / 2), h)(rng);
      s.mask = {std::uniform_int_distribution<int>(0, w - mw)(rng), std::uniform_int_distribution<int>(0, h - mh)(rng),
                mw, mh};
    }
    for (int k = rss_window - 1; k >= 0; --k) s.rss.push_back(rss[static_cast<std::size_t>(t - k * rss_stride)]);
    out.push_back(std::move(s));
  }
  return out;
}

nn::Checkpoint InpaintModel::to_checkpoint() const {
  nn::Checkpoint c;
  c.spec = spec;
  c.params = params;
  c.seed = seed;
  c.step = step;
  c.tags["model"] = "inpainter";
  c.tags["variant"] = std::string(inpaint_variant_name(variant));
  auto& h = c.hyperparameters;
  h["width"] = dims.width;
  h["height"] = dims.height;
  h["rss_window"] = dims.rss_window;
  h["conv1_channels"] = dims.tower.conv1_channels;
  h["conv1_kernel"] = dims.tower.conv1_kernel;
  h["conv1_stride"] = dims.tower.conv1_stride;
  h["conv2_channels"] = dims.tower.conv2_channels;
  h["conv2_kernel"] = dims.tower.conv2_kernel;
  h["conv2_stride"] = dims.tower.conv2_stride;
  h["image_latent"] = dims.image_latent;
  h["rss_latent"] = dims.rss_latent;
  h["decoder_channels"] = dims.decoder_channels;
  h["rss_mean"] = rss.mean;
  h["rss_std"] = rss.std;
  h["near_clip"] = near_clip;
  h["far_clip"] = far_clip;
  return c;
}

InpaintModel InpaintModel::from_checkpoint(const nn::Checkpoint& c) {
  auto it = c.tags.find("model");
  if (it == c.tags.end() || it->second != "inpainter") throw FormatError("checkpoint is not an inpainter");
  InpaintModel m;
  m.variant = parse_inpaint_variant(c.tags.at("variant"));
  const auto& h = c.hyperparameters;
  m.dims.width = geti(h, "width");
  m.dims.height = geti(h, "height");
  m.dims.rss_window = geti(h, "rss_window");
  m.dims.tower = {geti(h, "conv1_channels"), geti(h, "conv1_kernel"), geti(h, "conv1_stride"),
                  geti(h, "conv2_channels"), geti(h, "conv2_kernel"), geti(h, "conv2_stride")};
  m.dims.image_latent = geti(h, "image_latent");
  m.dims.rss_latent = geti(h, "rss_latent");
  m.dims.decoder_channels = geti(h, "decoder_channels");
  m.spec = build_inpainter(m.variant, m.dims);
  if (!(m.spec == c.spec)) throw FormatError("checkpoint spec does not match its inpainter dims");
  m.params = c.params;
  m.rss = {getd(h, "rss_mean"), getd(h, "rss_std")};
  m.near_clip = getd(h, "near_clip");
  m.far_clip = getd(h, "far_clip");
  m.seed = c.seed;
  m.step = c.step;
  return m;
}

std::vector<nn::Tensor> inpaint_inputs(const InpaintModel& m, std::span<const DepthFrame> masked,
                                       std::span<const std::vector<double>> rss) {
  if (masked.size() != rss.size()) throw ShapeError(-1, "inpaint_inputs: frame/rss count mismatch");
  const int b = static_cast<int>(masked.size());
  const std::size_t px = static_cast<std::size_t>(m.dims.width) * m.dims.height;
  std::vector<nn::Tensor> out;
  if (m.variant == InpaintVariant::kImgRf) {
    nn::Tensor img({b, 2, m.dims.height, m.dims.width});
    for (int i = 0; i < b; ++i) {
      const DepthFrame& f = masked[static_cast<std::size_t>(i)];
      if (f.width != m.dims.width || f.height != m.dims.height) throw ShapeError(-1, "frame size differs from the inpainter");
      double* d = img.data() + static_cast<std::size_t>(i) * 2 * px;
      for (std::size_t k = 0; k < px; ++k) {
        d[k] = f.depth[k] / m.far_clip;
        d[px + k] = f.has_mask() ? f.mask[k] : 0.0;
      }
    }
    out.push_back(std::move(img));
  }
  nn::Tensor r({b, m.dims.rss_window});
  for (int i = 0; i < b; ++i) {
    const auto& w = rss[static_cast<std::size_t>(i)];
    if (static_cast<int>(w.size()) != m.dims.rss_window) throw ShapeError(-1, "rss window length differs from the inpainter");
    for (int k = 0; k < m.dims.rss_window; ++k) {
      r[static_cast<std::size_t>(i * m.dims.rss_window + k)] = m.rss.apply(w[static_cast<std::size_t>(k)]);
    }
  }
  out.push_back(std::move(r));
  return out;
}

WeightedLoss weighted_mse(const nn::Tensor& pred, const nn::Tensor& target, const nn::Tensor& mask, double lambda) {
  if (pred.shape() != target.shape() || pred.shape() != mask.shape()) throw ShapeError(-1, "weighted_mse shape mismatch");
  std::size_t nm = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) nm += mask[i] > 0.5;
  const std::size_t nu = mask.size() - nm;
  double sm = 0.0, su = 0.0;
  WeightedLoss out;
  out.grad = nn::Tensor(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    if (mask[i] > 0.5) {
      sm += e * e;
      out.grad[i] = lambda * 2.0 * e / static_cast<double>(nm);
    } else {
      su += e * e;
      out.grad[i] = (1.0 - lambda) * 2.0 * e / static_cast<double>(nu);
    }
  }
  out.loss = (nm ? lambda * sm / static_cast<double>(nm) : 0.0) + (nu ? (1.0 - lambda) * su / static_cast<double>(nu) : 0.0);
  if (!std::isfinite(out.loss)) throw NumericError("weighted_mse is not finite");
  return out;
}

InpaintTrainResult train_inpainter(std::span<const InpaintSample> samples, InpaintVariant variant,
                                   const InpaintDims& dims, const InpaintTrainConfig& config,
                                   const CameraModel& camera, std::uint64_t seed) {
  if (samples.empty()) throw DomainError("train_inpainter: empty sample set");
  if (config.batch < 1 || config.steps < 0 || config.lambda < 0.0 || config.lambda > 1.0) {
    throw DomainError("train_inpainter: invalid training config");
  }
  InpaintTrainResult result;
  InpaintModel& m = result.model;
  m.variant = variant;
  m.dims = dims;
  m.spec = build_inpainter(variant, dims);
  m.near_clip = camera.near_clip;
  m.far_clip = camera.far_clip;
  m.seed = seed;
  {
    double mean = 0.0, n = 0.0;
    for (const auto& s : samples) {
      for (double v : s.rss) {
        mean += v;
        n += 1.0;
      }
    }
    mean /= n;
    double var = 0.0;
    for (const auto& s : samples) {
      for (double v : s.rss) var += (v - mean) * (v - mean);
    }
    m.rss = {mean, std::max(std::sqrt(var / n), 1e-6)};
  }
  Rng init_rng(derive_seed(seed, 0));
  m.params = nn::init_params(m.spec, init_rng);
  Rng batch_rng(derive_seed(seed, 1));
  nn::AdamState adam = nn::make_adam_state(m.params, {config.lr});
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  const int b = config.batch;
  const std::size_t px = static_cast<std::size_t>(dims.width) * dims.height;
  std::vector<DepthFrame> masked(static_cast<std::size_t>(b));
  std::vector<std::vector<double>> rss(static_cast<std::size_t>(b));
  nn::Tensor target({b, 1, dims.height, dims.width});
  nn::Tensor mask({b, 1, dims.height, dims.width});
  for (int step = 0; step < config.steps; ++step) {
    for (int i = 0; i < b; ++i) {
      const InpaintSample& s = samples[pick(batch_rng)];
      masked[static_cast<std::size_t>(i)] = masked_input(s);
      rss[static_cast<std::size_t>(i)] = s.rss;
      for (std::size_t k = 0; k < px; ++k) {
        target[static_cast<std::size_t>(i) * px + k] = s.truth->depth[k] / m.far_clip;
        mask[static_cast<std::size_t>(i) * px + k] = masked[static_cast<std::size_t>(i)].mask[k];
      }
    }
    const nn::ForwardResult fr = nn::forward(m.spec, m.params, inpaint_inputs(m, masked, rss));
    const WeightedLoss loss = weighted_mse(fr.output, target, mask, config.lambda);
    const nn::Gradients g = nn::backward(m.spec, m.params, fr.cache, loss.grad, {false});
    nn::adam_step(m.params, g.params, adam);
    result.loss_history.push_back(loss.loss);
    ++m.step;
  }
  return result;
}

namespace {

DepthFrame composite(const InpaintModel& m, const DepthFrame& in, const double* out) {
  DepthFrame r = in;
  if (!in.has_mask()) return r;
  for (std::size_t k = 0; k < r.pixel_count(); ++k) {
    if (in.mask[k]) r.depth[k] = static_cast<float>(std::clamp(out[k] * m.far_clip, m.near_clip, m.far_clip));
  }
  return r;
}

}  // namespace

DepthFrame reconstruct(const InpaintModel& m, const DepthFrame& masked_frame, std::span<const double> rss_window) {
  std::vector<double> rss(rss_window.begin(), rss_window.end());
  const nn::Tensor y = nn::predict(m.spec, m.params, inpaint_inputs(m, std::span(&masked_frame, 1), std::span(&rss, 1)));
  return composite(m, masked_frame, y.data());
}

std::vector<DepthFrame> reconstruct_batch(const InpaintModel& m, std::span<const InpaintSample> samples) {
  std::vector<DepthFrame> out;
  out.reserve(samples.size());
  constexpr std::size_t kChunk = 32;
  const std::size_t px = static_cast<std::size_t>(m.dims.width) * m.dims.height;
  for (std::size_t i = 0; i < samples.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, samples.size() - i);
    std::vector<DepthFrame> masked;
    std::vector<std::vector<double>> rss;
    for (std::size_t j = 0; j < n; ++j) {
      masked.push_back(masked_input(samples[i + j]));
      rss.push_back(samples[i + j].rss);
    }
    const nn::Tensor y = nn::predict(m.spec, m.params, inpaint_inputs(m, masked, rss));
    for (std::size_t j = 0; j < n; ++j) out.push_back(composite(m, masked[j], y.data() + j * px));
  }
  return out;
}

DepthFrame background_fill(const DepthFrame& masked_frame, const DepthFrame& background) {
  if (background.width != masked_frame.width || background.height != masked_frame.height) {
    throw DomainError("background size differs from the frame");
  }
  DepthFrame r = masked_frame;
  if (!r.has_mask()) return r;
  for (std::size_t k = 0; k < r.pixel_count(); ++k) {
    if (r.mask[k]) r.depth[k] = background.depth[k];
  }
  return r;
}

DepthFrame background_frame(const ScenarioConfig& c) {
  std::vector<Node> bss;
  for (const auto& l : c.links) bss.push_back(Node{l.id, l.position, l.height});
  const Scene empty(c.world.bounds, std::move(bss), c.station, {}, c.world.dt, c.world.v_max);
  return render_depth(empty, c.camera);
}

InpaintMetrics inpaint_metrics(const DepthFrame& recon, const DepthFrame& truth, std::span<const std::uint8_t> mask,
                               const DepthFrame& background, double threshold) {
  const std::size_t n = truth.pixel_count();
  if (recon.pixel_count() != n || mask.size() != n || background.pixel_count() != n) {
    throw DomainError("inpaint_metrics: size mismatch");
  }
  InpaintMetrics r;
  std::size_t count = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!mask[k]) continue;
    ++count;
    const double e = static_cast<double>(recon.depth[k]) - truth.depth[k];
    sum += e * e;
    const double limit = background.depth[k] - threshold;
    if (recon.depth[k] < limit) r.presence_pred = true;
    if (truth.depth[k] < limit) r.presence_true = true;
  }
  if (count == 0) throw DomainError("inpaint_metrics: empty mask");
  r.masked_mse = sum / static_cast<double>(count);
  return r;
}

double balanced_accuracy(std::span<const InpaintMetrics> metrics) {
  std::size_t pos = 0, neg = 0, tp = 0, tn = 0;
  for (const auto& m : metrics) {
    if (m.presence_true) {
      ++pos;
      tp += m.presence_pred;
    } else {
      ++neg;
      tn += !m.presence_pred;
    }
  }
  if (pos == 0 && neg == 0) throw DomainError("balanced_accuracy: no samples");
  if (pos == 0) return static_cast<double>(tn) / static_cast<double>(neg);
  if (neg == 0) return static_cast<double>(tp) / static_cast<double>(pos);
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

void write_inpaint_report(const std::filesystem::path& path, std::span<const InpaintReportRow> rows) {
  CsvTable t;
  t.header = {"sample_id", "masked_mse", "presence_pred", "presence_true"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.sample_id), format_double(r.metrics.masked_mse),
                      r.metrics.presence_pred ? "1" : "0", r.metrics.presence_true ? "1" : "0"});
  }
  write_csv(path, t);
}

void write_triptych(const std::filesystem::path& path, const DepthFrame& truth, const DepthFrame& masked,
                    const DepthFrame& composited, const CameraModel& camera) {
  const DepthFrame frames[] = {truth, masked, composited};
  write_pgm(path, frames, camera.near_clip, camera.far_clip);
}

}  // namespace visionrf
