// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/nn/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include "visionrf/error.hpp"

namespace visionrf::nn {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using StridedR = Eigen::Map<MatR, 0, Eigen::OuterStride<>>;
using CStridedR = Eigen::Map<const MatR, 0, Eigen::OuterStride<>>;
using CRowVec = Eigen::Map<const Eigen::RowVectorXd>;
using RowVec = Eigen::Map<Eigen::RowVectorXd>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int param_tensors(const Layer& layer) {
  return std::visit(Overloaded{[](const Dense&) { return 2; }, [](const Conv2D&) { return 2; },
                               [](const RNNCell&) { return 3; }, [](const auto&) { return 0; }},
                    layer);
}

// Per-step feature shape after `layer`; updates `steps` for recurrent layers.
std::vector<int> apply_shape(const Layer& layer, const std::vector<int>& in, int& steps, int index) {
  auto need_rank = [&](std::size_t r) {
    if (in.size() != r) {
      throw ShapeError(index, layer_name(layer) + " expects rank-" + std::to_string(r) +
                                  " features, got " + shape_string(in));
    }
  };
  return std::visit(
      Overloaded{
          [&](const Dense& d) -> std::vector<int> {
            need_rank(1);
            if (d.in <= 0 || d.out <= 0) throw ShapeError(index, "Dense dims must be positive");
            if (in[0] != d.in) {
              throw ShapeError(index, "Dense expects width " + std::to_string(d.in) + ", got " +
                                          std::to_string(in[0]));
            }
            return {d.out};
          },
          [&](const Conv2D& c) -> std::vector<int> {
            need_rank(3);
            if (c.kernel < 1 || c.stride < 1 || c.out_channels < 1) {
              throw ShapeError(index, "Conv2D kernel, stride and channels must be positive");
            }
            if (in[0] != c.in_channels) {
              throw ShapeError(index, "Conv2D expects " + std::to_string(c.in_channels) +
                                          " channels, got " + std::to_string(in[0]));
            }
            if (in[1] < c.kernel || in[2] < c.kernel) {
              throw ShapeError(index, "Conv2D kernel larger than input " + shape_string(in));
            }
            return {c.out_channels, (in[1] - c.kernel) / c.stride + 1, (in[2] - c.kernel) / c.stride + 1};
          },
          [&](const MaxPool& p) -> std::vector<int> {
            need_rank(3);
            if (p.kernel < 1 || in[1] / p.kernel < 1 || in[2] / p.kernel < 1) {
              throw ShapeError(index, "MaxPool kernel does not fit " + shape_string(in));
            }
            return {in[0], in[1] / p.kernel, in[2] / p.kernel};
          },
          [&](const ReLU&) { return in; }, [&](const Tanh&) { return in; },
          [&](const RNNCell& r) -> std::vector<int> {
            need_rank(1);
            if (r.in <= 0 || r.hidden <= 0) throw ShapeError(index, "RNNCell dims must be positive");
            if (in[0] != r.in) {
              throw ShapeError(index, "RNNCell expects width " + std::to_string(r.in) + ", got " +
                                          std::to_string(in[0]));
            }
            steps = 1;
            return {r.hidden};
          },
          [&](const Concat&) -> std::vector<int> {
            throw ShapeError(index, "Concat is only valid as the first trunk layer");
          },
          [&](const Flatten&) -> std::vector<int> { return {static_cast<int>(shape_size(in))}; },
          [&](const Reshape& r) -> std::vector<int> {
            need_rank(1);
            if (r.channels < 1 || r.height < 1 || r.width < 1 ||
                static_cast<long>(r.channels) * r.height * r.width != in[0]) {
              throw ShapeError(index, "Reshape to (" + std::to_string(r.channels) + "," +
                                          std::to_string(r.height) + "," + std::to_string(r.width) +
                                          ") does not match width " + std::to_string(in[0]));
            }
            return {r.channels, r.height, r.width};
          },
          [&](const NearestUpsample& u) -> std::vector<int> {
            need_rank(3);
            if (u.factor < 1) throw ShapeError(index, "NearestUpsample factor must be >= 1");
            return {in[0], in[1] * u.factor, in[2] * u.factor};
          }},
      layer);
}

struct Plan {
  std::vector<std::vector<int>> branch_out;  // per-step feature shape
  std::vector<int> branch_steps;
  std::vector<int> branch_first_index;  // global layer index of each branch's first layer
  int trunk_first_index = 0;
  bool trunk_concat = false;
  std::vector<int> output;  // per-step
  int output_steps = 1;
};

Plan make_plan(const NetworkSpec& spec) {
  if (spec.inputs.empty()) throw ShapeError(-1, "network has no inputs");
  if (spec.branches.empty()) throw ShapeError(-1, "network has no branches");
  Plan plan;
  int index = 0;
  for (const auto& in : spec.inputs) {
    if (in.steps < 1) throw ShapeError(-1, "input '" + in.name + "' needs steps >= 1");
    if (in.shape.empty() || shape_size(in.shape) == 0) {
      throw ShapeError(-1, "input '" + in.name + "' has empty shape");
    }
  }
  for (const auto& br : spec.branches) {
    if (br.input < 0 || br.input >= static_cast<int>(spec.inputs.size())) {
      throw ShapeError(index, "branch references missing input " + std::to_string(br.input));
    }
    plan.branch_first_index.push_back(index);
    std::vector<int> feat = spec.inputs[static_cast<std::size_t>(br.input)].shape;
    int steps = spec.inputs[static_cast<std::size_t>(br.input)].steps;
    for (const auto& layer : br.layers) feat = apply_shape(layer, feat, steps, index++);
    plan.branch_out.push_back(feat);
    plan.branch_steps.push_back(steps);
  }
  plan.trunk_first_index = index;
  std::vector<int> feat;
  int steps = 1;
  std::size_t start = 0;
  const bool has_concat = !spec.trunk.empty() && std::holds_alternative<Concat>(spec.trunk.front());
  if (spec.branches.size() > 1 && !has_concat) {
    throw ShapeError(index, "several branches require a leading Concat in the trunk");
  }
  if (has_concat) {
    const auto& cat = std::get<Concat>(spec.trunk.front());
    std::vector<int> sorted = cat.branches;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expected(spec.branches.size());
    std::iota(expected.begin(), expected.end(), 0);
    if (sorted != expected) throw ShapeError(index, "Concat must name every branch exactly once");
    int width = 0;
    steps = plan.branch_steps[static_cast<std::size_t>(cat.branches.front())];
    for (int b : cat.branches) {
      const auto& f = plan.branch_out[static_cast<std::size_t>(b)];
      if (f.size() != 1) {
        throw ShapeError(index, "Concat needs flat branch outputs, branch " + std::to_string(b) +
                                    " is " + shape_string(f));
      }
      if (plan.branch_steps[static_cast<std::size_t>(b)] != steps) {
        throw ShapeError(index, "Concat branches disagree on time steps");
      }
      width += f[0];
    }
    feat = {width};
    plan.trunk_concat = true;
    start = 1;
    ++index;
  } else {
    feat = plan.branch_out[0];
    steps = plan.branch_steps[0];
  }
  for (std::size_t i = start; i < spec.trunk.size(); ++i) feat = apply_shape(spec.trunk[i], feat, steps, index++);
  plan.output = feat;
  plan.output_steps = steps;
  return plan;
}

// ---- layer kernels ---------------------------------------------------------------------------

struct Act {
  Tensor t;  // [M, ...feature]
  int steps = 1;
};

int rows(const Tensor& t) { return t.dim(0); }
int row_width(const Tensor& t) { return static_cast<int>(t.size() / static_cast<std::size_t>(t.dim(0))); }

void im2col(const Tensor& x, int k, int s, int ho, int wo, MatR& cols) {
  const int m = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int p = ho * wo;
  cols.resize(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(m) * p);
  const double* xd = x.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols.data() + (static_cast<std::size_t>((ci * k + ki) * k + kj)) * m * p;
        for (int mi = 0; mi < m; ++mi) {
          const double* plane = xd + (static_cast<std::size_t>(mi) * c + ci) * h * w;
          double* dst = row + static_cast<std::size_t>(mi) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const double* src = plane + static_cast<std::size_t>(oy * s + ki) * w + kj;
            for (int ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = src[ox * s];
          }
        }
      }
    }
  }
}

void col2im(const MatR& cols, int k, int s, int ho, int wo, Tensor& dx) {
  const int m = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  const int p = ho * wo;
  double* xd = dx.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = cols.data() + (static_cast<std::size_t>((ci * k + ki) * k + kj)) * m * p;
        for (int mi = 0; mi < m; ++mi) {
          double* plane = xd + (static_cast<std::size_t>(mi) * c + ci) * h * w;
          const double* src = row + static_cast<std::size_t>(mi) * p;
          for (int oy = 0; oy < ho; ++oy) {
            double* dst = plane + static_cast<std::size_t>(oy * s + ki) * w + kj;
            for (int ox = 0; ox < wo; ++ox) dst[ox * s] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

Tensor dense_forward(const Dense& d, const Tensor& x, const Tensor& w, const Tensor& b) {
  const int m = rows(x);
  Tensor y({m, d.out});
  MapR ym(y.data(), m, d.out);
  ym.noalias() = CMapR(x.data(), m, d.in) * CMapR(w.data(), d.out, d.in).transpose();
  ym.rowwise() += CRowVec(b.data(), d.out);
  return y;
}

void dense_backward(const Dense& d, const Tensor& x, const Tensor& w, const Tensor& g, Tensor& dw,
                    Tensor& db, Tensor* dx) {
  const int m = rows(x);
  CMapR gm(g.data(), m, d.out);
  MapR(dw.data(), d.out, d.in).noalias() = gm.transpose() * CMapR(x.data(), m, d.in);
  RowVec(db.data(), d.out) = gm.colwise().sum();
  if (dx) {
    *dx = Tensor(x.shape());
    MapR(dx->data(), m, d.in).noalias() = gm * CMapR(w.data(), d.out, d.in);
  }
}

Tensor conv_forward(const Conv2D& c, const Tensor& x, const Tensor& w, const Tensor& b) {
  const int m = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const int ho = (h - c.kernel) / c.stride + 1, wo = (wd - c.kernel) / c.stride + 1;
  const int p = ho * wo;
  const int kk = c.in_channels * c.kernel * c.kernel;
  MatR cols;
  im2col(x, c.kernel, c.stride, ho, wo, cols);
  MatR out = CMapR(w.data(), c.out_channels, kk) * cols;
  Tensor y({m, c.out_channels, ho, wo});
  double* yd = y.data();
  for (int mi = 0; mi < m; ++mi) {
    for (int co = 0; co < c.out_channels; ++co) {
      const double* src = out.data() + static_cast<std::size_t>(co) * m * p + static_cast<std::size_t>(mi) * p;
      double* dst = yd + (static_cast<std::size_t>(mi) * c.out_channels + co) * p;
      const double bias = b[static_cast<std::size_t>(co)];
      for (int i = 0; i < p; ++i) dst[i] = src[i] + bias;
    }
  }
  return y;
}

void conv_backward(const Conv2D& c, const Tensor& x, const Tensor& w, const Tensor& g, Tensor& dw,
                   Tensor& db, Tensor* dx) {
  const int m = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const int ho = (h - c.kernel) / c.stride + 1, wo = (wd - c.kernel) / c.stride + 1;
  const int p = ho * wo;
  const int kk = c.in_channels * c.kernel * c.kernel;
  MatR gmat(c.out_channels, static_cast<Eigen::Index>(m) * p);
  const double* gd = g.data();
  for (int mi = 0; mi < m; ++mi) {
    for (int co = 0; co < c.out_channels; ++co) {
      const double* src = gd + (static_cast<std::size_t>(mi) * c.out_channels + co) * p;
      double* dst = gmat.data() + static_cast<std::size_t>(co) * m * p + static_cast<std::size_t>(mi) * p;
      std::copy(src, src + p, dst);
    }
  }
  MatR cols;
  im2col(x, c.kernel, c.stride, ho, wo, cols);
  MapR(dw.data(), c.out_channels, kk).noalias() = gmat * cols.transpose();
  Eigen::Map<Eigen::VectorXd>(db.data(), c.out_channels) = gmat.rowwise().sum();
  if (dx) {
    MatR dcols = CMapR(w.data(), c.out_channels, kk).transpose() * gmat;
    *dx = Tensor(x.shape());
    col2im(dcols, c.kernel, c.stride, ho, wo, *dx);
  }
}

Tensor maxpool_forward(const MaxPool& mp, const Tensor& x, std::vector<int>& argmax) {
  const int m = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int k = mp.kernel, ho = h / k, wo = w / k;
  Tensor y({m, c, ho, wo});
  argmax.resize(y.size());
  std::size_t o = 0;
  for (int plane = 0; plane < m * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + static_cast<std::size_t>(oy * k) * w + ox * k;
        for (int ki = 0; ki < k; ++ki) {
          for (int kj = 0; kj < k; ++kj) {
            const std::size_t i = base + static_cast<std::size_t>(oy * k + ki) * w + ox * k + kj;
            if (x[i] > x[best]) best = i;
          }
        }
        y[o] = x[best];
        argmax[o] = static_cast<int>(best);
      }
    }
  }
  return y;
}

Tensor upsample_forward(const NearestUpsample& u, const Tensor& x) {
  const int m = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), f = u.factor;
  Tensor y({m, c, h * f, w * f});
  std::size_t o = 0;
  for (int plane = 0; plane < m * c; ++plane) {
    const double* src = x.data() + static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < h * f; ++oy) {
      const double* row = src + static_cast<std::size_t>(oy / f) * w;
      for (int ox = 0; ox < w * f; ++ox) y[o++] = row[ox / f];
    }
  }
  return y;
}

Tensor upsample_backward(const NearestUpsample& u, const std::vector<int>& in_shape, const Tensor& g) {
  Tensor dx(in_shape);
  const int m = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3], f = u.factor;
  std::size_t o = 0;
  for (int plane = 0; plane < m * c; ++plane) {
    double* dst = dx.data() + static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < h * f; ++oy) {
      double* row = dst + static_cast<std::size_t>(oy / f) * w;
      for (int ox = 0; ox < w * f; ++ox) row[ox / f] += g[o++];
    }
  }
  return dx;
}

// hidden: [(T + 1) * N, H] with h_0 = 0 in the first block.
Tensor rnn_forward(const RNNCell& r, const Tensor& x, int steps, const Tensor& w, const Tensor& u,
                   const Tensor& b, Tensor& hidden) {
  const int n = rows(x) / steps;
  const int d = r.in, hd = r.hidden;
  hidden = Tensor({(steps + 1) * n, hd});
  CMapR wm(w.data(), hd, d), um(u.data(), hd, hd);
  CRowVec bv(b.data(), hd);
  for (int t = 0; t < steps; ++t) {
    CStridedR xt(x.data() + static_cast<std::size_t>(t) * d, n, d, Eigen::OuterStride<>(steps * d));
    CMapR hprev(hidden.data() + static_cast<std::size_t>(t) * n * hd, n, hd);
    MapR hnext(hidden.data() + static_cast<std::size_t>(t + 1) * n * hd, n, hd);
    MatR a = xt * wm.transpose();
    a.noalias() += hprev * um.transpose();
    a.rowwise() += bv;
    hnext = a.array().tanh().matrix();
  }
  Tensor out({n, hd});
  std::copy_n(hidden.data() + static_cast<std::size_t>(steps) * n * hd, static_cast<std::size_t>(n) * hd,
              out.data());
  return out;
}

void rnn_backward(const RNNCell& r, const Tensor& x, int steps, const Tensor& w, const Tensor& u,
                  const Tensor& hidden, const Tensor& g, Tensor& dw, Tensor& du, Tensor& db, Tensor* dx) {
  const int n = rows(x) / steps;
  const int d = r.in, hd = r.hidden;
  CMapR wm(w.data(), hd, d), um(u.data(), hd, hd);
  MapR dwm(dw.data(), hd, d), dum(du.data(), hd, hd);
  RowVec dbv(db.data(), hd);
  dwm.setZero();
  dum.setZero();
  dbv.setZero();
  if (dx) *dx = Tensor(x.shape());
  MatR dh = CMapR(g.data(), n, hd);
  for (int t = steps - 1; t >= 0; --t) {
    CMapR ht(hidden.data() + static_cast<std::size_t>(t + 1) * n * hd, n, hd);
    CMapR hprev(hidden.data() + static_cast<std::size_t>(t) * n * hd, n, hd);
    CStridedR xt(x.data() + static_cast<std::size_t>(t) * d, n, d, Eigen::OuterStride<>(steps * d));
    MatR da = (dh.array() * (1.0 - ht.array().square())).matrix();
    dwm.noalias() += da.transpose() * xt;
    dum.noalias() += da.transpose() * hprev;
    dbv += da.colwise().sum();
    if (dx) {
      StridedR dxt(dx->data() + static_cast<std::size_t>(t) * d, n, d, Eigen::OuterStride<>(steps * d));
      dxt.noalias() = da * wm;
    }
    dh.noalias() = da * um;
  }
}

// Forward through one layer; fills `cache` (when given) with what backward needs.
Act layer_forward(const Layer& layer, Act in, const Params& params, std::size_t& p, LayerCache* cache) {
  Act out;
  out.steps = in.steps;
  std::vector<int> argmax;
  Tensor aux;
  std::visit(
      Overloaded{
          [&](const Dense& d) { out.t = dense_forward(d, in.t, params[p], params[p + 1]); },
          [&](const Conv2D& c) { out.t = conv_forward(c, in.t, params[p], params[p + 1]); },
          [&](const MaxPool& mp) { out.t = maxpool_forward(mp, in.t, argmax); },
          [&](const ReLU&) {
            out.t = in.t;
            for (double& v : out.t.values()) v = v > 0.0 ? v : 0.0;
          },
          [&](const Tanh&) {
            out.t = in.t;
            for (double& v : out.t.values()) v = std::tanh(v);
            if (cache) aux = out.t;
          },
          [&](const RNNCell& r) {
            out.t = rnn_forward(r, in.t, in.steps, params[p], params[p + 1], params[p + 2], aux);
            out.steps = 1;
          },
          [&](const Concat&) {},
          [&](const Flatten&) { out.t = in.t.reshaped({rows(in.t), row_width(in.t)}); },
          [&](const Reshape& r) { out.t = in.t.reshaped({rows(in.t), r.channels, r.height, r.width}); },
          [&](const NearestUpsample& u) { out.t = upsample_forward(u, in.t); }},
      layer);
  p += static_cast<std::size_t>(param_tensors(layer));
  if (cache) {
    cache->steps = in.steps;
    cache->argmax = std::move(argmax);
    cache->aux = std::move(aux);
    // Shape-only layers keep nothing; backward derives their input shapes from the spec.
    if (std::holds_alternative<Dense>(layer) || std::holds_alternative<Conv2D>(layer) ||
        std::holds_alternative<ReLU>(layer) || std::holds_alternative<RNNCell>(layer)) {
      cache->input = std::move(in.t);
    }
  }
  return out;
}

// `in_shape` is the layer input shape; `p` indexes this layer's first parameter tensor.
Tensor layer_backward(const Layer& layer, const LayerCache& cache, const std::vector<int>& in_shape,
                      const Params& params, std::size_t p, const Tensor& g, Params& grads, bool want_dx) {
  Tensor dx;
  Tensor* dxp = want_dx ? &dx : nullptr;
  std::visit(Overloaded{
                 [&](const Dense& d) { dense_backward(d, cache.input, params[p], g, grads[p], grads[p + 1], dxp); },
                 [&](const Conv2D& c) { conv_backward(c, cache.input, params[p], g, grads[p], grads[p + 1], dxp); },
                 [&](const MaxPool&) {
                   if (!want_dx) return;
                   dx = Tensor(in_shape);
                   for (std::size_t i = 0; i < g.size(); ++i) dx[static_cast<std::size_t>(cache.argmax[i])] += g[i];
                 },
                 [&](const ReLU&) {
                   if (!want_dx) return;
                   dx = g;
                   for (std::size_t i = 0; i < dx.size(); ++i) {
                     if (!(cache.input[i] > 0.0)) dx[i] = 0.0;
                   }
                 },
                 [&](const Tanh&) {
                   if (!want_dx) return;
                   dx = g;
                   for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - cache.aux[i] * cache.aux[i];
                 },
                 [&](const RNNCell& r) {
                   rnn_backward(r, cache.input, cache.steps, params[p], params[p + 1], cache.aux, g,
                                grads[p], grads[p + 1], grads[p + 2], dxp);
                 },
                 [&](const Concat&) {},
                 [&](const Flatten&) {
                   if (want_dx) dx = g.reshaped(in_shape);
                 },
                 [&](const Reshape&) {
                   if (want_dx) dx = g.reshaped(in_shape);
                 },
                 [&](const NearestUpsample& u) {
                   if (want_dx) dx = upsample_backward(u, in_shape, g);
                 }},
             layer);
  return dx;
}

std::vector<int> with_rows(int m, const std::vector<int>& feat) {
  std::vector<int> s{m};
  s.insert(s.end(), feat.begin(), feat.end());
  return s;
}

// Shapes of each layer's input, derived from the spec so caches need not hold them.
std::vector<std::vector<int>> layer_input_shapes(const std::vector<int>& first, int first_steps, int n,
                                                 const std::vector<Layer>& layers, std::size_t start) {
  std::vector<std::vector<int>> shapes;
  std::vector<int> feat = first;
  int steps = first_steps;
  for (std::size_t i = start; i < layers.size(); ++i) {
    shapes.push_back(with_rows(n * steps, feat));
    feat = apply_shape(layers[i], feat, steps, 0);
  }
  return shapes;
}

Tensor run_forward(const NetworkSpec& spec, const Params& params, const std::vector<Tensor>& inputs,
                   Cache* cache) {
  const Plan plan = make_plan(spec);
  const auto shapes = param_shapes(spec);
  if (params.size() != shapes.size()) {
    throw ShapeError(-1, "expected " + std::to_string(shapes.size()) + " parameter tensors, got " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].shape() != shapes[i]) {
      throw ShapeError(-1, "parameter " + std::to_string(i) + " has shape " + shape_string(params[i].shape()) +
                               ", expected " + shape_string(shapes[i]));
    }
  }
  if (inputs.size() != spec.inputs.size()) {
    throw ShapeError(-1, "expected " + std::to_string(spec.inputs.size()) + " inputs, got " +
                             std::to_string(inputs.size()));
  }
  int n = -1;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& s = spec.inputs[i];
    std::vector<int> expected = s.shape;
    if (s.steps > 1) expected.insert(expected.begin(), s.steps);
    const auto& got = inputs[i].shape();
    if (got.size() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), got.begin() + 1)) {
      throw ShapeError(-1, "input '" + s.name + "' has shape " + shape_string(got) + ", expected [N," +
                               shape_string(expected).substr(1));
    }
    if (n >= 0 && got[0] != n) throw ShapeError(-1, "inputs disagree on batch size");
    n = got[0];
  }
  if (n <= 0) throw ShapeError(-1, "empty batch");

  if (cache) {
    cache->batch = n;
    cache->branches.assign(spec.branches.size(), {});
    cache->trunk.clear();
    cache->branch_widths.clear();
    cache->branch_steps = plan.branch_steps;
  }
  std::size_t p = 0;
  std::vector<Act> branch_out;
  for (std::size_t bi = 0; bi < spec.branches.size(); ++bi) {
    const auto& br = spec.branches[bi];
    const auto& in_spec = spec.inputs[static_cast<std::size_t>(br.input)];
    Act act{inputs[static_cast<std::size_t>(br.input)].reshaped(with_rows(n * in_spec.steps, in_spec.shape)),
            in_spec.steps};
    for (const auto& layer : br.layers) {
      LayerCache* lc = nullptr;
      if (cache) lc = &cache->branches[bi].emplace_back();
      act = layer_forward(layer, std::move(act), params, p, lc);
    }
    if (cache) cache->branch_widths.push_back(row_width(act.t));
    branch_out.push_back(std::move(act));
  }

  Act act;
  std::size_t start = 0;
  if (plan.trunk_concat) {
    const auto& cat = std::get<Concat>(spec.trunk.front());
    const int m = rows(branch_out[static_cast<std::size_t>(cat.branches.front())].t);
    int width = 0;
    for (int b : cat.branches) width += row_width(branch_out[static_cast<std::size_t>(b)].t);
    act.t = Tensor({m, width});
    act.steps = branch_out[static_cast<std::size_t>(cat.branches.front())].steps;
    int offset = 0;
    for (int b : cat.branches) {
      const Tensor& src = branch_out[static_cast<std::size_t>(b)].t;
      const int wb = row_width(src);
      MapR(act.t.data(), m, width).middleCols(offset, wb) = CMapR(src.data(), m, wb);
      offset += wb;
    }
    if (cache) cache->trunk.emplace_back();
    start = 1;
  } else {
    act = std::move(branch_out.front());
  }
  for (std::size_t i = start; i < spec.trunk.size(); ++i) {
    LayerCache* lc = nullptr;
    if (cache) lc = &cache->trunk.emplace_back();
    act = layer_forward(spec.trunk[i], std::move(act), params, p, lc);
  }
  Tensor out = std::move(act.t);
  if (act.steps > 1) {
    std::vector<int> s{n, act.steps};
    s.insert(s.end(), plan.output.begin(), plan.output.end());
    out.reshape(s);
  } else {
    out.reshape(with_rows(n, plan.output));
  }
  if (!out.all_finite()) throw NumericError("forward produced a non-finite output");
  return out;
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(
      Overloaded{[](const Dense&) { return std::string("Dense"); },
                 [](const Conv2D&) { return std::string("Conv2D"); },
                 [](const MaxPool&) { return std::string("MaxPool"); },
                 [](const ReLU&) { return std::string("ReLU"); }, [](const Tanh&) { return std::string("Tanh"); },
                 [](const RNNCell&) { return std::string("RNNCell"); },
                 [](const Concat&) { return std::string("Concat"); },
                 [](const Flatten&) { return std::string("Flatten"); },
                 [](const Reshape&) { return std::string("Reshape"); },
                 [](const NearestUpsample&) { return std::string("NearestUpsample"); }},
      layer);
}

std::vector<int> infer_output_shape(const NetworkSpec& spec) {
  const Plan plan = make_plan(spec);
  std::vector<int> out = plan.output;
  if (plan.output_steps > 1) out.insert(out.begin(), plan.output_steps);
  return out;
}

std::vector<std::vector<int>> param_shapes(const NetworkSpec& spec) {
  std::vector<std::vector<int>> shapes;
  auto add = [&](const Layer& layer) {
    std::visit(Overloaded{[&](const Dense& d) {
                            shapes.push_back({d.out, d.in});
                            shapes.push_back({d.out});
                          },
                          [&](const Conv2D& c) {
                            shapes.push_back({c.out_channels, c.in_channels, c.kernel, c.kernel});
                            shapes.push_back({c.out_channels});
                          },
                          [&](const RNNCell& r) {
                            shapes.push_back({r.hidden, r.in});
                            shapes.push_back({r.hidden, r.hidden});
                            shapes.push_back({r.hidden});
                          },
                          [](const auto&) {}},
               layer);
  };
  for (const auto& br : spec.branches) {
    for (const auto& l : br.layers) add(l);
  }
  for (const auto& l : spec.trunk) add(l);
  return shapes;
}

std::size_t param_count(const NetworkSpec& spec) {
  std::size_t n = 0;
  for (const auto& s : param_shapes(spec)) n += shape_size(s);
  return n;
}

Params init_params(const NetworkSpec& spec, Rng& rng) {
  infer_output_shape(spec);
  Params params;
  auto uniform = [&](std::vector<int> shape, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = dist(rng);
    params.push_back(std::move(t));
  };
  auto add = [&](const Layer& layer) {
    std::visit(Overloaded{[&](const Dense& d) {
                            uniform({d.out, d.in}, d.in, d.out);
                            params.emplace_back(std::vector<int>{d.out});
                          },
                          [&](const Conv2D& c) {
                            const double area = static_cast<double>(c.kernel) * c.kernel;
                            uniform({c.out_channels, c.in_channels, c.kernel, c.kernel}, c.in_channels * area,
                                    c.out_channels * area);
                            params.emplace_back(std::vector<int>{c.out_channels});
                          },
                          [&](const RNNCell& r) {
                            uniform({r.hidden, r.in}, r.in, r.hidden);
                            uniform({r.hidden, r.hidden}, r.hidden, r.hidden);
                            params.emplace_back(std::vector<int>{r.hidden});
                          },
                          [](const auto&) {}},
               layer);
  };
  for (const auto& br : spec.branches) {
    for (const auto& l : br.layers) add(l);
  }
  for (const auto& l : spec.trunk) add(l);
  return params;
}

ForwardResult forward(const NetworkSpec& spec, const Params& params, const std::vector<Tensor>& inputs) {
  ForwardResult r;
  r.output = run_forward(spec, params, inputs, &r.cache);
  return r;
}

Tensor predict(const NetworkSpec& spec, const Params& params, const std::vector<Tensor>& inputs) {
  return run_forward(spec, params, inputs, nullptr);
}

Gradients backward(const NetworkSpec& spec, const Params& params, const Cache& cache, const Tensor& grad_out,
                   BackwardOptions options) {
  const Plan plan = make_plan(spec);
  const int n = cache.batch;
  std::vector<int> expected_out = with_rows(n, plan.output);
  if (plan.output_steps > 1) expected_out.insert(expected_out.begin() + 1, plan.output_steps);
  if (grad_out.shape() != expected_out) {
    throw ShapeError(-1, "grad_out has shape " + shape_string(grad_out.shape()) + ", expected " +
                             shape_string(expected_out));
  }
  if (cache.branches.size() != spec.branches.size()) throw ShapeError(-1, "cache does not match spec");

  Gradients grads;
  for (const auto& s : param_shapes(spec)) grads.params.emplace_back(s);
  grads.inputs.resize(spec.inputs.size());

  // Parameter offsets of each branch and of the trunk.
  std::vector<std::size_t> branch_p;
  std::size_t p = 0;
  for (const auto& br : spec.branches) {
    branch_p.push_back(p);
    for (const auto& l : br.layers) p += static_cast<std::size_t>(param_tensors(l));
  }
  const std::size_t trunk_p = p;

  // Trunk.
  const std::size_t start = plan.trunk_concat ? 1 : 0;
  std::vector<int> trunk_in_feat;
  int trunk_in_steps = 1;
  if (plan.trunk_concat) {
    int width = 0;
    for (const auto& f : plan.branch_out) width += f[0];
    trunk_in_feat = {width};
    trunk_in_steps = plan.branch_steps[0];
  } else {
    trunk_in_feat = plan.branch_out[0];
    trunk_in_steps = plan.branch_steps[0];
  }
  const auto trunk_shapes = layer_input_shapes(trunk_in_feat, trunk_in_steps, n, spec.trunk, start);
  std::vector<std::size_t> trunk_offsets;
  p = trunk_p;
  for (std::size_t i = start; i < spec.trunk.size(); ++i) {
    trunk_offsets.push_back(p);
    p += static_cast<std::size_t>(param_tensors(spec.trunk[i]));
  }
  Tensor g = grad_out.reshaped(with_rows(n * plan.output_steps, plan.output));
  for (std::size_t i = spec.trunk.size(); i-- > start;) {
    const std::size_t k = i - start;
    g = layer_backward(spec.trunk[i], cache.trunk[i], trunk_shapes[k], params, trunk_offsets[k], g, grads.params,
                       true);
  }

  // Split into branch gradients.
  std::vector<Tensor> branch_grads(spec.branches.size());
  if (plan.trunk_concat) {
    const auto& cat = std::get<Concat>(spec.trunk.front());
    const int m = n * trunk_in_steps;
    const int width = trunk_in_feat[0];
    int offset = 0;
    for (int b : cat.branches) {
      const int wb = plan.branch_out[static_cast<std::size_t>(b)][0];
      Tensor gb({m, wb});
      MapR(gb.data(), m, wb) = CMapR(g.data(), m, width).middleCols(offset, wb);
      branch_grads[static_cast<std::size_t>(b)] = std::move(gb);
      offset += wb;
    }
  } else {
    branch_grads[0] = std::move(g);
  }

  for (std::size_t bi = 0; bi < spec.branches.size(); ++bi) {
    const auto& br = spec.branches[bi];
    const auto& in_spec = spec.inputs[static_cast<std::size_t>(br.input)];
    const auto shapes = layer_input_shapes(in_spec.shape, in_spec.steps, n, br.layers, 0);
    std::vector<std::size_t> offsets;
    std::size_t q = branch_p[bi];
    for (const auto& l : br.layers) {
      offsets.push_back(q);
      q += static_cast<std::size_t>(param_tensors(l));
    }
    Tensor gb = std::move(branch_grads[bi]);
    for (std::size_t i = br.layers.size(); i-- > 0;) {
      const bool want_dx = i > 0 || options.input_grads;
      gb = layer_backward(br.layers[i], cache.branches[bi][i], shapes[i], params, offsets[i], gb, grads.params,
                          want_dx);
    }
    if (options.input_grads) {
      std::vector<int> s{n};
      if (in_spec.steps > 1) s.push_back(in_spec.steps);
      s.insert(s.end(), in_spec.shape.begin(), in_spec.shape.end());
      Tensor gi = gb.reshaped(s);
      auto& slot = grads.inputs[static_cast<std::size_t>(br.input)];
      if (slot.size() == 0) {
        slot = std::move(gi);
      } else {
        for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += gi[i];
      }
    }
  }
  return grads;
}

Tensor rnn_step(const Tensor& w, const Tensor& u, const Tensor& b, const Tensor& x, const Tensor& h) {
  if (w.rank() != 2 || u.rank() != 2 || b.rank() != 1 || x.rank() != 1 || h.rank() != 1) {
    throw ShapeError(-1, "rnn_step expects W[h,in], U[h,h], b[h], x[in], h[h]");
  }
  const int hd = w.dim(0), d = w.dim(1);
  if (u.dim(0) != hd || u.dim(1) != hd || b.dim(0) != hd || x.dim(0) != d || h.dim(0) != hd) {
    throw ShapeError(-1, "rnn_step dimension mismatch");
  }
  Tensor out({hd});
  Eigen::Map<Eigen::VectorXd> o(out.data(), hd);
  o.noalias() = CMapR(w.data(), hd, d) * Eigen::Map<const Eigen::VectorXd>(x.data(), d);
  o.noalias() += CMapR(u.data(), hd, hd) * Eigen::Map<const Eigen::VectorXd>(h.data(), hd);
  o += Eigen::Map<const Eigen::VectorXd>(b.data(), hd);
  for (double& v : out.values()) v = std::tanh(v);
  return out;
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(-1, "mse_loss: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  }
  LossResult r;
  r.grad = Tensor(pred.shape());
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    r.loss += e * e;
    r.grad[i] = 2.0 * e * inv;
  }
  r.loss *= inv;
  if (!std::isfinite(r.loss)) throw NumericError("mse_loss is not finite");
  return r;
}

}  // namespace visionrf::nn
