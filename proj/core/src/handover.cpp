// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/handover.hpp"

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

// RF observations are SNR in units of 20 dB.
constexpr double kRssScale = 20.0;

// Keeps evaluation episodes disjoint from the training stream of the same seed.
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kTrainStream = 0x747261696e;

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

QDims qdims(const ScenarioConfig& c) {
  const auto& h = c.handover;
  QDims d;
  d.width = c.camera.width / h.frame_downsample;
  d.height = c.camera.height / h.frame_downsample;
  d.tower = h.tower;
  d.feature_width = h.feature_width;
  d.hidden = h.hidden;
  d.n_bs = static_cast<int>(c.links.size());
  return d;
}

int argmax2(const std::array<double, 2>& q) { return q[1] > q[0] ? 1 : 0; }

struct Stored {
  std::shared_ptr<const SceneStream> stream;
  HandoverState state;
  int action = 0;
  double reward = 0.0;  // scaled
  HandoverState next;
};

}  // namespace

double throughput_of(double rss_dbm, const ThroughputParams& p) {
  if (std::isnan(rss_dbm) || rss_dbm == -std::numeric_limits<double>::infinity()) return 0.0;
  const double snr = std::pow(10.0, (rss_dbm - p.noise_floor_dbm) / 10.0);
  const double r = p.b_eff_mbps * std::log2(1.0 + snr);
  return std::max(0.0, std::min(p.r_max_mbps, r));
}

EnvParams env_params(const ScenarioConfig& c) {
  return EnvParams{{c.handover.noise_floor_dbm, c.handover.b_eff_mbps, c.handover.r_max_mbps}, c.handover.t_ho,
                   c.world.dt};
}

SceneStream make_stream(const Episode& ep, int frame_downsample) {
  SceneStream s;
  s.frames.reserve(ep.frames.size());
  for (const auto& f : ep.frames) s.frames.push_back(frame_downsample == 1 ? f : downsample(f, frame_downsample));
  for (std::size_t l = 0; l < ep.traces.size(); ++l) {
    s.rss.push_back(ep.traces[l].rss_dbm);
    std::vector<std::uint8_t> b(ep.labels[l].size());
    for (std::size_t t = 0; t < b.size(); ++t) b[t] = ep.labels[l][t] == Condition::kNlos;
    s.blocked.push_back(std::move(b));
  }
  return s;
}

Transition env_step(const HandoverState& state, Action action, const SceneStream& stream, const EnvParams& p) {
  const int n_bs = static_cast<int>(stream.rss.size());
  if (state.tick < 0 || state.tick + 1 >= stream.n_ticks()) throw DomainError("env_step past the end of the stream");
  if (state.associated < 0 || state.associated >= n_bs) throw DomainError("env_step: invalid associated BS");
  if (state.interruption_remaining < 0) throw DomainError("env_step: negative interruption");
  Transition tr;
  tr.state = state;
  tr.action = action;
  HandoverState next = state;
  next.tick = state.tick + 1;
  if (action == Action::kHandover && state.interruption_remaining == 0) {
    next.associated = (state.associated + 1) % n_bs;
    next.interruption_remaining = p.t_ho;
    tr.switched = true;
  }
  if (next.interruption_remaining > 0) {
    tr.reward = 0.0;
    --next.interruption_remaining;
  } else {
    const double rss = stream.rss[static_cast<std::size_t>(next.associated)][static_cast<std::size_t>(next.tick)];
    tr.reward = throughput_of(rss, p.throughput) * p.dt;
  }
  tr.next_state = next;
  tr.done = next.tick + 1 >= stream.n_ticks();
  return tr;
}

std::string_view observation_name(Observation o) { return o == Observation::kImg ? "IMG" : "RF"; }

Observation parse_observation(std::string_view name) {
  if (name == "IMG") return Observation::kImg;
  if (name == "RF") return Observation::kRf;
  throw ConfigError("handover.observation", "unknown observation '" + std::string(name) + "'");
}

nn::NetworkSpec build_qnet(Observation observation, const QDims& d) {
  if (d.n_bs < 2 || d.hidden < 1) throw DomainError("q-network needs >= 2 BSs and a positive hidden width");
  nn::NetworkSpec spec;
  const nn::InputSpec aux{"aux", {2}, 1};
  if (observation == Observation::kImg) {
    auto tower = detail::conv_tower(1, d.height, d.width, d.tower, d.feature_width);
    tower.push_back(nn::ReLU{});
    spec.inputs = {{"frame", {1, d.height, d.width}, 1}, aux};
    spec.branches = {{0, tower}, {1, {}}};
    spec.trunk = {nn::Concat{{0, 1}}, nn::Dense{d.feature_width + 2, d.hidden}, nn::ReLU{}, nn::Dense{d.hidden, 2}};
  } else {
    spec.inputs = {{"rss", {d.n_bs}, 1}, aux};
    spec.branches = {{0, {}}, {1, {}}};
    spec.trunk = {nn::Concat{{0, 1}}, nn::Dense{d.n_bs + 2, d.hidden}, nn::ReLU{},
                  nn::Dense{d.hidden, d.hidden}, nn::ReLU{}, nn::Dense{d.hidden, 2}};
  }
  nn::infer_output_shape(spec);
  return spec;
}

nn::Checkpoint QModel::to_checkpoint() const {
  nn::Checkpoint c;
  c.spec = spec;
  c.params = params;
  c.seed = seed;
  c.step = step;
  c.tags["model"] = "qnet";
  c.tags["observation"] = std::string(observation_name(observation));
  auto& h = c.hyperparameters;
  h["width"] = dims.width;
  h["height"] = dims.height;
  h["conv1_channels"] = dims.tower.conv1_channels;
  h["conv1_kernel"] = dims.tower.conv1_kernel;
  h["conv1_stride"] = dims.tower.conv1_stride;
  h["conv2_channels"] = dims.tower.conv2_channels;
  h["conv2_kernel"] = dims.tower.conv2_kernel;
  h["conv2_stride"] = dims.tower.conv2_stride;
  h["feature_width"] = dims.feature_width;
  h["hidden"] = dims.hidden;
  h["n_bs"] = dims.n_bs;
  h["noise_floor_dbm"] = env.throughput.noise_floor_dbm;
  h["b_eff_mbps"] = env.throughput.b_eff_mbps;
  h["r_max_mbps"] = env.throughput.r_max_mbps;
  h["t_ho"] = env.t_ho;
  h["dt"] = env.dt;
  h["far_clip"] = far_clip;
  return c;
}

QModel QModel::from_checkpoint(const nn::Checkpoint& c) {
  auto it = c.tags.find("model");
  if (it == c.tags.end() || it->second != "qnet") throw FormatError("checkpoint is not a q-network");
  QModel m;
  m.observation = parse_observation(c.tags.at("observation"));
  const auto& h = c.hyperparameters;
  m.dims.width = geti(h, "width");
  m.dims.height = geti(h, "height");
  m.dims.tower = {geti(h, "conv1_channels"), geti(h, "conv1_kernel"), geti(h, "conv1_stride"),
                  geti(h, "conv2_channels"), geti(h, "conv2_kernel"), geti(h, "conv2_stride")};
  m.dims.feature_width = geti(h, "feature_width");
  m.dims.hidden = geti(h, "hidden");
  m.dims.n_bs = geti(h, "n_bs");
  m.env = {{getd(h, "noise_floor_dbm"), getd(h, "b_eff_mbps"), getd(h, "r_max_mbps")}, geti(h, "t_ho"), getd(h, "dt")};
  m.far_clip = getd(h, "far_clip");
  m.spec = build_qnet(m.observation, m.dims);
  if (!(m.spec == c.spec)) throw FormatError("checkpoint spec does not match its q-network dims");
  m.params = c.params;
  m.seed = c.seed;
  m.step = c.step;
  return m;
}

std::vector<nn::Tensor> q_inputs(const QModel& m, std::span<const SceneStream* const> streams,
                                 std::span<const HandoverState> states) {
  if (streams.size() != states.size()) throw ShapeError(-1, "q_inputs: stream/state count mismatch");
  const int b = static_cast<int>(states.size());
  std::vector<nn::Tensor> out;
  if (m.observation == Observation::kImg) {
    const std::size_t px = static_cast<std::size_t>(m.dims.width) * m.dims.height;
    nn::Tensor f({b, 1, m.dims.height, m.dims.width});
    double* dst = f.data();
    for (int i = 0; i < b; ++i) {
      const DepthFrame& fr = streams[i]->frames.at(static_cast<std::size_t>(states[i].tick));
      if (fr.width != m.dims.width || fr.height != m.dims.height) throw ShapeError(-1, "frame size differs from the q-network");
      for (std::size_t k = 0; k < px; ++k) dst[k] = fr.depth[k] / m.far_clip;
      dst += px;
    }
    out.push_back(std::move(f));
  } else {
    nn::Tensor r({b, m.dims.n_bs});
    for (int i = 0; i < b; ++i) {
      if (static_cast<int>(streams[i]->rss.size()) != m.dims.n_bs) throw ShapeError(-1, "stream BS count differs");
      for (int k = 0; k < m.dims.n_bs; ++k) {
        const double rss = streams[i]->rss[static_cast<std::size_t>(k)][static_cast<std::size_t>(states[i].tick)];
        r[static_cast<std::size_t>(i * m.dims.n_bs + k)] = (rss - m.env.throughput.noise_floor_dbm) / kRssScale;
      }
    }
    out.push_back(std::move(r));
  }
  nn::Tensor aux({b, 2});
  for (int i = 0; i < b; ++i) {
    aux[static_cast<std::size_t>(2 * i)] = states[i].associated;
    aux[static_cast<std::size_t>(2 * i + 1)] =
        m.env.t_ho > 0 ? static_cast<double>(states[i].interruption_remaining) / m.env.t_ho : 0.0;
  }
  out.push_back(std::move(aux));
  return out;
}

std::array<double, 2> q_values(const QModel& m, const SceneStream& stream, const HandoverState& state) {
  const SceneStream* sp = &stream;
  const nn::Tensor q = nn::predict(m.spec, m.params, q_inputs(m, std::span(&sp, 1), std::span(&state, 1)));
  return {q[0], q[1]};
}

double bellman_target(double reward, double gamma, double max_next_q) { return reward + gamma * max_next_q; }

double epsilon_at(std::int64_t step, std::int64_t total_steps, double start, double end) {
  const double half = static_cast<double>(total_steps) / 2.0;
  if (half <= 0.0 || static_cast<double>(step) >= half) return end;
  return start + (end - start) * static_cast<double>(step) / half;
}

DqnConfig dqn_config(const ScenarioConfig& c) {
  const auto& h = c.handover;
  return DqnConfig{h.gamma,       h.replay_capacity, h.target_sync,   h.lr,         h.batch,
                   h.train_steps, h.learning_starts, h.epsilon_start, h.epsilon_end};
}

DqnResult dqn_train(const ScenarioConfig& config, Observation observation, const DqnConfig& tc, std::uint64_t seed) {
  config.validate();
  if (config.links.size() < 2) throw ConfigError("links", "handover needs two base stations");
  if (tc.batch < 1 || tc.replay_capacity < 1 || tc.target_sync < 1 || tc.train_steps < 0) {
    throw DomainError("dqn_train: invalid training config");
  }
  DqnResult result;
  QModel& m = result.model;
  m.observation = observation;
  m.dims = qdims(config);
  m.env = env_params(config);
  m.far_clip = config.camera.far_clip;
  m.seed = seed;
  m.spec = build_qnet(observation, m.dims);
  Rng init_rng(derive_seed(seed, 0));
  m.params = nn::init_params(m.spec, init_rng);
  nn::Params target = m.params;
  nn::AdamState adam = nn::make_adam_state(m.params, {tc.lr});
  Rng act_rng(derive_seed(seed, 1));
  Rng replay_rng(derive_seed(seed, 2));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double reward_scale = 1.0 / (m.env.throughput.r_max_mbps * m.env.dt);

  const std::uint64_t episode_master = derive_seed(seed, kTrainStream);
  std::uint64_t episode_index = 0;
  auto next_stream = [&] {
    return std::make_shared<const SceneStream>(make_stream(
        generate_episode(config, derive_seed(episode_master, episode_index++)), config.handover.frame_downsample));
  };
  std::shared_ptr<const SceneStream> stream = next_stream();
  HandoverState state;
  double episode_return = 0.0;
  ReplayBuffer<Stored> replay(static_cast<std::size_t>(tc.replay_capacity));

  std::vector<const SceneStream*> batch_streams(static_cast<std::size_t>(tc.batch));
  std::vector<HandoverState> batch_states(static_cast<std::size_t>(tc.batch));
  std::vector<HandoverState> batch_next(static_cast<std::size_t>(tc.batch));
  std::vector<std::size_t> picks(static_cast<std::size_t>(tc.batch));

  for (std::int64_t step = 0; step < tc.train_steps; ++step) {
    const double eps = epsilon_at(step, tc.train_steps, tc.epsilon_start, tc.epsilon_end);
    Action action;
    if (unit(act_rng) < eps) {
      action = unit(act_rng) < 0.5 ? Action::kStay : Action::kHandover;
    } else {
      action = static_cast<Action>(argmax2(q_values(m, *stream, state)));
    }
    const Transition tr = env_step(state, action, *stream, m.env);
    replay.push(Stored{stream, state, static_cast<int>(action), tr.reward * reward_scale, tr.next_state});
    episode_return += tr.reward;
    state = tr.next_state;
    if (tr.done) {
      result.episode_returns.push_back(episode_return);
      episode_return = 0.0;
      stream = next_stream();
      state = HandoverState{};
    }

    if (step >= tc.learning_starts && replay.size() >= static_cast<std::size_t>(tc.batch)) {
      std::uniform_int_distribution<std::size_t> pick(0, replay.size() - 1);
      for (int i = 0; i < tc.batch; ++i) {
        picks[static_cast<std::size_t>(i)] = pick(replay_rng);
        const Stored& s = replay[picks[static_cast<std::size_t>(i)]];
        batch_streams[static_cast<std::size_t>(i)] = s.stream.get();
        batch_states[static_cast<std::size_t>(i)] = s.state;
        batch_next[static_cast<std::size_t>(i)] = s.next;
      }
      // Time-limit ends are truncations, so every target bootstraps.
      const nn::Tensor next_q = nn::predict(m.spec, target, q_inputs(m, batch_streams, batch_next));
      const nn::ForwardResult fr = nn::forward(m.spec, m.params, q_inputs(m, batch_streams, batch_states));
      nn::Tensor grad(fr.output.shape());
      double loss = 0.0;
      for (int i = 0; i < tc.batch; ++i) {
        const Stored& s = replay[picks[static_cast<std::size_t>(i)]];
        const std::size_t r = static_cast<std::size_t>(2 * i);
        const double y = bellman_target(s.reward, tc.gamma, std::max(next_q[r], next_q[r + 1]));
        const double e = fr.output[r + static_cast<std::size_t>(s.action)] - y;
        loss += e * e;
        grad[r + static_cast<std::size_t>(s.action)] = 2.0 * e / tc.batch;
      }
      if (!std::isfinite(loss)) throw NumericError("dqn_train: non-finite loss at step " + std::to_string(step));
      const nn::Gradients g = nn::backward(m.spec, m.params, fr.cache, grad, {false});
      nn::adam_step(m.params, g.params, adam);
      ++m.step;
    }
    if ((step + 1) % tc.target_sync == 0) target = m.params;
  }
  return result;
}

Action Policy::act(const SceneStream& stream, const HandoverState& state) const {
  switch (kind) {
    case Kind::kQModel:
      if (!model) throw DomainError("policy has no model");
      return static_cast<Action>(argmax2(q_values(*model, stream, state)));
    case Kind::kAlwaysStay:
      return Action::kStay;
    case Kind::kEveryTick:
      return Action::kHandover;
    case Kind::kRssThreshold: {
      const auto t = static_cast<std::size_t>(state.tick);
      const double serving = stream.rss[static_cast<std::size_t>(state.associated)][t];
      double best_other = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < stream.rss.size(); ++k) {
        if (static_cast<int>(k) != state.associated) best_other = std::max(best_other, stream.rss[k][t]);
      }
      return best_other > serving + threshold_db ? Action::kHandover : Action::kStay;
    }
  }
  return Action::kStay;
}

EpisodeLog run_episode(const Policy& policy, const SceneStream& stream, const EnvParams& params) {
  EpisodeLog log;
  HandoverState state;
  double total = 0.0;
  while (state.tick + 1 < stream.n_ticks()) {
    const Transition tr = env_step(state, policy.act(stream, state), stream, params);
    if (tr.switched) {
      log.handover_ticks.push_back(state.tick);
      log.handover_from.push_back(state.associated);
    }
    log.rewards.push_back(tr.reward);
    total += tr.reward;
    state = tr.next_state;
  }
  const double seconds = static_cast<double>(log.rewards.size()) * params.dt;
  log.throughput_mbps = seconds > 0.0 ? total / seconds : 0.0;
  return log;
}

std::vector<int> lead_times(const SceneStream& stream, const EpisodeLog& log, int window) {
  std::vector<int> leads;
  for (std::size_t l = 0; l < stream.blocked.size(); ++l) {
    const auto& b = stream.blocked[l];
    for (std::size_t t = 1; t < b.size(); ++t) {
      if (!b[t] || b[t - 1]) continue;
      const int tb = static_cast<int>(t);
      int best = std::numeric_limits<int>::max();
      for (std::size_t k = 0; k < log.handover_ticks.size(); ++k) {
        if (log.handover_from[k] != static_cast<int>(l)) continue;
        const int lead = tb - log.handover_ticks[k];
        if (std::abs(lead) > window) continue;
        if (best == std::numeric_limits<int>::max() || std::abs(lead) < std::abs(best) ||
            (std::abs(lead) == std::abs(best) && lead > best)) {
          best = lead;
        }
      }
      if (best != std::numeric_limits<int>::max()) leads.push_back(best);
    }
  }
  return leads;
}

PolicyReport evaluate_policy(const ScenarioConfig& config, const Policy& policy, int n_episodes, std::uint64_t seed) {
  config.validate();
  if (n_episodes < 1) throw DomainError("evaluate_policy needs at least one episode");
  const EnvParams env = policy.kind == Policy::Kind::kQModel && policy.model ? policy.model->env : env_params(config);
  PolicyReport r;
  r.policy = policy.name;
  double thr = 0.0;
  long lead_sum = 0;
  const std::uint64_t master = derive_seed(seed, kEvalStream);
  for (int i = 0; i < n_episodes; ++i) {
    const SceneStream stream = make_stream(generate_episode(config, derive_seed(master, static_cast<std::uint64_t>(i))),
                                           config.handover.frame_downsample);
    const EpisodeLog log = run_episode(policy, stream, env);
    thr += log.throughput_mbps;
    r.handover_count += static_cast<std::int64_t>(log.handover_ticks.size());
    for (int lead : lead_times(stream, log, config.handover.lead_window)) {
      lead_sum += lead;
      ++r.lead_events;
    }
  }
  r.avg_throughput_mbps = thr / n_episodes;
  r.mean_lead_ticks = r.lead_events ? static_cast<double>(lead_sum) / static_cast<double>(r.lead_events)
                                    : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_policy_report(const std::filesystem::path& path, std::span<const PolicyReport> reports) {
  CsvTable t;
  t.header = {"policy", "avg_throughput_mbps", "handover_count", "mean_lead_ticks"};
  for (const auto& r : reports) {
    t.rows.push_back({r.policy, format_double(r.avg_throughput_mbps), std::to_string(r.handover_count),
                      format_double(r.mean_lead_ticks)});
  }
  write_csv(path, t);
}

SceneStream approach_stream(const ScenarioConfig& config, int lead_in_ticks, int tail_ticks, int& crossing_tick) {
  if (config.links.empty()) throw ConfigError("links", "no BS 1 link");
  ScenarioConfig c = config;
  for (auto& l : c.links) l.params.shadowing_sigma_db = 0.0;
  const int n = lead_in_ticks + tail_ticks;
  c.world.duration = n * c.world.dt;
  const Vec2 a = c.station.position;
  const Vec2 b = c.links.front().position;
  const Vec2 mid = 0.5 * (a + b);
  const double len = distance(a, b);
  const double v = c.handover.approach_speed;
  const double r = c.pedestrians.radius;
  const double start = r + (lead_in_ticks - 0.5) * v * c.world.dt;
  // Approach from the camera's side of the link when the walker fits there; a link seen
  // end-on has no camera side, so either side that stays inside the room will do.
  const Vec2 cam{c.camera.position.x, c.camera.position.y};
  Vec2 normal{-(b.y - a.y) / len, (b.x - a.x) / len};
  if (dot(cam - mid, normal) < 0.0) normal = -1.0 * normal;
  const Rect inner{c.world.bounds.x_min + r, c.world.bounds.y_min + r, c.world.bounds.x_max - r,
                   c.world.bounds.y_max - r};
  if (!inner.contains(mid + start * normal)) normal = -1.0 * normal;
  Pedestrian p;
  p.id = 1;
  p.position = mid + start * normal;
  p.velocity = -v * normal;
  p.radius = r;
  p.height = c.pedestrians.height;
  if (!inner.contains(p.position)) {
    throw ConfigError("handover.approach_speed", "scripted walker does not fit on either side of the BS 1 link");
  }
  c.world.v_max = std::max(c.world.v_max, v);
  std::vector<Node> bss;
  for (const auto& l : c.links) bss.push_back(Node{l.id, l.position, l.height});
  Scene scene(c.world.bounds, std::move(bss), c.station, {p}, c.world.dt, c.world.v_max);
  Rng rng(0);
  const SceneStream s = make_stream(record_episode(c, std::move(scene), rng, 0), c.handover.frame_downsample);
  crossing_tick = -1;
  for (int t = 0; t < s.n_ticks(); ++t) {
    if (s.blocked[0][static_cast<std::size_t>(t)]) {
      crossing_tick = t;
      break;
    }
  }
  if (crossing_tick < 0) throw DomainError("scripted walker never crosses the BS 1 link");
  return s;
}

std::vector<QTraceRow> q_trace(const QModel& model, const ScenarioConfig& config) {
  int crossing = 0;
  const SceneStream s = approach_stream(config, 45, 30, crossing);
  std::vector<QTraceRow> rows;
  for (int t = 0; t < s.n_ticks(); ++t) {
    const auto q = q_values(model, s, HandoverState{t, 0, 0});
    rows.push_back({t, crossing - t, q[0], q[1]});
  }
  return rows;
}

void write_qtrace(const std::filesystem::path& path, std::span<const QTraceRow> rows) {
  CsvTable t;
  t.header = {"tick", "q_stay", "q_handover"};
  for (const auto& r : rows) t.rows.push_back({std::to_string(r.tick), format_double(r.q_stay), format_double(r.q_handover)});
  write_csv(path, t);
}

}  // namespace visionrf
