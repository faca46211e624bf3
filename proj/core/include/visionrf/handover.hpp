// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visionrf/config.hpp"
#include "visionrf/dataset.hpp"
#include "visionrf/nn/checkpoint.hpp"
#include "visionrf/nn/network.hpp"

namespace visionrf {

struct ThroughputParams {
  double noise_floor_dbm = -90.0;
  double b_eff_mbps = 20.0;
  double r_max_mbps = 150.0;
};

// min(R_max, B_eff * log2(1 + SNR)), floored at 0; -inf rss gives 0.
double throughput_of(double rss_dbm, const ThroughputParams& params);

enum class Action : int { kStay = 0, kHandover = 1 };

struct EnvParams {
  ThroughputParams throughput;
  int t_ho = 6;
  double dt = 1.0 / 30.0;
};

EnvParams env_params(const ScenarioConfig& config);

// Pre-rendered episode seen by the environment: downsampled frames, rss per BS and ground-truth
// blockage per BS, all indexed by tick.
struct SceneStream {
  std::vector<DepthFrame> frames;
  std::vector<std::vector<double>> rss;           // [bs][tick]
  std::vector<std::vector<std::uint8_t>> blocked; // [bs][tick]
  int n_ticks() const { return static_cast<int>(frames.size()); }
};

SceneStream make_stream(const Episode& episode, int frame_downsample);

struct HandoverState {
  int tick = 0;
  int associated = 0;              // BS index (0 = BS 1)
  int interruption_remaining = 0;  // ticks
  friend bool operator==(const HandoverState&, const HandoverState&) = default;
};

struct Transition {
  HandoverState state;
  Action action = Action::kStay;
  double reward = 0.0;  // megabits delivered over the next tick
  HandoverState next_state;
  bool done = false;    // next_state is the last tick of the stream
  bool switched = false;
};

// The action is taken at state.tick and the stream advances one tick. A HANDOVER with no
// interruption pending switches BS and starts T_ho interruption ticks; the reward is 0 on those
// ticks, otherwise throughput_of(rss of the serving BS at the new tick) * dt. HANDOVER during an
// interruption is treated as STAY.
Transition env_step(const HandoverState& state, Action action, const SceneStream& stream, const EnvParams& params);

enum class Observation { kImg, kRf };

std::string_view observation_name(Observation o);
Observation parse_observation(std::string_view name);

struct QDims {
  int width = 32;   // downsampled frame
  int height = 24;
  ConvTowerConfig tower;
  int feature_width = 32;
  int hidden = 64;
  int n_bs = 2;
};

// IMG: conv tower on the frame, concatenated with (associated, interruption fraction), two
// Dense layers to a 2-wide head. RF: the rss of every BS plus the same aux inputs.
nn::NetworkSpec build_qnet(Observation observation, const QDims& dims);

struct QModel {
  Observation observation = Observation::kImg;
  QDims dims;
  nn::NetworkSpec spec;
  nn::Params params;
  EnvParams env;
  double far_clip = 12.0;
  std::uint64_t seed = 0;
  std::int64_t step = 0;

  nn::Checkpoint to_checkpoint() const;
  static QModel from_checkpoint(const nn::Checkpoint& ckpt);
};

// Network inputs for a batch of states drawn from (possibly different) streams.
std::vector<nn::Tensor> q_inputs(const QModel& model, std::span<const SceneStream* const> streams,
                                 std::span<const HandoverState> states);

// Q(s, STAY), Q(s, HANDOVER).
std::array<double, 2> q_values(const QModel& model, const SceneStream& stream, const HandoverState& state);

// r + gamma * max_a' Q_target(s', a').
double bellman_target(double reward, double gamma, double max_next_q);

// Fixed-capacity FIFO of transitions; pushing at capacity evicts the oldest.
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
  void push(T item) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(item));
  }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const T& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

// Linear decay from start to end over the first half of training, then constant.
double epsilon_at(std::int64_t step, std::int64_t total_steps, double start, double end);

struct DqnConfig {
  double gamma = 0.95;
  int replay_capacity = 10000;
  int target_sync = 500;
  double lr = 1e-3;
  int batch = 32;
  int train_steps = 20000;
  int learning_starts = 500;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
};

DqnConfig dqn_config(const ScenarioConfig& config);

struct DqnResult {
  QModel model;
  std::vector<double> episode_returns;  // megabits per training episode
};

// Trains on freshly generated episodes of `config`'s scenario; deterministic given `seed`.
DqnResult dqn_train(const ScenarioConfig& config, Observation observation, const DqnConfig& train,
                    std::uint64_t seed);

// Policy = greedy QModel or a named baseline.
struct Policy {
  enum class Kind { kQModel, kAlwaysStay, kRssThreshold, kEveryTick } kind = Kind::kAlwaysStay;
  const QModel* model = nullptr;
  double threshold_db = 6.0;  // kRssThreshold: hand over when the serving rss is this far below the other BS
  std::string name;
  Action act(const SceneStream& stream, const HandoverState& state) const;
};

struct EpisodeLog {
  std::vector<double> rewards;       // per tick, megabits
  std::vector<int> handover_ticks;   // ticks where a switch happened
  std::vector<int> handover_from;    // BS left at each switch
  double throughput_mbps = 0.0;      // mean delivered rate
};

EpisodeLog run_episode(const Policy& policy, const SceneStream& stream, const EnvParams& params);

// For every blockage onset (link L blocked at t_b, not at t_b - 1) the nearest switch away from L
// within |t_h - t_b| <= window (earlier on ties) contributes t_b - t_h. Returns the contributions.
std::vector<int> lead_times(const SceneStream& stream, const EpisodeLog& log, int window);

struct PolicyReport {
  std::string policy;
  double avg_throughput_mbps = 0.0;
  std::int64_t handover_count = 0;
  double mean_lead_ticks = 0.0;  // NaN when no event had a nearby handover
  std::size_t lead_events = 0;
};

PolicyReport evaluate_policy(const ScenarioConfig& config, const Policy& policy, int n_episodes, std::uint64_t seed);

void write_policy_report(const std::filesystem::path& path, std::span<const PolicyReport> reports);

// Scripted approach: one pedestrian walks at `approach_speed` perpendicular toward BS 1's LOS
// segment, no shadowing. Row per tick with ticks_to_crossing = crossing tick - tick.
struct QTraceRow {
  int tick = 0;
  int ticks_to_crossing = 0;
  double q_stay = 0.0;
  double q_handover = 0.0;
};

SceneStream approach_stream(const ScenarioConfig& config, int lead_in_ticks, int tail_ticks, int& crossing_tick);
std::vector<QTraceRow> q_trace(const QModel& model, const ScenarioConfig& config);
void write_qtrace(const std::filesystem::path& path, std::span<const QTraceRow> rows);

}  // namespace visionrf
