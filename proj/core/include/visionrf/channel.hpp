// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "visionrf/scene.hpp"
#include "visionrf/seed.hpp"

namespace visionrf {

inline constexpr double kSpeedOfLight = 299'792'458.0;

struct LinkParams {
  double carrier_frequency_hz = 60e9;
  double tx_power_dbm = 10.0;
  double tx_gain_dbi = 0.0;
  double rx_gain_dbi = 0.0;
  double shadowing_sigma_db = 0.0;
  // AR(1) coefficient of the shadowing process; 0 gives i.i.d. draws per tick.
  double shadowing_rho = 0.0;
  // A_max: attenuation of one pedestrian blocking the full diameter.
  double attenuation_per_blocker_db = 20.0;
  double attenuation_cap_db = 40.0;

  // Throws DomainError naming the first violated invariant.
  void validate() const;
  friend bool operator==(const LinkParams&, const LinkParams&) = default;
};

// Downlink from a base station (tx) to the station (rx).
struct Link {
  int id = 0;
  Node tx;
  Node rx;
  LinkParams params;
  friend bool operator==(const Link&, const Link&) = default;
};

// Friis received power: ptx + gtx + grx - 20 log10(4 pi d f / c).
double free_space_power(double distance_m, const LinkParams& params);

// min(cap, sum_i A_max * min(1, chord_i / (2 r_i))).
double blockage_attenuation(std::span<const Crossing> crossings,
                            std::span<const Pedestrian> pedestrians, const LinkParams& params);

// Log-normal shadowing in dB. Stationary N(0, sigma^2) with lag-one correlation rho.
class ShadowingProcess {
 public:
  ShadowingProcess(double sigma_db, double rho);
  double next(Rng& rng);

 private:
  double sigma_;
  double rho_;
  double state_ = 0.0;
  bool started_ = false;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct LinkSample {
  double rss_dbm = 0.0;
  double attenuation_db = 0.0;
};

// Deterministic part of the link: Friis power and blockage, no shadowing.
LinkSample link_power(const Scene& scene, const Link& link, BlockageOptions options = {});

// rss = free_space_power(d) - blockage + n, n ~ N(0, sigma^2) i.i.d. from `rng`.
double sample_rss(const Scene& scene, const Link& link, Rng& rng, BlockageOptions options = {});

// Same with an explicit (possibly correlated) shadowing process.
LinkSample sample_link(const Scene& scene, const Link& link, ShadowingProcess& shadowing, Rng& rng,
                       BlockageOptions options = {});

struct PowerTrace {
  int link_id = 0;
  std::uint64_t first_tick = 0;
  double dt = 1.0 / 30.0;
  std::vector<double> rss_dbm;  // one sample per tick starting at first_tick

  std::uint64_t tick_at(std::size_t i) const { return first_tick + i; }
  friend bool operator==(const PowerTrace&, const PowerTrace&) = default;
};

}  // namespace visionrf
