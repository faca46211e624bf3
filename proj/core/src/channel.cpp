// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "visionrf/error.hpp"

namespace visionrf {

void LinkParams::validate() const {
  auto fail = [](const std::string& what) { throw DomainError("invalid link params: " + what); };
  if (!(carrier_frequency_hz > 0.0)) fail("carrier_frequency_hz must be > 0");
  if (!(shadowing_sigma_db >= 0.0)) fail("shadowing_sigma_db must be >= 0");
  if (!(shadowing_rho >= 0.0 && shadowing_rho < 1.0)) fail("shadowing_rho must be in [0, 1)");
  if (!(attenuation_per_blocker_db >= 0.0)) fail("attenuation_per_blocker_db must be >= 0");
  if (!(attenuation_per_blocker_db <= attenuation_cap_db)) {
    fail("attenuation_per_blocker_db must not exceed attenuation_cap_db");
  }
}

double free_space_power(double distance_m, const LinkParams& params) {
  if (!(distance_m > 0.0)) {
    throw DomainError("free_space_power: distance must be > 0, got " + std::to_string(distance_m));
  }
  const double fspl =
      20.0 * std::log10(4.0 * std::numbers::pi * distance_m * params.carrier_frequency_hz / kSpeedOfLight);
  return params.tx_power_dbm + params.tx_gain_dbi + params.rx_gain_dbi - fspl;
}

double blockage_attenuation(std::span<const Crossing> crossings,
                            std::span<const Pedestrian> pedestrians, const LinkParams& params) {
  double total = 0.0;
  for (const auto& c : crossings) {
    auto it = std::find_if(pedestrians.begin(), pedestrians.end(),
                           [&](const Pedestrian& p) { return p.id == c.pedestrian_id; });
    if (it == pedestrians.end()) {
      throw DomainError("blockage_attenuation: unknown pedestrian " + std::to_string(c.pedestrian_id));
    }
    total += params.attenuation_per_blocker_db * std::min(1.0, c.chord_length / (2.0 * it->radius));
  }
  return std::min(params.attenuation_cap_db, total);
}

ShadowingProcess::ShadowingProcess(double sigma_db, double rho) : sigma_(sigma_db), rho_(rho) {
  if (!(sigma_ >= 0.0)) throw DomainError("shadowing sigma must be >= 0");
  if (!(rho_ >= 0.0 && rho_ < 1.0)) throw DomainError("shadowing rho must be in [0, 1)");
}

double ShadowingProcess::next(Rng& rng) {
  const double z = normal_(rng);
  if (!started_) {
    state_ = sigma_ * z;
    started_ = true;
  } else {
    state_ = rho_ * state_ + std::sqrt(1.0 - rho_ * rho_) * sigma_ * z;
  }
  return state_;
}

LinkSample link_power(const Scene& scene, const Link& link, BlockageOptions options) {
  const double d = distance(link.tx.position, link.rx.position);
  const auto crossings = los_crossings(scene, link.tx, link.rx, options);
  LinkSample s;
  s.attenuation_db = blockage_attenuation(crossings, scene.pedestrians(), link.params);
  s.rss_dbm = free_space_power(d, link.params) - s.attenuation_db;
  return s;
}

double sample_rss(const Scene& scene, const Link& link, Rng& rng, BlockageOptions options) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double z = normal(rng);
  return link_power(scene, link, options).rss_dbm + link.params.shadowing_sigma_db * z;
}

LinkSample sample_link(const Scene& scene, const Link& link, ShadowingProcess& shadowing, Rng& rng,
                       BlockageOptions options) {
  LinkSample s = link_power(scene, link, options);
  s.rss_dbm += shadowing.next(rng);
  return s;
}

}  // namespace visionrf
