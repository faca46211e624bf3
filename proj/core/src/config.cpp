// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/config.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>
#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "binio.hpp"
#include "visionrf/error.hpp"

namespace visionrf {
namespace {

// Reads typed keys from one table and remembers which keys were consumed.
class Section {
 public:
  Section(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  std::string key(std::string_view k) const { return prefix_ + "." + std::string(k); }

  template <class T>
  void get(std::string_view k, T& out) {
    if (!table_) return;
    const toml::node* node = table_->get(k);
    if (!node) return;
    seen_.insert(std::string(k));
    read(*node, k, out);
  }

  bool has(std::string_view k) const { return table_ && table_->get(k) != nullptr; }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) throw ConfigError(key(k.str()), "unknown key");
    }
  }

 private:
  double number(const toml::node& n, std::string_view k) const {
    if (auto v = n.value_exact<double>()) return *v;
    if (auto v = n.value_exact<std::int64_t>()) return static_cast<double>(*v);
    throw ConfigError(key(k), "expected a number");
  }
  void read(const toml::node& n, std::string_view k, double& out) const { out = number(n, k); }
  void read(const toml::node& n, std::string_view k, int& out) const {
    auto v = n.value_exact<std::int64_t>();
    if (!v || *v < INT32_MIN || *v > INT32_MAX) throw ConfigError(key(k), "expected an integer");
    out = static_cast<int>(*v);
  }
  void read(const toml::node& n, std::string_view k, std::uint64_t& out) const {
    auto v = n.value_exact<std::int64_t>();
    if (!v || *v < 0) throw ConfigError(key(k), "expected a non-negative integer");
    out = static_cast<std::uint64_t>(*v);
  }
  void read(const toml::node& n, std::string_view k, bool& out) const {
    auto v = n.value_exact<bool>();
    if (!v) throw ConfigError(key(k), "expected a boolean");
    out = *v;
  }
  void read(const toml::node& n, std::string_view k, std::string& out) const {
    auto v = n.value_exact<std::string>();
    if (!v) throw ConfigError(key(k), "expected a string");
    out = *v;
  }
  std::vector<double> numbers(const toml::node& n, std::string_view k, std::size_t count) const {
    const auto* arr = n.as_array();
    if (!arr || arr->size() != count) {
      throw ConfigError(key(k), "expected an array of " + std::to_string(count) + " numbers");
    }
    std::vector<double> out;
    for (const auto& e : *arr) out.push_back(number(e, k));
    return out;
  }
  void read(const toml::node& n, std::string_view k, Vec2& out) const {
    const auto v = numbers(n, k, 2);
    out = {v[0], v[1]};
  }
  void read(const toml::node& n, std::string_view k, Vec3& out) const {
    const auto v = numbers(n, k, 3);
    out = {v[0], v[1], v[2]};
  }
  void read(const toml::node& n, std::string_view k, Rect& out) const {
    const auto v = numbers(n, k, 4);
    out = {v[0], v[1], v[2], v[3]};
  }

  const toml::table* table_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void read_tower(Section& s, ConvTowerConfig& t) {
  s.get("conv1_channels", t.conv1_channels);
  s.get("conv1_kernel", t.conv1_kernel);
  s.get("conv1_stride", t.conv1_stride);
  s.get("conv2_channels", t.conv2_channels);
  s.get("conv2_kernel", t.conv2_kernel);
  s.get("conv2_stride", t.conv2_stride);
}

void read_link_params(Section& s, LinkParams& p) {
  s.get("carrier_frequency_hz", p.carrier_frequency_hz);
  s.get("tx_power_dbm", p.tx_power_dbm);
  s.get("tx_gain_dbi", p.tx_gain_dbi);
  s.get("rx_gain_dbi", p.rx_gain_dbi);
  s.get("shadowing_sigma_db", p.shadowing_sigma_db);
  s.get("shadowing_rho", p.shadowing_rho);
  s.get("attenuation_per_blocker_db", p.attenuation_per_blocker_db);
  s.get("attenuation_cap_db", p.attenuation_cap_db);
}

const toml::table* subtable(const toml::table& root, std::string_view name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  const auto* t = n->as_table();
  if (!t) throw ConfigError(std::string(name), "expected a table");
  return t;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

void check_tower(const ConvTowerConfig& t, const std::string& p) {
  require(t.conv1_channels > 0, p + ".conv1_channels", "must be positive");
  require(t.conv1_kernel > 0, p + ".conv1_kernel", "must be positive");
  require(t.conv1_stride > 0, p + ".conv1_stride", "must be positive");
  require(t.conv2_channels > 0, p + ".conv2_channels", "must be positive");
  require(t.conv2_kernel > 0, p + ".conv2_kernel", "must be positive");
  require(t.conv2_stride > 0, p + ".conv2_stride", "must be positive");
}

nlohmann::json tower_json(const ConvTowerConfig& t) {
  return {{"conv1_channels", t.conv1_channels}, {"conv1_kernel", t.conv1_kernel},
          {"conv1_stride", t.conv1_stride},     {"conv2_channels", t.conv2_channels},
          {"conv2_kernel", t.conv2_kernel},     {"conv2_stride", t.conv2_stride}};
}

}  // namespace

int ScenarioConfig::n_ticks() const { return static_cast<int>(std::lround(world.duration / world.dt)); }

std::vector<Link> ScenarioConfig::make_links() const {
  std::vector<Link> out;
  for (const auto& l : links) out.push_back(Link{l.id, Node{l.id, l.position, l.height}, station, l.params});
  return out;
}

const LinkConfig& ScenarioConfig::link(int id) const { return links[link_index(id)]; }

std::size_t ScenarioConfig::link_index(int id) const {
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (links[i].id == id) return i;
  }
  throw ConfigError("links", "no link with id " + std::to_string(id));
}

void ScenarioConfig::validate() const {
  const Rect& b = world.bounds;
  require(b.x_max > b.x_min && b.y_max > b.y_min, "world.bounds", "must have positive extent");
  require(world.dt > 0.0, "world.dt", "must be positive");
  require(world.duration > 0.0, "world.duration", "must be positive");
  require(world.v_max > 0.0, "world.v_max", "must be positive");
  require(camera.frame_rate > 0.0, "camera.frame_rate", "must be positive");
  require(std::abs(world.dt - 1.0 / camera.frame_rate) <= 1e-9 * world.dt, "world.dt",
          "must equal 1 / camera.frame_rate (one tick per frame)");
  try {
    camera.validate();
  } catch (const DomainError& e) {
    throw ConfigError("camera", e.what());
  }
  require(b.contains({camera.position.x, camera.position.y}), "camera.position", "must lie inside world.bounds");
  require(b.contains(station.position), "station.position", "must lie inside world.bounds");
  require(station.height > 0.0, "station.height", "must be positive");
  require(!links.empty(), "links", "at least one link is required");
  std::set<int> ids;
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string p = "links[" + std::to_string(i) + "]";
    const auto& l = links[i];
    require(ids.insert(l.id).second, p + ".id", "duplicate link id " + std::to_string(l.id));
    require(l.id != station.id, p + ".id", "collides with station.id");
    require(b.contains(l.position), p + ".position", "must lie inside world.bounds");
    require(l.position != station.position, p + ".position", "coincides with the station");
    require(l.height > 0.0, p + ".height", "must be positive");
    try {
      l.params.validate();
    } catch (const DomainError& e) {
      throw ConfigError(p, e.what());
    }
  }
  require(pedestrians.count >= 0, "pedestrians.count", "must be non-negative");
  require(pedestrians.speed >= 0.0 && pedestrians.speed <= world.v_max, "pedestrians.speed",
          "must lie in [0, world.v_max]");
  require(pedestrians.radius > 0.0, "pedestrians.radius", "must be positive");
  require(pedestrians.height > 0.0, "pedestrians.height", "must be positive");
  require(2.0 * pedestrians.radius < std::min(b.width(), b.height()), "pedestrians.radius",
          "does not fit inside world.bounds");
  require(dataset.episodes >= 0, "dataset.episodes", "must be non-negative");
  require(dataset.horizon >= 1, "dataset.horizon", "must be >= 1");
  require(dataset.test_every >= 2, "dataset.test_every", "must be >= 2");
  require(dataset.workers >= 1, "dataset.workers", "must be >= 1");

  require(predictor.variant == "IMG" || predictor.variant == "RF" || predictor.variant == "IMG_RF",
          "predictor.variant", "must be IMG, RF or IMG_RF");
  require(ids.count(predictor.link) == 1, "predictor.link", "does not name a link");
  require(predictor.t_past >= 1, "predictor.t_past", "must be >= 1");
  require(predictor.rss_stride >= 1, "predictor.rss_stride", "must be >= 1");
  check_tower(predictor.tower, "predictor");
  require(predictor.feature_width > 0, "predictor.feature_width", "must be positive");
  require(predictor.hidden > 0, "predictor.hidden", "must be positive");
  require(predictor.lr >= 0.0, "predictor.lr", "must be non-negative");
  require(predictor.batch >= 1, "predictor.batch", "must be >= 1");
  require(predictor.epochs >= 0, "predictor.epochs", "must be non-negative");
  require(predictor.steps_per_epoch >= 0, "predictor.steps_per_epoch", "must be non-negative");

  require(handover.observation == "IMG" || handover.observation == "RF", "handover.observation",
          "must be IMG or RF");
  require(handover.b_eff_mbps > 0.0, "handover.b_eff_mbps", "must be positive");
  require(handover.r_max_mbps > 0.0, "handover.r_max_mbps", "must be positive");
  require(handover.t_ho >= 0, "handover.t_ho", "must be non-negative");
  require(handover.frame_downsample >= 1, "handover.frame_downsample", "must be >= 1");
  check_tower(handover.tower, "handover");
  require(handover.feature_width > 0, "handover.feature_width", "must be positive");
  require(handover.hidden > 0, "handover.hidden", "must be positive");
  require(handover.gamma >= 0.0 && handover.gamma < 1.0, "handover.gamma", "must lie in [0, 1)");
  require(handover.replay_capacity >= 1, "handover.replay_capacity", "must be >= 1");
  require(handover.target_sync >= 1, "handover.target_sync", "must be >= 1");
  require(handover.lr >= 0.0, "handover.lr", "must be non-negative");
  require(handover.batch >= 1, "handover.batch", "must be >= 1");
  require(handover.train_steps >= 0, "handover.train_steps", "must be non-negative");
  require(handover.learning_starts >= 0, "handover.learning_starts", "must be non-negative");
  require(handover.epsilon_start >= 0.0 && handover.epsilon_start <= 1.0, "handover.epsilon_start",
          "must lie in [0, 1]");
  require(handover.epsilon_end >= 0.0 && handover.epsilon_end <= 1.0, "handover.epsilon_end",
          "must lie in [0, 1]");
  require(handover.eval_episodes >= 1, "handover.eval_episodes", "must be >= 1");
  require(handover.lead_window >= 1, "handover.lead_window", "must be >= 1");
  require(handover.approach_speed > 0.0, "handover.approach_speed", "must be positive");

  require(inpaint.variant == "IMG_RF" || inpaint.variant == "RF_ONLY", "inpaint.variant",
          "must be IMG_RF or RF_ONLY");
  require(ids.count(inpaint.link) == 1, "inpaint.link", "does not name a link");
  require(inpaint.rss_window >= 1, "inpaint.rss_window", "must be >= 1");
  require(inpaint.rss_stride >= 1, "inpaint.rss_stride", "must be >= 1");
  require(inpaint.mask == "right_third" || inpaint.mask == "random", "inpaint.mask",
          "must be right_third or random");
  check_tower(inpaint.tower, "inpaint");
  require(inpaint.image_latent > 0, "inpaint.image_latent", "must be positive");
  require(inpaint.rss_latent > 0, "inpaint.rss_latent", "must be positive");
  require(inpaint.decoder_channels > 0, "inpaint.decoder_channels", "must be positive");
  require(inpaint.lambda >= 0.0 && inpaint.lambda <= 1.0, "inpaint.lambda", "must lie in [0, 1]");
  require(inpaint.detect_threshold_m > 0.0, "inpaint.detect_threshold_m", "must be positive");
  require(inpaint.lr >= 0.0, "inpaint.lr", "must be non-negative");
  require(inpaint.batch >= 1, "inpaint.batch", "must be >= 1");
  require(inpaint.steps >= 0, "inpaint.steps", "must be non-negative");
  require(inpaint.sample_stride >= 1, "inpaint.sample_stride", "must be >= 1");
  require(!output.root.empty(), "output.root", "must not be empty");
}

ScenarioConfig parse_config(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError("<document>", msg.str());
  }
  static const std::set<std::string> sections{"world",   "camera",    "station",   "links",   "pedestrians",
                                              "dataset", "predictor", "handover", "inpaint", "output"};
  for (const auto& [k, v] : root) {
    if (!sections.count(std::string(k.str()))) throw ConfigError(std::string(k.str()), "unknown section");
  }

  ScenarioConfig c;
  {
    Section s(subtable(root, "camera"), "camera");
    s.get("position", c.camera.position);
    s.get("yaw", c.camera.yaw);
    s.get("pitch", c.camera.pitch);
    s.get("hfov", c.camera.hfov);
    s.get("vfov", c.camera.vfov);
    s.get("width", c.camera.width);
    s.get("height", c.camera.height);
    s.get("near_clip", c.camera.near_clip);
    s.get("far_clip", c.camera.far_clip);
    s.get("frame_rate", c.camera.frame_rate);
    s.finish();
  }
  {
    Section s(subtable(root, "world"), "world");
    s.get("bounds", c.world.bounds);
    c.world.dt = 1.0 / c.camera.frame_rate;
    s.get("dt", c.world.dt);
    s.get("duration", c.world.duration);
    s.get("seed", c.world.seed);
    s.get("v_max", c.world.v_max);
    s.get("height_gated", c.world.height_gated);
    s.finish();
  }
  {
    Section s(subtable(root, "station"), "station");
    s.get("id", c.station.id);
    s.get("position", c.station.position);
    s.get("height", c.station.height);
    s.finish();
  }
  if (const toml::node* n = root.get("links")) {
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError("links", "expected an array of tables ([[links]])");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = (*arr)[i].as_table();
      const std::string p = "links[" + std::to_string(i) + "]";
      if (!t) throw ConfigError(p, "expected a table");
      LinkConfig l;
      l.id = static_cast<int>(i) + 1;
      Section s(t, p);
      s.get("id", l.id);
      s.get("position", l.position);
      s.get("height", l.height);
      read_link_params(s, l.params);
      s.finish();
      c.links.push_back(l);
    }
  }
  {
    Section s(subtable(root, "pedestrians"), "pedestrians");
    s.get("count", c.pedestrians.count);
    s.get("speed", c.pedestrians.speed);
    s.get("radius", c.pedestrians.radius);
    s.get("height", c.pedestrians.height);
    s.finish();
  }
  {
    Section s(subtable(root, "dataset"), "dataset");
    s.get("episodes", c.dataset.episodes);
    s.get("horizon", c.dataset.horizon);
    s.get("test_every", c.dataset.test_every);
    s.get("workers", c.dataset.workers);
    s.finish();
  }
  {
    auto& p = c.predictor;
    Section s(subtable(root, "predictor"), "predictor");
    s.get("variant", p.variant);
    s.get("link", p.link);
    s.get("t_past", p.t_past);
    s.get("rss_stride", p.rss_stride);
    read_tower(s, p.tower);
    s.get("feature_width", p.feature_width);
    s.get("hidden", p.hidden);
    s.get("lr", p.lr);
    s.get("batch", p.batch);
    s.get("epochs", p.epochs);
    s.get("steps_per_epoch", p.steps_per_epoch);
    s.finish();
  }
  {
    auto& h = c.handover;
    Section s(subtable(root, "handover"), "handover");
    s.get("observation", h.observation);
    s.get("noise_floor_dbm", h.noise_floor_dbm);
    s.get("b_eff_mbps", h.b_eff_mbps);
    s.get("r_max_mbps", h.r_max_mbps);
    s.get("t_ho", h.t_ho);
    s.get("frame_downsample", h.frame_downsample);
    read_tower(s, h.tower);
    s.get("feature_width", h.feature_width);
    s.get("hidden", h.hidden);
    s.get("gamma", h.gamma);
    s.get("replay_capacity", h.replay_capacity);
    s.get("target_sync", h.target_sync);
    s.get("lr", h.lr);
    s.get("batch", h.batch);
    s.get("train_steps", h.train_steps);
    s.get("learning_starts", h.learning_starts);
    s.get("epsilon_start", h.epsilon_start);
    s.get("epsilon_end", h.epsilon_end);
    s.get("eval_episodes", h.eval_episodes);
    s.get("lead_window", h.lead_window);
    s.get("threshold_db", h.threshold_db);
    s.get("approach_speed", h.approach_speed);
    s.finish();
  }
  {
    auto& p = c.inpaint;
    Section s(subtable(root, "inpaint"), "inpaint");
    s.get("variant", p.variant);
    s.get("link", p.link);
    s.get("rss_window", p.rss_window);
    s.get("rss_stride", p.rss_stride);
    s.get("mask", p.mask);
    read_tower(s, p.tower);
    s.get("image_latent", p.image_latent);
    s.get("rss_latent", p.rss_latent);
    s.get("decoder_channels", p.decoder_channels);
    s.get("lambda", p.lambda);
    s.get("detect_threshold_m", p.detect_threshold_m);
    s.get("lr", p.lr);
    s.get("batch", p.batch);
    s.get("steps", p.steps);
    s.get("sample_stride", p.sample_stride);
    s.finish();
  }
  {
    Section s(subtable(root, "output"), "output");
    s.get("root", c.output.root);
    s.finish();
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const FormatError&) {
    throw ConfigError("--config", "cannot read " + path.string());
  }
  return parse_config(text);
}

ScenarioConfig reference_config() {
  ScenarioConfig c;
  c.world.bounds = {0.0, 0.0, 6.0, 5.0};
  // Corner camera looking along the room diagonal: the whole floor is in view and the BS 1 link
  // runs away from the camera through the right third of the image.
  c.camera.position = {0.1, 0.1, 1.2};
  c.camera.yaw = std::numbers::pi / 4.0;
  c.camera.vfov = 2.0 * std::atan(0.75);
  c.station.position = {2.06, 0.52};
  LinkParams lp;
  lp.shadowing_sigma_db = 1.0;
  lp.shadowing_rho = 0.9;
  c.links = {LinkConfig{1, {5.58, 1.26}, 1.5, lp}, LinkConfig{2, {3.0, 4.9}, 1.5, lp}};
  c.validate();
  return c;
}

std::string resolved_config_json(const ScenarioConfig& c) {
  using nlohmann::json;
  json j;
  const auto& w = c.world;
  j["world"] = {{"bounds", {w.bounds.x_min, w.bounds.y_min, w.bounds.x_max, w.bounds.y_max}},
                {"dt", w.dt},
                {"duration", w.duration},
                {"seed", w.seed},
                {"v_max", w.v_max},
                {"height_gated", w.height_gated},
                {"n_ticks", c.n_ticks()}};
  const auto& cam = c.camera;
  j["camera"] = {{"position", {cam.position.x, cam.position.y, cam.position.z}},
                 {"yaw", cam.yaw},
                 {"pitch", cam.pitch},
                 {"hfov", cam.hfov},
                 {"vfov", cam.vfov},
                 {"width", cam.width},
                 {"height", cam.height},
                 {"near_clip", cam.near_clip},
                 {"far_clip", cam.far_clip},
                 {"frame_rate", cam.frame_rate}};
  j["station"] = {{"id", c.station.id},
                  {"position", {c.station.position.x, c.station.position.y}},
                  {"height", c.station.height}};
  j["links"] = json::array();
  for (const auto& l : c.links) {
    const auto& p = l.params;
    j["links"].push_back({{"id", l.id},
                          {"position", {l.position.x, l.position.y}},
                          {"height", l.height},
                          {"carrier_frequency_hz", p.carrier_frequency_hz},
                          {"tx_power_dbm", p.tx_power_dbm},
                          {"tx_gain_dbi", p.tx_gain_dbi},
                          {"rx_gain_dbi", p.rx_gain_dbi},
                          {"shadowing_sigma_db", p.shadowing_sigma_db},
                          {"shadowing_rho", p.shadowing_rho},
                          {"attenuation_per_blocker_db", p.attenuation_per_blocker_db},
                          {"attenuation_cap_db", p.attenuation_cap_db}});
  }
  j["pedestrians"] = {{"count", c.pedestrians.count},
                      {"speed", c.pedestrians.speed},
                      {"radius", c.pedestrians.radius},
                      {"height", c.pedestrians.height}};
  j["dataset"] = {{"episodes", c.dataset.episodes},
                  {"horizon", c.dataset.horizon},
                  {"test_every", c.dataset.test_every},
                  {"workers", c.dataset.workers}};
  const auto& pr = c.predictor;
  j["predictor"] = {{"variant", pr.variant},   {"link", pr.link},     {"t_past", pr.t_past},
                    {"rss_stride", pr.rss_stride}, {"feature_width", pr.feature_width},
                    {"hidden", pr.hidden},     {"lr", pr.lr},         {"batch", pr.batch},
                    {"epochs", pr.epochs},     {"steps_per_epoch", pr.steps_per_epoch}};
  j["predictor"].update(tower_json(pr.tower));
  const auto& h = c.handover;
  j["handover"] = {{"observation", h.observation},
                   {"noise_floor_dbm", h.noise_floor_dbm},
                   {"b_eff_mbps", h.b_eff_mbps},
                   {"r_max_mbps", h.r_max_mbps},
                   {"t_ho", h.t_ho},
                   {"frame_downsample", h.frame_downsample},
                   {"feature_width", h.feature_width},
                   {"hidden", h.hidden},
                   {"gamma", h.gamma},
                   {"replay_capacity", h.replay_capacity},
                   {"target_sync", h.target_sync},
                   {"lr", h.lr},
                   {"batch", h.batch},
                   {"train_steps", h.train_steps},
                   {"learning_starts", h.learning_starts},
                   {"epsilon_start", h.epsilon_start},
                   {"epsilon_end", h.epsilon_end},
                   {"eval_episodes", h.eval_episodes},
                   {"lead_window", h.lead_window},
                   {"threshold_db", h.threshold_db},
                   {"approach_speed", h.approach_speed}};
  j["handover"].update(tower_json(h.tower));
  const auto& ip = c.inpaint;
  j["inpaint"] = {{"variant", ip.variant},
                  {"link", ip.link},
                  {"rss_window", ip.rss_window},
                  {"rss_stride", ip.rss_stride},
                  {"mask", ip.mask},
                  {"image_latent", ip.image_latent},
                  {"rss_latent", ip.rss_latent},
                  {"decoder_channels", ip.decoder_channels},
                  {"lambda", ip.lambda},
                  {"detect_threshold_m", ip.detect_threshold_m},
                  {"lr", ip.lr},
                  {"batch", ip.batch},
                  {"steps", ip.steps},
                  {"sample_stride", ip.sample_stride}};
  j["inpaint"].update(tower_json(ip.tower));
  j["output"] = {{"root", c.output.root}};
  return j.dump(2) + "\n";
}

void write_resolved_config(const std::filesystem::path& dir, const ScenarioConfig& config) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "resolved-config.json", resolved_config_json(config));
}

}  // namespace visionrf
