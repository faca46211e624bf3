// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/dataset.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "binio.hpp"
#include "visionrf/csv.hpp"
#include "visionrf/error.hpp"
#include "visionrf/seed.hpp"

namespace visionrf {
namespace {

using nlohmann::json;

json node_json(const Node& n) { return {{"id", n.id}, {"position", {n.position.x, n.position.y}}, {"height", n.height}}; }

Node node_from(const json& j) {
  const auto p = j.at("position").get<std::vector<double>>();
  if (p.size() != 2) throw FormatError("node position must have 2 entries");
  return Node{j.at("id").get<int>(), {p[0], p[1]}, j.at("height").get<double>()};
}

json params_json(const LinkParams& p) {
  return {{"carrier_frequency_hz", p.carrier_frequency_hz},
          {"tx_power_dbm", p.tx_power_dbm},
          {"tx_gain_dbi", p.tx_gain_dbi},
          {"rx_gain_dbi", p.rx_gain_dbi},
          {"shadowing_sigma_db", p.shadowing_sigma_db},
          {"shadowing_rho", p.shadowing_rho},
          {"attenuation_per_blocker_db", p.attenuation_per_blocker_db},
          {"attenuation_cap_db", p.attenuation_cap_db}};
}

LinkParams params_from(const json& j) {
  LinkParams p;
  p.carrier_frequency_hz = j.at("carrier_frequency_hz").get<double>();
  p.tx_power_dbm = j.at("tx_power_dbm").get<double>();
  p.tx_gain_dbi = j.at("tx_gain_dbi").get<double>();
  p.rx_gain_dbi = j.at("rx_gain_dbi").get<double>();
  p.shadowing_sigma_db = j.at("shadowing_sigma_db").get<double>();
  p.shadowing_rho = j.at("shadowing_rho").get<double>();
  p.attenuation_per_blocker_db = j.at("attenuation_per_blocker_db").get<double>();
  p.attenuation_cap_db = j.at("attenuation_cap_db").get<double>();
  return p;
}

json camera_json(const CameraModel& c) {
  return {{"position", {c.position.x, c.position.y, c.position.z}},
          {"yaw", c.yaw},
          {"pitch", c.pitch},
          {"hfov", c.hfov},
          {"vfov", c.vfov},
          {"width", c.width},
          {"height", c.height},
          {"near_clip", c.near_clip},
          {"far_clip", c.far_clip},
          {"frame_rate", c.frame_rate}};
}

CameraModel camera_from(const json& j) {
  CameraModel c;
  const auto p = j.at("position").get<std::vector<double>>();
  if (p.size() != 3) throw FormatError("camera position must have 3 entries");
  c.position = {p[0], p[1], p[2]};
  c.yaw = j.at("yaw").get<double>();
  c.pitch = j.at("pitch").get<double>();
  c.hfov = j.at("hfov").get<double>();
  c.vfov = j.at("vfov").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.near_clip = j.at("near_clip").get<double>();
  c.far_clip = j.at("far_clip").get<double>();
  c.frame_rate = j.at("frame_rate").get<double>();
  return c;
}

std::string manifest_text(const EpisodeManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["seed"] = m.seed;
  j["dt"] = m.dt;
  j["n_ticks"] = m.n_ticks;
  j["horizon"] = m.horizon;
  // The look-ahead is a whole number of camera ticks, so a horizon in seconds is rounded.
  j["horizon_s"] = m.horizon * m.dt;
  j["horizon_note"] = "look-ahead is an integer number of ticks; horizon_s = horizon * dt";
  j["camera"] = camera_json(m.camera);
  j["links"] = json::array();
  for (const auto& l : m.links) {
    j["links"].push_back({{"id", l.id}, {"tx", node_json(l.tx)}, {"rx", node_json(l.rx)}, {"params", params_json(l.params)}});
  }
  j["frames"] = {{"file", "frames.bin"}, {"dtype", "float32le"}, {"width", m.camera.width}, {"height", m.camera.height}};
  return j.dump(2) + "\n";
}

EpisodeManifest manifest_from(const std::string& text, const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  EpisodeManifest m;
  try {
    m.format_version = j.at("format_version").get<std::string>();
    if (m.format_version != kEpisodeFormat) {
      throw UnsupportedVersionError(path.string() + ": unsupported format_version '" + m.format_version + "'");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.dt = j.at("dt").get<double>();
    m.n_ticks = j.at("n_ticks").get<int>();
    m.horizon = j.at("horizon").get<int>();
    m.camera = camera_from(j.at("camera"));
    for (const auto& l : j.at("links")) {
      m.links.push_back(Link{l.at("id").get<int>(), node_from(l.at("tx")), node_from(l.at("rx")), params_from(l.at("params"))});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.n_ticks < 0) throw FormatError(path.string() + ": negative n_ticks");
  return m;
}

}  // namespace

std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::kLos:
      return "LOS";
    case Condition::kNlos:
      return "NLOS";
    case Condition::kTransition:
      return "TRANSITION";
  }
  return "?";
}

Condition parse_condition(std::string_view name) {
  if (name == "LOS") return Condition::kLos;
  if (name == "NLOS") return Condition::kNlos;
  if (name == "TRANSITION") return Condition::kTransition;
  throw MalformedCsvError("unknown condition '" + std::string(name) + "'");
}

std::size_t Episode::trace_index(int link_id) const {
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].link_id == link_id) return i;
  }
  throw DomainError("episode has no link " + std::to_string(link_id));
}

Scene initial_scene(const ScenarioConfig& config, Rng& rng) {
  const Rect& b = config.world.bounds;
  const auto& pc = config.pedestrians;
  std::uniform_real_distribution<double> ux(b.x_min + pc.radius, b.x_max - pc.radius);
  std::uniform_real_distribution<double> uy(b.y_min + pc.radius, b.y_max - pc.radius);
  std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
  std::vector<Pedestrian> peds;
  for (int i = 0; i < pc.count; ++i) {
    Pedestrian p;
    p.id = i + 1;
    p.position = {ux(rng), uy(rng)};
    const double a = heading(rng);
    p.velocity = {pc.speed * std::cos(a), pc.speed * std::sin(a)};
    p.radius = pc.radius;
    p.height = pc.height;
    peds.push_back(p);
  }
  std::vector<Node> bss;
  for (const auto& l : config.links) bss.push_back(Node{l.id, l.position, l.height});
  return Scene(b, std::move(bss), config.station, std::move(peds), config.world.dt, config.world.v_max);
}

std::vector<Condition> condition_labels(std::span<const std::uint8_t> blocked, int n_ticks, int horizon) {
  if (static_cast<int>(blocked.size()) < n_ticks + horizon) {
    throw DomainError("condition_labels needs n_ticks + horizon blockage states");
  }
  std::vector<Condition> out(static_cast<std::size_t>(n_ticks));
  for (int t = 0; t < n_ticks; ++t) {
    const bool now = blocked[static_cast<std::size_t>(t)];
    const bool later = blocked[static_cast<std::size_t>(t + horizon)];
    out[static_cast<std::size_t>(t)] = now ? Condition::kNlos : (later ? Condition::kTransition : Condition::kLos);
  }
  return out;
}

Episode record_episode(const ScenarioConfig& config, Scene scene, Rng& rng, std::uint64_t seed) {
  const int n = config.n_ticks();
  const int horizon = config.dataset.horizon;
  const auto links = config.make_links();
  const BlockageOptions opts{config.world.height_gated};
  Episode ep;
  ep.manifest.seed = seed;
  ep.manifest.dt = config.world.dt;
  ep.manifest.n_ticks = n;
  ep.manifest.horizon = horizon;
  ep.manifest.camera = config.camera;
  ep.manifest.links = links;
  std::vector<ShadowingProcess> shadowing;
  std::vector<std::vector<std::uint8_t>> blocked(links.size());
  for (const auto& l : links) {
    shadowing.emplace_back(l.params.shadowing_sigma_db, l.params.shadowing_rho);
    PowerTrace tr;
    tr.link_id = l.id;
    tr.first_tick = scene.tick();
    tr.dt = config.world.dt;
    tr.rss_dbm.reserve(static_cast<std::size_t>(n));
    ep.traces.push_back(std::move(tr));
  }
  ep.frames.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n + horizon; ++t) {
    if (t < n) ep.frames.push_back(render_depth(scene, config.camera));
    for (std::size_t li = 0; li < links.size(); ++li) {
      if (t < n) {
        const LinkSample s = sample_link(scene, links[li], shadowing[li], rng, opts);
        ep.traces[li].rss_dbm.push_back(s.rss_dbm);
        blocked[li].push_back(s.attenuation_db > 0.0);
      } else {
        blocked[li].push_back(link_power(scene, links[li], opts).attenuation_db > 0.0);
      }
    }
    scene = step_scene(scene);
  }
  for (const auto& b : blocked) ep.labels.push_back(condition_labels(b, n, horizon));
  return ep;
}

Episode generate_episode(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Scene scene = initial_scene(config, rng);
  return record_episode(config, std::move(scene), rng, seed);
}

Condition window_condition(const Episode& episode, std::size_t trace, int t, int horizon) {
  const int n = episode.manifest.n_ticks;
  if (t < 0 || t + horizon >= n) throw DomainError("window tick out of range");
  const bool now = episode.blocked(trace, t);
  const bool later = episode.blocked(trace, t + horizon);
  if (now != later) return Condition::kTransition;
  return later ? Condition::kNlos : Condition::kLos;
}

std::vector<SampleWindow> make_windows(const Episode& episode, std::size_t trace, int t_past, int horizon,
                                       int rss_stride, std::size_t episode_index) {
  if (t_past < 1 || horizon < 1 || rss_stride < 1) throw DomainError("make_windows needs T_past, H, stride >= 1");
  if (trace >= episode.traces.size()) throw DomainError("make_windows: no such trace");
  std::vector<SampleWindow> out;
  const int n = episode.manifest.n_ticks;
  const auto& rss = episode.traces[trace].rss_dbm;
  for (int t = (t_past - 1) * rss_stride; t + horizon <= n - 1; ++t) {
    SampleWindow w;
    w.episode = episode_index;
    w.t = t;
    for (int k = t_past - 1; k >= 0; --k) {
      const int tick = t - k * rss_stride;
      w.past_frames.push_back(&episode.frames[static_cast<std::size_t>(tick)]);
      w.past_rss.push_back(rss[static_cast<std::size_t>(tick)]);
    }
    w.label_rss = rss[static_cast<std::size_t>(t + horizon)];
    w.label_condition = window_condition(episode, trace, t, horizon);
    out.push_back(std::move(w));
  }
  return out;
}

std::string episode_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ep_%05zu", index);
  return buf;
}

void write_episode(const Episode& ep, const std::filesystem::path& dir) {
  const auto& m = ep.manifest;
  const std::size_t n = static_cast<std::size_t>(m.n_ticks);
  if (ep.frames.size() != n || ep.traces.size() != m.links.size() || ep.labels.size() != m.links.size()) {
    throw DomainError("episode is inconsistent with its manifest");
  }
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "manifest.json", manifest_text(m));

  std::string bytes;
  bytes.reserve(n * static_cast<std::size_t>(m.camera.width) * m.camera.height * 4);
  for (const auto& f : ep.frames) {
    if (f.width != m.camera.width || f.height != m.camera.height) throw DomainError("frame size differs from camera");
    bytes += detail::encode_f32(f.depth);
  }
  detail::write_file(dir / "frames.bin", bytes);

  CsvTable power;
  power.header.push_back("tick");
  for (const auto& tr : ep.traces) power.header.push_back("rss_dbm_" + std::to_string(tr.link_id));
  CsvTable labels;
  labels.header.push_back("tick");
  for (const auto& tr : ep.traces) labels.header.push_back("condition_" + std::to_string(tr.link_id));
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<std::string> prow{std::to_string(ep.frames[t].tick)};
    std::vector<std::string> lrow{std::to_string(ep.frames[t].tick)};
    for (std::size_t l = 0; l < ep.traces.size(); ++l) {
      prow.push_back(format_double(ep.traces[l].rss_dbm.at(t)));
      lrow.emplace_back(condition_name(ep.labels[l].at(t)));
    }
    power.rows.push_back(std::move(prow));
    labels.rows.push_back(std::move(lrow));
  }
  write_csv(dir / "power.csv", power);
  write_csv(dir / "labels.csv", labels);
}

Episode read_episode(const std::filesystem::path& dir) {
  Episode ep;
  ep.manifest = manifest_from(detail::read_file(dir / "manifest.json"), dir / "manifest.json");
  const auto& m = ep.manifest;
  const std::size_t n = static_cast<std::size_t>(m.n_ticks);
  const std::size_t px = static_cast<std::size_t>(m.camera.width) * m.camera.height;

  const std::string bytes = detail::read_file(dir / "frames.bin");
  const std::size_t expected = n * px * 4;
  if (bytes.size() != expected) throw TruncatedFileError((dir / "frames.bin").string(), expected, bytes.size());

  const CsvTable power = read_csv(dir / "power.csv");
  const CsvTable labels = read_csv(dir / "labels.csv");
  if (power.rows.size() != n || labels.rows.size() != n) {
    throw MalformedCsvError(dir.string() + ": expected " + std::to_string(n) + " rows in power.csv and labels.csv");
  }
  const std::size_t ptick = power.column("tick");
  const std::size_t ltick = labels.column("tick");
  std::vector<std::size_t> pcol, lcol;
  for (const auto& l : m.links) {
    pcol.push_back(power.column("rss_dbm_" + std::to_string(l.id)));
    lcol.push_back(labels.column("condition_" + std::to_string(l.id)));
    PowerTrace tr;
    tr.link_id = l.id;
    tr.dt = m.dt;
    tr.rss_dbm.reserve(n);
    ep.traces.push_back(std::move(tr));
    ep.labels.emplace_back();
  }
  ep.frames.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::int64_t tick = parse_int(power.rows[t][ptick]);
    if (parse_int(labels.rows[t][ltick]) != tick) throw MalformedCsvError("labels.csv ticks differ from power.csv");
    if (t > 0 && tick != static_cast<std::int64_t>(ep.frames.back().tick) + 1) {
      throw MalformedCsvError("power.csv ticks are not consecutive");
    }
    DepthFrame f;
    f.tick = static_cast<std::uint64_t>(tick);
    f.width = m.camera.width;
    f.height = m.camera.height;
    f.depth.resize(px);
    const char* p = bytes.data() + t * px * 4;
    for (std::size_t i = 0; i < px; ++i) f.depth[i] = detail::get_le<float, std::uint32_t>(p + 4 * i);
    ep.frames.push_back(std::move(f));
    for (std::size_t l = 0; l < m.links.size(); ++l) {
      ep.traces[l].rss_dbm.push_back(parse_double(power.rows[t][pcol[l]]));
      ep.labels[l].push_back(parse_condition(labels.rows[t][lcol[l]]));
    }
  }
  for (auto& tr : ep.traces) tr.first_tick = n ? ep.frames.front().tick : 0;
  return ep;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < w; ++k) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<Episode> generate_episodes(const ScenarioConfig& config, std::uint64_t master_seed, std::size_t first,
                                       std::size_t count, int workers) {
  config.validate();
  std::vector<Episode> out(count);
  parallel_for(count, workers,
               [&](std::size_t i) { out[i] = generate_episode(config, derive_seed(master_seed, first + i)); });
  return out;
}

void generate_dataset(const ScenarioConfig& config, std::uint64_t master_seed, std::size_t count,
                      const std::filesystem::path& root, int workers) {
  config.validate();
  std::filesystem::create_directories(root);
  parallel_for(count, workers, [&](std::size_t i) {
    write_episode(generate_episode(config, derive_seed(master_seed, i)), root / episode_dir_name(i));
  });
}

bool is_test_episode(std::size_t index, int test_every) {
  return index % static_cast<std::size_t>(test_every) == static_cast<std::size_t>(test_every - 1);
}

}  // namespace visionrf
