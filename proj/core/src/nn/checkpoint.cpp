// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "visionrf/nn/checkpoint.hpp"

#include <json.hpp>

#include "binio.hpp"
#include "visionrf/error.hpp"

namespace visionrf::nn {
namespace {

using nlohmann::json;

json layer_to_json(const Layer& layer) {
  json j;
  j["type"] = layer_name(layer);
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) {
          j["in"] = l.in;
          j["out"] = l.out;
        } else if constexpr (std::is_same_v<T, Conv2D>) {
          j["in_channels"] = l.in_channels;
          j["out_channels"] = l.out_channels;
          j["kernel"] = l.kernel;
          j["stride"] = l.stride;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          j["kernel"] = l.kernel;
        } else if constexpr (std::is_same_v<T, RNNCell>) {
          j["in"] = l.in;
          j["hidden"] = l.hidden;
          j["cell"] = "elman";
        } else if constexpr (std::is_same_v<T, Concat>) {
          j["branches"] = l.branches;
        } else if constexpr (std::is_same_v<T, Reshape>) {
          j["channels"] = l.channels;
          j["height"] = l.height;
          j["width"] = l.width;
        } else if constexpr (std::is_same_v<T, NearestUpsample>) {
          j["factor"] = l.factor;
        }
      },
      layer);
  return j;
}

Layer layer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "Dense") return Dense{j.at("in").get<int>(), j.at("out").get<int>()};
  if (type == "Conv2D") {
    return Conv2D{j.at("in_channels").get<int>(), j.at("out_channels").get<int>(), j.at("kernel").get<int>(),
                  j.at("stride").get<int>()};
  }
  if (type == "MaxPool") return MaxPool{j.at("kernel").get<int>()};
  if (type == "ReLU") return ReLU{};
  if (type == "Tanh") return Tanh{};
  if (type == "RNNCell") {
    if (j.at("cell").get<std::string>() != "elman") throw FormatError("unknown RNN cell type");
    return RNNCell{j.at("in").get<int>(), j.at("hidden").get<int>(), CellType::kElman};
  }
  if (type == "Concat") return Concat{j.at("branches").get<std::vector<int>>()};
  if (type == "Flatten") return Flatten{};
  if (type == "Reshape") {
    return Reshape{j.at("channels").get<int>(), j.at("height").get<int>(), j.at("width").get<int>()};
  }
  if (type == "NearestUpsample") return NearestUpsample{j.at("factor").get<int>()};
  throw FormatError("unknown layer type '" + type + "'");
}

json spec_json(const NetworkSpec& spec) {
  json j;
  j["inputs"] = json::array();
  for (const auto& in : spec.inputs) {
    j["inputs"].push_back({{"name", in.name}, {"shape", in.shape}, {"steps", in.steps}});
  }
  j["branches"] = json::array();
  for (const auto& br : spec.branches) {
    json layers = json::array();
    for (const auto& l : br.layers) layers.push_back(layer_to_json(l));
    j["branches"].push_back({{"input", br.input}, {"layers", layers}});
  }
  j["trunk"] = json::array();
  for (const auto& l : spec.trunk) j["trunk"].push_back(layer_to_json(l));
  return j;
}

NetworkSpec spec_from(const json& j) {
  NetworkSpec spec;
  for (const auto& in : j.at("inputs")) {
    spec.inputs.push_back(
        {in.at("name").get<std::string>(), in.at("shape").get<std::vector<int>>(), in.at("steps").get<int>()});
  }
  for (const auto& br : j.at("branches")) {
    Branch b;
    b.input = br.at("input").get<int>();
    for (const auto& l : br.at("layers")) b.layers.push_back(layer_from_json(l));
    spec.branches.push_back(std::move(b));
  }
  for (const auto& l : j.at("trunk")) spec.trunk.push_back(layer_from_json(l));
  return spec;
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(2); }

NetworkSpec spec_from_json(std::string_view text) {
  try {
    return spec_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad network spec: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  const auto shapes = param_shapes(ckpt.spec);
  if (shapes.size() != ckpt.params.size()) throw ShapeError(-1, "checkpoint params do not match spec");
  std::filesystem::create_directories(dir);
  json m;
  m["format_version"] = std::string(kCheckpointFormat);
  m["dtype"] = "float64";
  m["spec"] = spec_json(ckpt.spec);
  m["hyperparameters"] = ckpt.hyperparameters;
  m["tags"] = ckpt.tags;
  m["seed"] = ckpt.seed;
  m["step"] = ckpt.step;
  m["param_count"] = param_count(ckpt.spec);
  detail::write_file(dir / "manifest.json", m.dump(2) + "\n");
  std::string bytes;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (ckpt.params[i].shape() != shapes[i]) throw ShapeError(-1, "checkpoint parameter shape mismatch");
    bytes += detail::encode_f64(ckpt.params[i].values());
  }
  detail::write_file(dir / "params.bin", bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  json m;
  try {
    m = json::parse(detail::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    if (m.at("format_version").get<std::string>() != kCheckpointFormat) {
      throw UnsupportedVersionError("unsupported checkpoint format_version '" +
                                    m.at("format_version").get<std::string>() + "'");
    }
    if (m.at("dtype").get<std::string>() != "float64") throw UnsupportedVersionError("unsupported dtype");
    ckpt.spec = spec_from(m.at("spec"));
    ckpt.hyperparameters = m.at("hyperparameters").get<std::map<std::string, double>>();
    ckpt.tags = m.at("tags").get<std::map<std::string, std::string>>();
    ckpt.seed = m.at("seed").get<std::uint64_t>();
    ckpt.step = m.at("step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  const auto shapes = param_shapes(ckpt.spec);
  const std::string bytes = detail::read_file(dir / "params.bin");
  const std::size_t expected = param_count(ckpt.spec) * 8;
  if (bytes.size() != expected) throw TruncatedFileError((dir / "params.bin").string(), expected, bytes.size());
  std::size_t off = 0;
  for (const auto& s : shapes) {
    Tensor t(s);
    for (double& v : t.values()) {
      v = detail::get_le<double, std::uint64_t>(bytes.data() + off);
      off += 8;
    }
    ckpt.params.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace visionrf::nn
