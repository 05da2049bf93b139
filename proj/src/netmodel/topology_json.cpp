#include <fstream>

#include "json.hpp"
#include "relprop/error.hpp"
#include "relprop/nnwb.hpp"

namespace relprop::nnwb {
namespace {

using nlohmann::json;

json layer_to_json(const LayerSpec& layer) {
  json j = {{"name", layer.name}, {"kind", std::string(layer_kind_name(layer.kind))}};
  if (layer.kind == LayerKind::Conv2D) {
    j["kernel_h"] = layer.kernel_h;
    j["kernel_w"] = layer.kernel_w;
    j["in_channels"] = layer.in_channels;
    j["out_channels"] = layer.out_channels;
    j["stride"] = layer.stride;
    j["padding"] = std::string(padding_name(layer.padding));
  } else if (layer.kind == LayerKind::Dense) {
    j["in_features"] = layer.in_features;
    j["out_features"] = layer.out_features;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec layer;
  layer.name = j.at("name").get<std::string>();
  layer.kind = parse_layer_kind(j.at("kind").get<std::string>());
  if (layer.kind == LayerKind::Conv2D) {
    layer.kernel_h = j.at("kernel_h").get<std::uint32_t>();
    layer.kernel_w = j.at("kernel_w").get<std::uint32_t>();
    layer.in_channels = j.at("in_channels").get<std::uint32_t>();
    layer.out_channels = j.at("out_channels").get<std::uint32_t>();
    layer.stride = j.value("stride", 1u);
    layer.padding = parse_padding(j.value("padding", std::string("valid")));
  } else if (layer.kind == LayerKind::Dense) {
    layer.in_features = j.at("in_features").get<std::uint32_t>();
    layer.out_features = j.at("out_features").get<std::uint32_t>();
  }
  return layer;
}

}  // namespace

void save_topology_json(const NetworkModel& model, const std::filesystem::path& json_path,
                        const std::filesystem::path& weights_path) {
  json layers = json::array();
  for (const auto& layer : model.layers()) layers.push_back(layer_to_json(layer));
  json doc = {{"weights", weights_path.generic_string()},
              {"input_shape", model.input_shape()},
              {"class_labels", model.class_labels()},
              {"layers", std::move(layers)}};
  std::ofstream out(json_path);
  if (!out) throw InvalidInput("cannot write '" + json_path.string() + "'");
  out << doc.dump(2) << '\n';
}

NetworkModel load_topology_json(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw InvalidInput("cannot open '" + json_path.string() + "'");
  json doc;
  std::vector<LayerSpec> layers;
  Shape input_shape;
  std::vector<std::string> labels;
  std::filesystem::path weights;
  try {
    doc = json::parse(in);
    for (const auto& j : doc.at("layers")) layers.push_back(layer_from_json(j));
    input_shape = doc.at("input_shape").get<Shape>();
    labels = doc.at("class_labels").get<std::vector<std::string>>();
    weights = doc.at("weights").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidInput("topology sidecar '" + json_path.string() + "': " + e.what());
  }
  if (weights.is_relative()) weights = json_path.parent_path() / weights;

  const auto stored = load_weights(weights);
  if (stored.layers() != layers) {
    throw InvalidInput("topology sidecar '" + json_path.string() +
                       "' disagrees with the layer declarations in '" + weights.string() + "'");
  }
  // Parameters come from NNWB; shape and labels from the sidecar. Both pass
  // through the same validation as a plain NNWB load.
  return NetworkModel::create(std::move(layers), stored.all_params(), std::move(input_shape),
                              std::move(labels), json_path.stem().string());
}

}  // namespace relprop::nnwb
