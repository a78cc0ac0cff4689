#include "safeood/backbone.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "safeood/error.hpp"
#include "safeood/rng.hpp"

namespace safeood {

using nlohmann::json;

BackboneDescription BackboneDescription::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::parse, std::string("backbone description: ") + e.what());
  }
  require(j.is_object() && j.contains("layers") && j["layers"].is_array(), ErrorCode::parse,
          "backbone description: top-level 'layers' array required");

  BackboneDescription desc;
  desc.name = j.value("name", "");
  for (size_t i = 0; i < j["layers"].size(); ++i) {
    const json& e = j["layers"][i];
    std::string where = "layers[" + std::to_string(i) + "]";
    require(e.is_object(), ErrorCode::parse, where + ": object required");
    for (const char* key : {"id", "kind", "channels", "stride", "inputs",
                            "followed_by_batchnorm", "path"}) {
      require(e.contains(key), ErrorCode::parse, where + ": missing field '" + key + "'");
    }
    BackboneLayer layer;
    layer.id = e["id"].get<std::string>();
    layer.kind = layer_kind_from_name(e["kind"].get<std::string>());
    layer.channels = e["channels"].get<int>();
    layer.stride = e["stride"].get<int>();
    require(layer.channels > 0, ErrorCode::parse, where + ": channels must be positive");
    require(layer.stride > 0, ErrorCode::parse, where + ": stride must be positive");
    for (const auto& in : e["inputs"]) layer.inputs.push_back(in.get<std::string>());
    layer.followed_by_batchnorm = e["followed_by_batchnorm"].get<bool>();
    std::string path = e["path"].get<std::string>();
    if (path == "shortcut") {
      layer.path = LayerPath::shortcut;
    } else if (path == "main") {
      layer.path = LayerPath::main;
    } else {
      fail(ErrorCode::parse, where + ": path must be 'shortcut' or 'main', got '" + path + "'");
    }
    desc.layers.push_back(std::move(layer));
  }
  return desc;
}

BackboneDescription BackboneDescription::from_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open backbone description: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string BackboneDescription::to_json_text() const {
  json j;
  if (!name.empty()) j["name"] = name;
  j["layers"] = json::array();
  for (const auto& l : layers) {
    json e;
    e["id"] = l.id;
    e["kind"] = layer_kind_name(l.kind);
    e["channels"] = l.channels;
    e["stride"] = l.stride;
    e["inputs"] = l.inputs;
    e["followed_by_batchnorm"] = l.followed_by_batchnorm;
    e["path"] = l.path == LayerPath::shortcut ? "shortcut" : "main";
    j["layers"].push_back(e);
  }
  return j.dump(2) + "\n";
}

namespace {

// Kahn topological sort, stable w.r.t. file order. Throws on cycles.
std::vector<size_t> topological_order(const BackboneDescription& desc) {
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < desc.layers.size(); ++i) {
    auto [it, inserted] = index.emplace(desc.layers[i].id, i);
    require(inserted, ErrorCode::structural, "duplicate layer id: " + desc.layers[i].id);
  }

  std::vector<std::vector<size_t>> consumers(desc.layers.size());
  std::vector<size_t> indegree(desc.layers.size(), 0);
  for (size_t i = 0; i < desc.layers.size(); ++i) {
    for (const auto& in : desc.layers[i].inputs) {
      auto it = index.find(in);
      require(it != index.end(), ErrorCode::structural,
              "layer '" + desc.layers[i].id + "' references unknown input '" + in + "'");
      consumers[it->second].push_back(i);
      ++indegree[i];
    }
  }

  std::vector<size_t> ready;
  for (size_t i = 0; i < desc.layers.size(); ++i)
    if (indegree[i] == 0) ready.push_back(i);

  std::vector<size_t> order;
  while (!ready.empty()) {
    std::sort(ready.begin(), ready.end());
    size_t i = ready.front();
    ready.erase(ready.begin());
    order.push_back(i);
    for (size_t c : consumers[i])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  require(order.size() == desc.layers.size(), ErrorCode::structural,
          "backbone description contains a cycle");
  return order;
}

}  // namespace

std::vector<LayerSpec> identify_safe_layers(const BackboneDescription& desc) {
  require(!desc.layers.empty(), ErrorCode::structural, "backbone description has no layers");
  std::vector<size_t> order = topological_order(desc);

  std::vector<LayerSpec> specs;
  specs.reserve(desc.layers.size());
  std::vector<std::string> near_misses;
  for (size_t i : order) {
    const BackboneLayer& l = desc.layers[i];
    bool derived_safe = l.path == LayerPath::shortcut && l.followed_by_batchnorm;
    bool declared_safe = l.kind == LayerKind::residual_shortcut_conv_bn;
    require(derived_safe == declared_safe, ErrorCode::structural,
            "layer '" + l.id + "': kind '" + layer_kind_name(l.kind) +
                "' inconsistent with path/batchnorm annotations");
    if (!derived_safe && (l.path == LayerPath::shortcut || l.followed_by_batchnorm)) {
      near_misses.push_back(l.id);
    }
    LayerSpec spec;
    spec.layer_id = l.id;
    spec.kind = l.kind;
    spec.channels = l.channels;
    spec.stride = l.stride;
    spec.is_safe = derived_safe;
    specs.push_back(std::move(spec));
  }

  bool any_safe = std::any_of(specs.begin(), specs.end(), [](const LayerSpec& s) { return s.is_safe; });
  if (!any_safe) {
    std::string msg = "no SAFE layers: no shortcut-path convolution feeds a BatchNorm";
    if (!near_misses.empty()) {
      msg += "; closest non-matching layers:";
      size_t shown = std::min<size_t>(near_misses.size(), 8);
      for (size_t i = 0; i < shown; ++i) msg += " " + near_misses[i];
    }
    fail(ErrorCode::unsupported_backbone, msg);
  }
  return specs;
}

std::vector<std::string> safe_layer_ids(const std::vector<LayerSpec>& specs) {
  std::vector<std::string> ids;
  for (const auto& s : specs)
    if (s.is_safe) ids.push_back(s.layer_id);
  return ids;
}

std::vector<std::string> all_layer_ids(const std::vector<LayerSpec>& specs) {
  std::vector<std::string> ids;
  ids.reserve(specs.size());
  for (const auto& s : specs) ids.push_back(s.layer_id);
  return ids;
}

uint64_t layer_subset_hash(const std::vector<std::string>& layer_ids) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& id : layer_ids) {
    h = fnv1a(id.data(), id.size(), h);
    h = fnv1a("\x1f", 1, h);
  }
  return h;
}

}  // namespace safeood
