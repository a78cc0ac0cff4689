#pragma once

#include <string>
#include <vector>

#include "safeood/types.hpp"

namespace safeood {

enum class LayerPath { shortcut, main };

// One entry of a declarative backbone description: a convolution layer with
// its graph wiring and the annotations needed to decide SAFE membership.
struct BackboneLayer {
  std::string id;
  LayerKind kind = LayerKind::other;
  int channels = 0;
  int stride = 1;
  std::vector<std::string> inputs;
  bool followed_by_batchnorm = false;
  LayerPath path = LayerPath::main;
};

struct BackboneDescription {
  std::string name;
  std::vector<BackboneLayer> layers;  // file order

  static BackboneDescription from_json_text(const std::string& text);
  static BackboneDescription from_json_file(const std::string& path);
  std::string to_json_text() const;
};

// Validates the layer graph (unique ids, known inputs, acyclic), orders it
// topologically and flags as SAFE exactly the shortcut-path convolutions
// whose output feeds directly into a BatchNorm. Pure function of the
// description. Throws:
//   structural             - malformed graph or kind annotations inconsistent
//                            with the shortcut+BatchNorm derivation
//   unsupported_backbone   - no layer matches the pattern (message names the
//                            closest non-matching layers)
std::vector<LayerSpec> identify_safe_layers(const BackboneDescription& desc);

std::vector<std::string> safe_layer_ids(const std::vector<LayerSpec>& specs);
std::vector<std::string> all_layer_ids(const std::vector<LayerSpec>& specs);

// Order-sensitive FNV-1a hash of a layer-id subset; keys vector caches and
// checkpoint headers.
uint64_t layer_subset_hash(const std::vector<std::string>& layer_ids);

}  // namespace safeood
