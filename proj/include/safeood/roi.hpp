#pragma once

#include <vector>

#include "safeood/types.hpp"

namespace safeood {

struct RoiPoolConfig {
  // Samples per axis over the box. 0 selects the exact average of the
  // bilinear surface (closed form); n >= 1 averages an n x n grid of
  // midpoint samples, torchvision-style.
  int sampling_ratio = 0;
  // Shift box coordinates by -0.5 map cells before sampling so cell centers
  // sit at integer coordinates ("aligned" ROI convention).
  bool aligned = true;
};

// Pools the box region of a feature map to one scalar per channel. Box
// coordinates are in input-image space and are divided by map.stride; the
// sampled surface is the bilinear interpolation of the map with coordinates
// clamped to the map bounds. Throws degenerate_box when the box is thinner
// than one input pixel on either axis.
std::vector<double> roi_pool_vector(const FeatureMap& map, const BoundingBox& box,
                                    const RoiPoolConfig& cfg = {});

// Concatenates roi_pool_vector outputs over the given maps (assumed to be in
// network order, all from one image) and records per-layer offsets.
SafeVector build_safe_vector(const std::vector<FeatureMap>& maps, const BoundingBox& box,
                             const RoiPoolConfig& cfg = {});

}  // namespace safeood
