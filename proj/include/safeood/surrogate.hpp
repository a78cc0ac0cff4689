#pragma once

#include <functional>
#include <string>
#include <vector>

#include "safeood/image.hpp"
#include "safeood/roi.hpp"
#include "safeood/synth.hpp"
#include "safeood/toy_detector.hpp"
#include "safeood/types.hpp"

namespace safeood {

struct PerturbConfig {
  // epsilon on the 0-255 intensity scale; divided by 255 internally since
  // images live in [0, 1]
  double epsilon_255 = 8.0;
  enum class LossKind { full_detection_loss } loss_kind = LossKind::full_detection_loss;
  bool clip_to_range = true;
};

// x^o = clip(x + (eps/255) * sign(dJ/dx), 0, 1); model parameters unchanged.
Image fgsm_perturb(const Image& image, const ToyDetector& detector,
                   const std::vector<Annotation>& targets, const PerturbConfig& config);

struct SurrogateConfig {
  PerturbConfig perturb;
  double confidence_threshold = 0.5;  // suppression for clean-image boxes
  RoiPoolConfig roi;
};

struct PairGenStats {
  int images_processed = 0;
  int images_without_boxes = 0;
  int degenerate_boxes_skipped = 0;
  int vectors_emitted = 0;
};

// For each image: detect boxes on the clean image, pool SAFE vectors from
// the clean image (label 0) and from the FGSM-perturbed image at the same
// boxes (label 1). Streams results through the sink, grouped by image.
PairGenStats generate_training_pairs(
    const Dataset& dataset, const ToyDetector& detector,
    const std::vector<std::string>& layer_ids, const SurrogateConfig& config,
    const std::function<void(size_t image_index, std::vector<LabeledSafeVector>&&)>& sink);

// Vector cache: `SAFEVEC1` magic, then records of
//   image_id u32 | box_index u32 | label u32 | epsilon_255 f32 |
//   layer_subset_hash u64 | vector_length u32 | f32 * vector_length
// all little-endian.
struct CacheRecord {
  uint32_t image_id = 0;
  uint32_t box_index = 0;
  uint32_t label = 0;
  float epsilon_255 = 0.0f;
  uint64_t layer_subset_hash = 0;
  std::vector<float> values;
};

void write_vector_cache(const std::string& path, const std::vector<CacheRecord>& records);
std::vector<CacheRecord> read_vector_cache(const std::string& path);

// Cache file name for (split tag, epsilon, layer subset) under a cache dir.
std::string vector_cache_path(const std::string& cache_dir, const std::string& split_tag,
                              double epsilon_255, uint64_t subset_hash);

}  // namespace safeood
