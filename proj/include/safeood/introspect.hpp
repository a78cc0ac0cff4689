#pragma once

#include <string>
#include <vector>

#include "safeood/image.hpp"
#include "safeood/toy_detector.hpp"
#include "safeood/types.hpp"

namespace safeood {

struct SensitivityEntry {
  std::string layer_id;
  double mean_ratio = 0.0;
  double std_ratio = 0.0;
};

struct SensitivityReport {
  std::vector<SensitivityEntry> entries;  // in the given layer order
  int skipped_identical_pairs = 0;
};

// Empirical lower-bound probe for the feature-space sensitivity of each
// layer: ratio = ||f_l(x) - f_l(x*)||_2 / ||x - x*||_2 over the given pairs.
// Pairs with zero input distance are skipped with a warning count; if all
// pairs are identical the input is degenerate.
SensitivityReport sensitivity_probe(const FeatureExtractor& extractor,
                                    const std::vector<std::pair<Image, Image>>& pairs,
                                    const std::vector<std::string>& layer_ids);

struct AbnormalityEntry {
  std::string layer_id;
  double mean_max_activation_id = 0.0;
  double mean_max_activation_ood = 0.0;
  double ratio = 0.0;  // ood / id
};

struct AbnormalityReport {
  std::vector<AbnormalityEntry> entries;
};

// Per SAFE layer: mean over images of the max |post-BatchNorm activation|,
// for an ID set and an OOD set, plus the ood/id ratio.
AbnormalityReport activation_abnormality(const FeatureExtractor& extractor,
                                         const std::vector<Image>& id_images,
                                         const std::vector<Image>& ood_images,
                                         const std::vector<std::string>& safe_layer_ids);

}  // namespace safeood
