#pragma once

#include <span>
#include <vector>

#include "safeood/types.hpp"

namespace safeood {

// Probability that a random (id, ood) pair has ood > id, ties counted 0.5
// (Mann-Whitney). OOD is the positive class: higher score = more OOD.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

struct Fpr95Result {
  double value = 0.0;
  // fewer than 20 OOD scores: the 95% TPR threshold is heavily quantized
  bool quantization_warning = false;
};

// False-positive rate on ID scores at the largest threshold t* with
// fraction(ood >= t*) >= 0.95.
Fpr95Result fpr95(std::span<const double> id_scores, std::span<const double> ood_scores);

// 1 - max softmax probability; class_probs must be a probability vector.
double msp_score(std::span<const double> class_probs);

}  // namespace safeood
