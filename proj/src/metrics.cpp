#include "safeood/metrics.hpp"

#include <algorithm>
#include <cstdint>

#include "safeood/error.hpp"

namespace safeood {

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require(!id_scores.empty() && !ood_scores.empty(), ErrorCode::precondition,
          "auroc: both score sets must be non-empty");

  // Merge-count wins and ties in integer arithmetic so the result is exact.
  std::vector<double> id_sorted(id_scores.begin(), id_scores.end());
  std::vector<double> ood_sorted(ood_scores.begin(), ood_scores.end());
  std::sort(id_sorted.begin(), id_sorted.end());
  std::sort(ood_sorted.begin(), ood_sorted.end());

  uint64_t twice_wins = 0;  // 2*wins + ties
  size_t i = 0;
  for (double ood : ood_sorted) {
    while (i < id_sorted.size() && id_sorted[i] < ood) ++i;
    size_t j = i;
    while (j < id_sorted.size() && id_sorted[j] == ood) ++j;
    twice_wins += 2 * static_cast<uint64_t>(i) + static_cast<uint64_t>(j - i);
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(id_sorted.size()) * static_cast<double>(ood_sorted.size()));
}

Fpr95Result fpr95(std::span<const double> id_scores, std::span<const double> ood_scores) {
  require(!id_scores.empty() && !ood_scores.empty(), ErrorCode::precondition,
          "fpr95: both score sets must be non-empty");

  size_t m = ood_scores.size();
  // smallest count c with c/m >= 0.95; t* is then the c-th largest ood score
  size_t c = (19 * m + 19) / 20;  // ceil(0.95*m)
  std::vector<double> ood_sorted(ood_scores.begin(), ood_scores.end());
  std::sort(ood_sorted.begin(), ood_sorted.end(), std::greater<>());
  double threshold = ood_sorted[c - 1];

  size_t fp = 0;
  for (double s : id_scores)
    if (s >= threshold) ++fp;

  Fpr95Result r;
  r.value = static_cast<double>(fp) / static_cast<double>(id_scores.size());
  r.quantization_warning = m < 20;
  return r;
}

double msp_score(std::span<const double> class_probs) {
  require(!class_probs.empty(), ErrorCode::precondition, "msp_score: empty probability vector");
  double m = *std::max_element(class_probs.begin(), class_probs.end());
  return 1.0 - m;
}

}  // namespace safeood
