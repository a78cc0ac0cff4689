#include "safeood/introspect.hpp"

#include <algorithm>
#include <cmath>

#include "safeood/error.hpp"

namespace safeood {

namespace {

double l2_distance(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

SensitivityReport sensitivity_probe(const FeatureExtractor& extractor,
                                    const std::vector<std::pair<Image, Image>>& pairs,
                                    const std::vector<std::string>& layer_ids) {
  require(pairs.size() >= 2, ErrorCode::precondition, "sensitivity_probe: need at least 2 pairs");
  require(!layer_ids.empty(), ErrorCode::precondition, "sensitivity_probe: no layers requested");

  std::vector<std::vector<double>> ratios(layer_ids.size());
  int skipped = 0;
  for (const auto& [x, xs] : pairs) {
    double input_dist = l2_distance(x.tensor, xs.tensor);
    if (input_dist == 0.0) {
      ++skipped;
      continue;
    }
    std::vector<FeatureMap> fx = extractor.extract_feature_maps(x, layer_ids);
    std::vector<FeatureMap> fxs = extractor.extract_feature_maps(xs, layer_ids);
    for (size_t l = 0; l < layer_ids.size(); ++l) {
      ratios[l].push_back(l2_distance(fx[l].tensor, fxs[l].tensor) / input_dist);
    }
  }
  require(skipped < static_cast<int>(pairs.size()), ErrorCode::degenerate_input,
          "sensitivity_probe: all pairs identical");

  SensitivityReport report;
  report.skipped_identical_pairs = skipped;
  for (size_t l = 0; l < layer_ids.size(); ++l) {
    SensitivityEntry e;
    e.layer_id = layer_ids[l];
    const auto& r = ratios[l];
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(r.size());
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(r.size());
    e.mean_ratio = mean;
    e.std_ratio = std::sqrt(var);
    report.entries.push_back(std::move(e));
  }
  return report;
}

AbnormalityReport activation_abnormality(const FeatureExtractor& extractor,
                                         const std::vector<Image>& id_images,
                                         const std::vector<Image>& ood_images,
                                         const std::vector<std::string>& safe_layer_ids) {
  require(!id_images.empty() && !ood_images.empty(), ErrorCode::precondition,
          "activation_abnormality: both image sets must be non-empty");
  require(!safe_layer_ids.empty(), ErrorCode::precondition,
          "activation_abnormality: no layers requested");

  auto mean_max = [&](const std::vector<Image>& images, std::vector<double>& out) {
    out.assign(safe_layer_ids.size(), 0.0);
    for (const Image& img : images) {
      std::vector<FeatureMap> maps = extractor.extract_feature_maps(img, safe_layer_ids);
      for (size_t l = 0; l < maps.size(); ++l) out[l] += max_abs(maps[l].tensor);
    }
    for (double& v : out) v /= static_cast<double>(images.size());
  };

  std::vector<double> id_means, ood_means;
  mean_max(id_images, id_means);
  mean_max(ood_images, ood_means);

  AbnormalityReport report;
  for (size_t l = 0; l < safe_layer_ids.size(); ++l) {
    AbnormalityEntry e;
    e.layer_id = safe_layer_ids[l];
    e.mean_max_activation_id = id_means[l];
    e.mean_max_activation_ood = ood_means[l];
    e.ratio = id_means[l] != 0.0 ? ood_means[l] / id_means[l] : 0.0;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace safeood
