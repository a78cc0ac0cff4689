#pragma once

#include <optional>
#include <string>
#include <vector>

#include "safeood/tensor.hpp"

namespace safeood {

// Pixel coordinates in input-image space, corners exclusive of (x2, y2).
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Clips to [0,w]x[0,h]; empty result means the clipped box collapsed
// (width or height < 1 pixel in input space).
std::optional<BoundingBox> clip_box(const BoundingBox& box, double image_w, double image_h);

struct Detection {
  BoundingBox box;
  int class_id = 0;
  double confidence = 0.0;
  std::vector<double> class_probs;  // softmax over the class head
};

struct Annotation {
  BoundingBox box;
  int class_id = 0;
};

enum class LayerKind {
  residual_shortcut_conv_bn,
  block_conv_bn,
  lateral_conv,
  head_conv,
  other,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  std::string layer_id;
  LayerKind kind = LayerKind::other;
  int channels = 0;
  int stride = 1;  // downsampling factor of this layer's output w.r.t. input pixels
  bool is_safe = false;
};

// One layer's activations for one image, post-BatchNorm.
struct FeatureMap {
  std::string layer_id;
  Tensor tensor;  // {channels, height, width}
  int stride = 1;

  int channels() const { return tensor.dim(0); }
  int height() const { return tensor.dim(1); }
  int width() const { return tensor.dim(2); }
};

struct LayerOffset {
  std::string layer_id;
  int start = 0;
  int length = 0;
};

// Per-detection concatenation of ROI-pooled layer features.
struct SafeVector {
  std::vector<double> values;
  std::vector<LayerOffset> layer_offsets;
  Detection source_detection;

  int length() const { return static_cast<int>(values.size()); }
};

struct LabeledSafeVector {
  SafeVector vector;
  int label = 0;  // 0 = clean/ID, 1 = perturbed/surrogate-OOD
};

struct EvalProvenance {
  uint64_t seed = 0;
  double epsilon_255 = 0.0;
  std::vector<std::string> layer_subset;
  double confidence_threshold = 0.5;
};

struct EvalResult {
  double auroc = 0.0;
  double fpr95 = 0.0;
  int n_id = 0;
  int n_ood = 0;
  bool fpr95_quantization_warning = false;
  EvalProvenance provenance;
};

}  // namespace safeood
