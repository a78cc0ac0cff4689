#include "safeood/types.hpp"

#include <algorithm>

#include "safeood/error.hpp"

namespace safeood {

double iou(const BoundingBox& a, const BoundingBox& b) {
  double ix1 = std::max(a.x1, b.x1);
  double iy1 = std::max(a.y1, b.y1);
  double ix2 = std::min(a.x2, b.x2);
  double iy2 = std::min(a.y2, b.y2);
  double iw = ix2 - ix1;
  double ih = iy2 - iy1;
  if (iw <= 0 || ih <= 0) return 0.0;
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::optional<BoundingBox> clip_box(const BoundingBox& box, double image_w, double image_h) {
  BoundingBox c;
  c.x1 = std::clamp(box.x1, 0.0, image_w);
  c.y1 = std::clamp(box.y1, 0.0, image_h);
  c.x2 = std::clamp(box.x2, 0.0, image_w);
  c.y2 = std::clamp(box.y2, 0.0, image_h);
  if (c.width() < 1.0 || c.height() < 1.0) return std::nullopt;
  return c;
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::residual_shortcut_conv_bn: return "residual_shortcut_conv_bn";
    case LayerKind::block_conv_bn: return "block_conv_bn";
    case LayerKind::lateral_conv: return "lateral_conv";
    case LayerKind::head_conv: return "head_conv";
    case LayerKind::other: return "other";
  }
  return "other";
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "residual_shortcut_conv_bn") return LayerKind::residual_shortcut_conv_bn;
  if (name == "block_conv_bn") return LayerKind::block_conv_bn;
  if (name == "lateral_conv") return LayerKind::lateral_conv;
  if (name == "head_conv") return LayerKind::head_conv;
  if (name == "other") return LayerKind::other;
  fail(ErrorCode::parse, "unknown layer kind: " + name);
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::structural: return "structural";
    case ErrorCode::unsupported_backbone: return "unsupported_backbone";
    case ErrorCode::lookup: return "lookup";
    case ErrorCode::degenerate_box: return "degenerate_box";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::training_failure: return "training_failure";
    case ErrorCode::evaluation_degenerate: return "evaluation_degenerate";
    case ErrorCode::config: return "config";
  }
  return "unknown";
}

}  // namespace safeood
