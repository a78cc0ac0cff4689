#pragma once

#include <string>

#include "safeood/tensor.hpp"

namespace safeood {

// RGB image, values in [0, 1], stored {3, H, W}.
struct Image {
  Tensor tensor;

  Image() = default;
  Image(int h, int w) : tensor({3, h, w}) {}
  int height() const { return tensor.dim(1); }
  int width() const { return tensor.dim(2); }
  double& at(int c, int y, int x) { return tensor.at(c, y, x); }
  double at(int c, int y, int x) const { return tensor.at(c, y, x); }
};

// 8-bit RGB PNG round trip; values quantized to k/255 on write.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Axis-aligned rectangle outline, clipped to the image.
void draw_rect(Image& img, double x1, double y1, double x2, double y2, double r, double g,
               double b, int thickness = 1);

}  // namespace safeood
