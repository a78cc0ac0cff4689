#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "safeood/error.hpp"

namespace safeood {

// Dense row-major tensor of doubles. Shapes are small (toy-pipeline scale),
// so this stays deliberately simple: a shape plus a flat buffer.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  // indexers for the layouts used here: {N,C,H,W}, {C,H,W}, {n}
  double& at(int n, int c, int h, int w) {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  double at(int n, int c, int h, int w) const {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  double& at(int c, int h, int w) {
    return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
  }
  double at(int c, int h, int w) const {
    return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
  }
  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace safeood
