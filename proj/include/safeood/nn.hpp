#pragma once

#include <vector>

#include "safeood/rng.hpp"
#include "safeood/tensor.hpp"

namespace safeood {

// Batch tensors are {N, C, H, W}. Backward passes keep one fixed reduction
// order per output slot so repeated runs are bit-identical regardless of the
// thread count.

struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
  Tensor weight;  // {out_ch, in_ch, k, k}
  Tensor bias;    // {out_ch}
  Tensor wgrad, bgrad;

  void init(int in_c, int out_c, int k, int s, int p, Rng& rng);
  int out_extent(int in_extent) const { return (in_extent + 2 * pad - ksize) / stride + 1; }
  Tensor forward(const Tensor& x) const;
  // Accumulates wgrad/bgrad (when track_param_grads) and returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& gy, bool track_param_grads);
};

struct BatchNorm2d {
  int ch = 0;
  double eps = 1e-5;
  double momentum = 0.1;  // running = (1-m)*running + m*batch
  Tensor gamma, beta, ggrad, bgrad;
  Tensor running_mean, running_var;  // biased batch variance, one convention throughout

  struct Cache {
    Tensor inv_std;  // {C}
    Tensor xhat;     // shape of x
  };

  void init(int c);
  Tensor forward_train(const Tensor& x, Cache& cache);
  Tensor forward_eval(const Tensor& x) const;
  Tensor backward_train(const Tensor& gy, const Cache& cache, bool track_param_grads);
  Tensor backward_eval(const Tensor& gy) const;
};

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& y, const Tensor& gy);  // mask from forward output
Tensor add(const Tensor& a, const Tensor& b);
Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& gy);

struct SgdMomentum {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;

  struct Slot {
    Tensor* value;
    Tensor* grad;
    Tensor velocity;
    bool decay;
  };
  std::vector<Slot> slots;

  void add(Tensor* value, Tensor* grad, bool decay);
  void zero_grad();
  void step();
};

void set_num_threads(int n);  // 0 = hardware default

}  // namespace safeood
