#include "safeood/nn.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "safeood/error.hpp"

namespace safeood {

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void Conv2d::init(int in_c, int out_c, int k, int s, int p, Rng& rng) {
  in_ch = in_c;
  out_ch = out_c;
  ksize = k;
  stride = s;
  pad = p;
  weight = Tensor({out_c, in_c, k, k});
  bias = Tensor({out_c});
  wgrad = Tensor({out_c, in_c, k, k});
  bgrad = Tensor({out_c});
  double bound = std::sqrt(6.0 / (in_c * k * k));  // He-uniform
  for (auto& v : weight.data) v = rng.uniform(-bound, bound);
}

Tensor Conv2d::forward(const Tensor& x) const {
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  require(x.dim(1) == in_ch, ErrorCode::invalid_argument, "conv: channel mismatch");
  const int OH = out_extent(H), OW = out_extent(W);
  Tensor y({N, out_ch, OH, OW});

#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < N * out_ch; ++idx) {
    const int n = idx / out_ch, co = idx % out_ch;
    double* yp = y.ptr() + (static_cast<size_t>(n) * out_ch + co) * OH * OW;
    for (int i = 0; i < OH * OW; ++i) yp[i] = bias[static_cast<size_t>(co)];
    for (int ci = 0; ci < in_ch; ++ci) {
      const double* xp = x.ptr() + (static_cast<size_t>(n) * in_ch + ci) * H * W;
      const double* wp = weight.ptr() + (static_cast<size_t>(co) * in_ch + ci) * ksize * ksize;
      for (int kh = 0; kh < ksize; ++kh) {
        for (int kw = 0; kw < ksize; ++kw) {
          const double wv = wp[kh * ksize + kw];
          if (wv == 0.0) continue;
          for (int oh = 0; oh < OH; ++oh) {
            const int ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= H) continue;
            const double* xrow = xp + ih * W;
            double* yrow = yp + oh * OW;
            for (int ow = 0; ow < OW; ++ow) {
              const int iw = ow * stride - pad + kw;
              if (iw < 0 || iw >= W) continue;
              yrow[ow] += wv * xrow[iw];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gy, bool track_param_grads) {
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int OH = gy.dim(2), OW = gy.dim(3);
  Tensor gx({N, in_ch, H, W});

  if (track_param_grads) {
    // one thread owns all grads of one output channel; images processed in order
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_ch; ++co) {
      double bacc = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* gp = gy.ptr() + (static_cast<size_t>(n) * out_ch + co) * OH * OW;
        for (int i = 0; i < OH * OW; ++i) bacc += gp[i];
        for (int ci = 0; ci < in_ch; ++ci) {
          const double* xp = x.ptr() + (static_cast<size_t>(n) * in_ch + ci) * H * W;
          double* wg = wgrad.ptr() + (static_cast<size_t>(co) * in_ch + ci) * ksize * ksize;
          for (int kh = 0; kh < ksize; ++kh) {
            for (int kw = 0; kw < ksize; ++kw) {
              double acc = 0.0;
              for (int oh = 0; oh < OH; ++oh) {
                const int ih = oh * stride - pad + kh;
                if (ih < 0 || ih >= H) continue;
                const double* xrow = xp + ih * W;
                const double* grow = gp + oh * OW;
                for (int ow = 0; ow < OW; ++ow) {
                  const int iw = ow * stride - pad + kw;
                  if (iw < 0 || iw >= W) continue;
                  acc += grow[ow] * xrow[iw];
                }
              }
              wg[kh * ksize + kw] += acc;
            }
          }
        }
      }
      bgrad[static_cast<size_t>(co)] += bacc;
    }
  }

#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < N * in_ch; ++idx) {
    const int n = idx / in_ch, ci = idx % in_ch;
    double* gxp = gx.ptr() + (static_cast<size_t>(n) * in_ch + ci) * H * W;
    for (int co = 0; co < out_ch; ++co) {
      const double* gp = gy.ptr() + (static_cast<size_t>(n) * out_ch + co) * OH * OW;
      const double* wp = weight.ptr() + (static_cast<size_t>(co) * in_ch + ci) * ksize * ksize;
      for (int kh = 0; kh < ksize; ++kh) {
        for (int kw = 0; kw < ksize; ++kw) {
          const double wv = wp[kh * ksize + kw];
          if (wv == 0.0) continue;
          for (int oh = 0; oh < OH; ++oh) {
            const int ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= H) continue;
            double* gxrow = gxp + ih * W;
            const double* grow = gp + oh * OW;
            for (int ow = 0; ow < OW; ++ow) {
              const int iw = ow * stride - pad + kw;
              if (iw < 0 || iw >= W) continue;
              gxrow[iw] += wv * grow[ow];
            }
          }
        }
      }
    }
  }
  return gx;
}

void BatchNorm2d::init(int c) {
  ch = c;
  gamma = Tensor({c});
  beta = Tensor({c});
  ggrad = Tensor({c});
  bgrad = Tensor({c});
  running_mean = Tensor({c});
  running_var = Tensor({c});
  gamma.fill(1.0);
  running_var.fill(1.0);
}

Tensor BatchNorm2d::forward_train(const Tensor& x, Cache& cache) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(C == ch, ErrorCode::invalid_argument, "batchnorm: channel mismatch");
  const int64_t M = static_cast<int64_t>(N) * H * W;
  Tensor y(x.shape);
  cache.inv_std = Tensor({C});
  cache.xhat = Tensor(x.shape);

#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* xp = x.ptr() + (static_cast<size_t>(n) * C + c) * H * W;
      for (int i = 0; i < H * W; ++i) {
        sum += xp[i];
        sq += xp[i] * xp[i];
      }
    }
    const double mean = sum / M;
    const double var = std::max(0.0, sq / M - mean * mean);
    const double istd = 1.0 / std::sqrt(var + eps);
    cache.inv_std[static_cast<size_t>(c)] = istd;
    running_mean[static_cast<size_t>(c)] =
        (1.0 - momentum) * running_mean[static_cast<size_t>(c)] + momentum * mean;
    running_var[static_cast<size_t>(c)] =
        (1.0 - momentum) * running_var[static_cast<size_t>(c)] + momentum * var;
    const double g = gamma[static_cast<size_t>(c)], b = beta[static_cast<size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const size_t base = (static_cast<size_t>(n) * C + c) * H * W;
      const double* xp = x.ptr() + base;
      double* hp = cache.xhat.ptr() + base;
      double* yp = y.ptr() + base;
      for (int i = 0; i < H * W; ++i) {
        hp[i] = (xp[i] - mean) * istd;
        yp[i] = g * hp[i] + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::forward_eval(const Tensor& x) const {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(C == ch, ErrorCode::invalid_argument, "batchnorm: channel mismatch");
  Tensor y(x.shape);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const double istd = 1.0 / std::sqrt(running_var[static_cast<size_t>(c)] + eps);
    const double mean = running_mean[static_cast<size_t>(c)];
    const double g = gamma[static_cast<size_t>(c)], b = beta[static_cast<size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const size_t base = (static_cast<size_t>(n) * C + c) * H * W;
      const double* xp = x.ptr() + base;
      double* yp = y.ptr() + base;
      for (int i = 0; i < H * W; ++i) yp[i] = g * (xp[i] - mean) * istd + b;
    }
  }
  return y;
}

Tensor BatchNorm2d::backward_train(const Tensor& gy, const Cache& cache, bool track_param_grads) {
  const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
  const int64_t M = static_cast<int64_t>(N) * H * W;
  Tensor gx(gy.shape);

#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double gsum = 0.0, ghsum = 0.0;
    for (int n = 0; n < N; ++n) {
      const size_t base = (static_cast<size_t>(n) * C + c) * H * W;
      const double* gp = gy.ptr() + base;
      const double* hp = cache.xhat.ptr() + base;
      for (int i = 0; i < H * W; ++i) {
        gsum += gp[i];
        ghsum += gp[i] * hp[i];
      }
    }
    if (track_param_grads) {
      ggrad[static_cast<size_t>(c)] += ghsum;
      bgrad[static_cast<size_t>(c)] += gsum;
    }
    const double g = gamma[static_cast<size_t>(c)];
    const double istd = cache.inv_std[static_cast<size_t>(c)];
    const double mean_g = gsum / M;
    const double mean_gh = ghsum / M;
    for (int n = 0; n < N; ++n) {
      const size_t base = (static_cast<size_t>(n) * C + c) * H * W;
      const double* gp = gy.ptr() + base;
      const double* hp = cache.xhat.ptr() + base;
      double* op = gx.ptr() + base;
      for (int i = 0; i < H * W; ++i) {
        op[i] = g * istd * (gp[i] - mean_g - hp[i] * mean_gh);
      }
    }
  }
  return gx;
}

Tensor BatchNorm2d::backward_eval(const Tensor& gy) const {
  const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
  Tensor gx(gy.shape);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const double k =
        gamma[static_cast<size_t>(c)] / std::sqrt(running_var[static_cast<size_t>(c)] + eps);
    for (int n = 0; n < N; ++n) {
      const size_t base = (static_cast<size_t>(n) * C + c) * H * W;
      const double* gp = gy.ptr() + base;
      double* op = gx.ptr() + base;
      for (int i = 0; i < H * W; ++i) op[i] = k * gp[i];
    }
  }
  return gx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0 ? x.data[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx(gy.shape);
  for (size_t i = 0; i < gy.data.size(); ++i) gx.data[i] = y.data[i] > 0 ? gy.data[i] : 0.0;
  return gx;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorCode::invalid_argument, "add: shape mismatch");
  Tensor y(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) y.data[i] = a.data[i] + b.data[i];
  return y;
}

Tensor upsample_nearest2x(const Tensor& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor y({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* xp = x.ptr() + (static_cast<size_t>(n) * C + c) * H * W;
      double* yp = y.ptr() + (static_cast<size_t>(n) * C + c) * 4 * H * W;
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          const double v = xp[h * W + w];
          yp[(2 * h) * 2 * W + 2 * w] = v;
          yp[(2 * h) * 2 * W + 2 * w + 1] = v;
          yp[(2 * h + 1) * 2 * W + 2 * w] = v;
          yp[(2 * h + 1) * 2 * W + 2 * w + 1] = v;
        }
      }
    }
  }
  return y;
}

Tensor upsample_nearest2x_backward(const Tensor& gy) {
  const int N = gy.dim(0), C = gy.dim(1), H2 = gy.dim(2), W2 = gy.dim(3);
  const int H = H2 / 2, W = W2 / 2;
  Tensor gx({N, C, H, W});
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* gp = gy.ptr() + (static_cast<size_t>(n) * C + c) * H2 * W2;
      double* op = gx.ptr() + (static_cast<size_t>(n) * C + c) * H * W;
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          op[h * W + w] = gp[(2 * h) * W2 + 2 * w] + gp[(2 * h) * W2 + 2 * w + 1] +
                          gp[(2 * h + 1) * W2 + 2 * w] + gp[(2 * h + 1) * W2 + 2 * w + 1];
        }
      }
    }
  }
  return gx;
}

void SgdMomentum::add(Tensor* value, Tensor* grad, bool decay) {
  Slot s;
  s.value = value;
  s.grad = grad;
  s.velocity = Tensor(value->shape);
  s.decay = decay;
  slots.push_back(std::move(s));
}

void SgdMomentum::zero_grad() {
  for (auto& s : slots) s.grad->fill(0.0);
}

void SgdMomentum::step() {
  for (auto& s : slots) {
    for (size_t i = 0; i < s.value->data.size(); ++i) {
      double g = s.grad->data[i];
      if (s.decay) g += weight_decay * s.value->data[i];
      s.velocity.data[i] = momentum * s.velocity.data[i] + g;
      s.value->data[i] -= lr * s.velocity.data[i];
    }
  }
}

}  // namespace safeood
