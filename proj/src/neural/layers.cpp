/* Copyright 2026 The LaneSentinel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "lanesentinel/neural/layers.hpp"

#include <cmath>
#include <string>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/kernels/kernels.hpp"

namespace lanesentinel::nn {

namespace {

void expect_rank4(const std::vector<int>& s, int channels, const char* who) {
  if (s.size() != 4 || s[1] != channels)
    throw Error(Errc::kShapeMismatch, std::string(who) + ": expected [N, " + std::to_string(channels) + ", H, W]");
}

// Copies one [C, H, W] sample into a zero border of width 1.
template <class T>
void pad1(const T* src, int c, int h, int w, std::vector<T>& dst) {
  const int pw = w + 2;
  dst.assign(static_cast<std::size_t>(c) * (h + 2) * pw, T(0));
  for (int i = 0; i < c; ++i)
    for (int y = 0; y < h; ++y) {
      const T* s = src + (static_cast<std::size_t>(i) * h + y) * w;
      std::copy(s, s + w, dst.data() + (static_cast<std::size_t>(i) * (h + 2) + y + 1) * pw + 1);
    }
}

}  // namespace

template <class T>
Conv2d<T>::Conv2d(int in, int out, int s, int p)
    : in_channels(in), out_channels(out), stride(s), padding(p), weight({out, in, 3, 3}), bias({out}) {}

template <class T>
void Conv2d<T>::init(Rng& rng) {
  const double std = std::sqrt(2.0 / (in_channels * 9.0));
  for (auto& w : weight.data) w = static_cast<T>(normal(rng, 0.0, std));
  bias.fill(T(0));
}

template <class T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  expect_rank4(x.shape, in_channels, "conv2d");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = out_extent(h), ow = out_extent(w);
  if (oh < 1 || ow < 1) throw Error(Errc::kShapeMismatch, "conv2d: input smaller than kernel");
  Tensor<T> y({n, out_channels, oh, ow});
  const std::size_t in_sz = static_cast<std::size_t>(in_channels) * h * w;
  const std::size_t out_sz = static_cast<std::size_t>(out_channels) * oh * ow;
  if (stride == 1 && padding == 1) {
    std::vector<T> padded;
    for (int b = 0; b < n; ++b) {
      pad1(x.ptr() + b * in_sz, in_channels, h, w, padded);
      kernels::conv3x3_same<T>({padded.data(), in_channels, h, w, weight.ptr(), bias.ptr(), y.ptr() + b * out_sz,
                                out_channels});
    }
    return y;
  }
  for (int b = 0; b < n; ++b) {
    const T* xb = x.ptr() + b * in_sz;
    T* yb = y.ptr() + b * out_sz;
    for (int o = 0; o < out_channels; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          T acc = bias.data[o];
          for (int i = 0; i < in_channels; ++i) {
            const T* wk = weight.ptr() + (static_cast<std::size_t>(o) * in_channels + i) * 9;
            const T* xi = xb + static_cast<std::size_t>(i) * h * w;
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * stride - padding + kx;
                if (ix < 0 || ix >= w) continue;
                acc += wk[ky * 3 + kx] * xi[iy * w + ix];
              }
            }
          }
          yb[(static_cast<std::size_t>(o) * oh + oy) * ow + ox] = acc;
        }
  }
  return y;
}

template <class T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gw, Tensor<T>* gb,
                              bool want_input_grad) const {
  expect_rank4(x.shape, in_channels, "conv2d backward");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = out_extent(h), ow = out_extent(w);
  if (gy.shape != std::vector<int>{n, out_channels, oh, ow})
    throw Error(Errc::kStaleCache, "conv2d backward: gradient shape does not match the forward pass");
  const std::size_t in_sz = static_cast<std::size_t>(in_channels) * h * w;
  const std::size_t out_sz = static_cast<std::size_t>(out_channels) * oh * ow;
  Tensor<T> gx;
  if (want_input_grad) gx = Tensor<T>(x.shape);

  if (stride == 1 && padding == 1) {
    // Input gradient is a same-padded convolution of gy with the spatially
    // flipped, channel-transposed kernel.
    Tensor<T> flipped({in_channels, out_channels, 3, 3});
    for (int o = 0; o < out_channels; ++o)
      for (int i = 0; i < in_channels; ++i)
        for (int k = 0; k < 9; ++k)
          flipped.data[(static_cast<std::size_t>(i) * out_channels + o) * 9 + (8 - k)] =
              weight.data[(static_cast<std::size_t>(o) * in_channels + i) * 9 + k];
    std::vector<T> padded;
    for (int b = 0; b < n; ++b) {
      if (gw || gb) {
        pad1(x.ptr() + b * in_sz, in_channels, h, w, padded);
        kernels::conv3x3_weight_grad<T>({padded.data(), in_channels, h, w, gy.ptr() + b * out_sz, out_channels,
                                         gw ? gw->ptr() : nullptr, gb ? gb->ptr() : nullptr});
      }
      if (want_input_grad) {
        pad1(gy.ptr() + b * out_sz, out_channels, h, w, padded);
        kernels::conv3x3_same<T>({padded.data(), out_channels, h, w, flipped.ptr(), nullptr, gx.ptr() + b * in_sz,
                                  in_channels});
      }
    }
    return gx;
  }

  for (int b = 0; b < n; ++b) {
    const T* xb = x.ptr() + b * in_sz;
    const T* gb_ = gy.ptr() + b * out_sz;
    T* gxb = want_input_grad ? gx.ptr() + b * in_sz : nullptr;
    for (int o = 0; o < out_channels; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const T g = gb_[(static_cast<std::size_t>(o) * oh + oy) * ow + ox];
          if (gb) gb->data[o] += g;
          for (int i = 0; i < in_channels; ++i) {
            const std::size_t wbase = (static_cast<std::size_t>(o) * in_channels + i) * 9;
            const std::size_t ibase = static_cast<std::size_t>(i) * h * w;
            for (int ky = 0; ky < 3; ++ky) {
              const int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int ix = ox * stride - padding + kx;
                if (ix < 0 || ix >= w) continue;
                if (gw) gw->data[wbase + ky * 3 + kx] += g * xb[ibase + iy * w + ix];
                if (gxb) gxb[ibase + iy * w + ix] += g * weight.data[wbase + ky * 3 + kx];
              }
            }
          }
        }
  }
  return gx;
}

template <class T>
BatchNorm2d<T>::BatchNorm2d(int c)
    : channels(c), gamma({c}, T(1)), beta({c}, T(0)), running_mean({c}, T(0)), running_var({c}, T(1)) {}

template <class T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode, BatchNormCache<T>* cache) const {
  expect_rank4(x.shape, channels, "batchnorm");
  const int n = x.dim(0);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const double m = static_cast<double>(n) * hw;
  std::vector<T> mean(channels), var(channels), inv_std(channels);
  for (int c = 0; c < channels; ++c) {
    if (mode == Mode::kTrain) {
      double s = 0.0, ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = x.ptr() + (static_cast<std::size_t>(b) * channels + c) * hw;
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
      }
      const double mu = s / m;
      for (int b = 0; b < n; ++b) {
        const T* p = x.ptr() + (static_cast<std::size_t>(b) * channels + c) * hw;
        for (std::size_t k = 0; k < hw; ++k) ss += (p[k] - mu) * (p[k] - mu);
      }
      mean[c] = static_cast<T>(mu);
      var[c] = static_cast<T>(ss / m);
    } else {
      mean[c] = running_mean.data[c];
      var[c] = running_var.data[c];
    }
    inv_std[c] = T(1) / std::sqrt(var[c] + eps);
  }
  Tensor<T> y(x.shape);
  Tensor<T> xhat;
  if (cache) xhat = Tensor<T>(x.shape);
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        const T xh = (x.data[off + k] - mean[c]) * inv_std[c];
        if (cache) xhat.data[off + k] = xh;
        y.data[off + k] = gamma.data[c] * xh + beta.data[c];
      }
    }
  if (cache) {
    cache->mode = mode;
    cache->shape = x.shape;
    cache->xhat = std::move(xhat);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
Tensor<T> BatchNorm2d<T>::backward(const BatchNormCache<T>& cache, const Tensor<T>& gy, Tensor<T>* ggamma,
                                   Tensor<T>* gbeta) const {
  if (gy.shape != cache.shape) throw Error(Errc::kStaleCache, "batchnorm backward: shape differs from forward");
  const int n = gy.dim(0);
  const std::size_t hw = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
  const double m = static_cast<double>(n) * hw;
  Tensor<T> gx(gy.shape);
  for (int c = 0; c < channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum_g += gy.data[off + k];
        sum_gx += gy.data[off + k] * cache.xhat.data[off + k];
      }
    }
    if (ggamma) ggamma->data[c] += static_cast<T>(sum_gx);
    if (gbeta) gbeta->data[c] += static_cast<T>(sum_g);
    const T g = gamma.data[c];
    const T is = cache.inv_std[c];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels + c) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        if (cache.mode == Mode::kEval) {
          gx.data[off + k] = gy.data[off + k] * g * is;
        } else {
          const double d = gy.data[off + k] - sum_g / m - cache.xhat.data[off + k] * sum_gx / m;
          gx.data[off + k] = static_cast<T>(g * is * d);
        }
      }
    }
  }
  return gx;
}

template <class T>
void BatchNorm2d<T>::update_running_stats(const BatchNormCache<T>& cache) {
  if (cache.mode != Mode::kTrain) return;
  const double m = static_cast<double>(cache.shape[0]) * cache.shape[2] * cache.shape[3];
  const double unbias = m > 1 ? m / (m - 1) : 1.0;
  for (int c = 0; c < channels; ++c) {
    running_mean.data[c] = (1 - momentum) * running_mean.data[c] + momentum * cache.mean[c];
    running_var.data[c] = static_cast<T>((1 - momentum) * running_var.data[c] + momentum * cache.var[c] * unbias);
  }
}

template <class T>
Linear<T>::Linear(int in, int out) : in_features(in), out_features(out), weight({out, in}), bias({out}) {}

template <class T>
void Linear<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  for (auto& w : weight.data) w = static_cast<T>(uniform(rng, -bound, bound));
  bias.fill(T(0));
}

template <class T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  if (x.shape.size() != 2 || x.dim(1) != in_features)
    throw Error(Errc::kShapeMismatch, "linear: expected [N, " + std::to_string(in_features) + "]");
  const int n = x.dim(0);
  Tensor<T> y({n, out_features});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out_features; ++o)
      y.data[static_cast<std::size_t>(b) * out_features + o] =
          bias.data[o] + kernels::dot<T>(weight.ptr() + static_cast<std::size_t>(o) * in_features,
                                         x.ptr() + static_cast<std::size_t>(b) * in_features, in_features);
  return y;
}

template <class T>
Tensor<T> Linear<T>::backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gw, Tensor<T>* gb,
                              bool want_input_grad) const {
  const int n = x.dim(0);
  if (gy.shape != std::vector<int>{n, out_features})
    throw Error(Errc::kStaleCache, "linear backward: gradient shape does not match the forward pass");
  Tensor<T> gx;
  if (want_input_grad) gx = Tensor<T>(x.shape);
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out_features; ++o) {
      const T g = gy.data[static_cast<std::size_t>(b) * out_features + o];
      const T* xb = x.ptr() + static_cast<std::size_t>(b) * in_features;
      const T* wo = weight.ptr() + static_cast<std::size_t>(o) * in_features;
      if (gb) gb->data[o] += g;
      if (gw) {
        T* gwo = gw->ptr() + static_cast<std::size_t>(o) * in_features;
        for (int i = 0; i < in_features; ++i) gwo[i] += g * xb[i];
      }
      if (want_input_grad) {
        T* gxb = gx.ptr() + static_cast<std::size_t>(b) * in_features;
        for (int i = 0; i < in_features; ++i) gxb[i] += g * wo[i];
      }
    }
  return gx;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  kernels::relu<T>(x.ptr(), y.ptr(), x.numel());
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& activation, const Tensor<T>& dy) {
  if (!activation.same_shape(dy)) throw Error(Errc::kStaleCache, "relu backward: shape differs from forward");
  Tensor<T> dx(dy.shape);
  kernels::relu_backward<T>(activation.ptr(), dy.ptr(), dx.ptr(), dy.numel());
  return dx;
}

#define LS_INSTANTIATE(T)                                                     \
  template struct Conv2d<T>;                                                  \
  template struct BatchNorm2d<T>;                                             \
  template struct Linear<T>;                                                  \
  template Tensor<T> relu<T>(const Tensor<T>&);                               \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);
LS_INSTANTIATE(float)
LS_INSTANTIATE(double)
#undef LS_INSTANTIATE

}  // namespace lanesentinel::nn
