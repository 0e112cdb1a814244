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

#pragma once

// Data-parallel inner loops shared by the networks and the attacks.
//
// Every kernel has a scalar reference implementation (templated so the
// gradient checks can run it in double precision) and optional SIMD variants
// for float. The variant is chosen once at startup from CPUID; setting
// LANE_SENTINEL_SIMD=scalar forces the reference path.

#include <cstddef>
#include <type_traits>
#include <string_view>
#include <vector>

namespace lanesentinel::kernels {

// Same-size 3x3 convolution (stride 1, zero padding 1) on planar data.
// `input` holds in_channels planes of (height+2) x (width+2) whose one-pixel
// border is zero. Weights are [out][in][3][3].
template <class T>
struct Conv3x3Problem {
  const T* input = nullptr;
  int in_channels = 0;
  int height = 0;
  int width = 0;
  const T* weights = nullptr;
  const T* bias = nullptr;  // may be null
  T* output = nullptr;      // [out][height][width], overwritten
  int out_channels = 0;
};

// Accumulates dL/dW and dL/db for the convolution above.
template <class T>
struct Conv3x3GradProblem {
  const T* input = nullptr;  // padded, as in Conv3x3Problem
  int in_channels = 0;
  int height = 0;
  int width = 0;
  const T* grad_output = nullptr;  // [out][height][width]
  int out_channels = 0;
  T* grad_weights = nullptr;  // accumulated into
  T* grad_bias = nullptr;     // accumulated into, may be null
};

struct KernelTable {
  std::string_view name;
  void (*conv3x3_same)(const Conv3x3Problem<float>&);
  void (*conv3x3_weight_grad)(const Conv3x3GradProblem<float>&);
  // y = max(x, 0)
  void (*relu)(const float* x, float* y, std::size_t n);
  // dx = dy where activation > 0, else 0
  void (*relu_backward)(const float* activation, const float* dy, float* dx, std::size_t n);
  // x = clamp(x - step * sign(g), lo, hi); sign(0) = 0
  void (*sign_step_box)(float* x, const float* g, const float* lo, const float* hi, float step, std::size_t n);
  float (*dot)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_table();
const KernelTable* avx2_table();  // null unless compiled in and supported by the CPU
const KernelTable* neon_table();  // null unless compiled in
const KernelTable& active();
std::vector<const KernelTable*> available_tables();

namespace reference {

template <class T>
void conv3x3_same(const Conv3x3Problem<T>& p) {
  const int H = p.height, W = p.width, PW = W + 2;
  const std::size_t in_plane = static_cast<std::size_t>(H + 2) * PW;
  for (int o = 0; o < p.out_channels; ++o) {
    T* out = p.output + static_cast<std::size_t>(o) * H * W;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        T acc = p.bias ? p.bias[o] : T(0);
        for (int i = 0; i < p.in_channels; ++i) {
          const T* in = p.input + i * in_plane;
          const T* w = p.weights + (static_cast<std::size_t>(o) * p.in_channels + i) * 9;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) acc += w[ky * 3 + kx] * in[(y + ky) * PW + x + kx];
        }
        out[y * W + x] = acc;
      }
    }
  }
}

template <class T>
void conv3x3_weight_grad(const Conv3x3GradProblem<T>& p) {
  const int H = p.height, W = p.width, PW = W + 2;
  const std::size_t in_plane = static_cast<std::size_t>(H + 2) * PW;
  for (int o = 0; o < p.out_channels; ++o) {
    const T* g = p.grad_output + static_cast<std::size_t>(o) * H * W;
    if (p.grad_bias) {
      T s = 0;
      for (int k = 0; k < H * W; ++k) s += g[k];
      p.grad_bias[o] += s;
    }
    for (int i = 0; i < p.in_channels; ++i) {
      const T* in = p.input + i * in_plane;
      T* gw = p.grad_weights + (static_cast<std::size_t>(o) * p.in_channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          T s = 0;
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) s += g[y * W + x] * in[(y + ky) * PW + x + kx];
          gw[ky * 3 + kx] += s;
        }
    }
  }
}

template <class T>
void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const T* a, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = a[i] > T(0) ? dy[i] : T(0);
}

template <class T>
void sign_step_box(T* x, const T* g, const T* lo, const T* hi, T step, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T s = g[i] > T(0) ? T(1) : (g[i] < T(0) ? T(-1) : T(0));
    T v = x[i] - step * s;
    v = v < lo[i] ? lo[i] : v;
    x[i] = v > hi[i] ? hi[i] : v;
  }
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace reference

// Precision-generic entry points: float goes through the active table, any
// other type through the reference templates.
template <class T>
void conv3x3_same(const Conv3x3Problem<T>& p) {
  if constexpr (std::is_same_v<T, float>) active().conv3x3_same(p);
  else reference::conv3x3_same(p);
}

template <class T>
void conv3x3_weight_grad(const Conv3x3GradProblem<T>& p) {
  if constexpr (std::is_same_v<T, float>) active().conv3x3_weight_grad(p);
  else reference::conv3x3_weight_grad(p);
}

template <class T>
void relu(const T* x, T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) active().relu(x, y, n);
  else reference::relu(x, y, n);
}

template <class T>
void relu_backward(const T* a, const T* dy, T* dx, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) active().relu_backward(a, dy, dx, n);
  else reference::relu_backward(a, dy, dx, n);
}

template <class T>
void sign_step_box(T* x, const T* g, const T* lo, const T* hi, T step, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) active().sign_step_box(x, g, lo, hi, step, n);
  else reference::sign_step_box(x, g, lo, hi, step, n);
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) return active().dot(a, b, n);
  else return reference::dot(a, b, n);
}

}  // namespace lanesentinel::kernels
