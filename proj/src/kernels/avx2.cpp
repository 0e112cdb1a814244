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

// Compiled with -mavx2 -mfma. Only reached through the dispatcher after a
// CPUID check.
#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "lanesentinel/kernels/kernels.hpp"

namespace lanesentinel::kernels {
namespace avx2 {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Register tile of OB output channels x PV vectors of 8 pixels. Weights are
// packed as [in][tap][OB] so one tap's OB weights are contiguous; every
// broadcast weight feeds PV FMAs and every input load feeds OB.
template <int OB, int PV>
inline void conv_tile(const Conv3x3Problem<float>& p, int o0, int y, int x, const float* packed) {
  const int PW = p.width + 2;
  const std::size_t in_plane = static_cast<std::size_t>(p.height + 2) * PW;
  const std::size_t out_plane = static_cast<std::size_t>(p.height) * p.width;
  __m256 acc[OB][PV];
  for (int k = 0; k < OB; ++k) {
    const __m256 b = p.bias ? _mm256_set1_ps(p.bias[o0 + k]) : _mm256_setzero_ps();
    for (int v = 0; v < PV; ++v) acc[k][v] = b;
  }
  for (int i = 0; i < p.in_channels; ++i) {
    const float* base = p.input + i * in_plane + static_cast<std::size_t>(y) * PW + x;
    const float* wp = packed + static_cast<std::size_t>(i) * 9 * OB;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        __m256 in[PV];
        for (int v = 0; v < PV; ++v) in[v] = _mm256_loadu_ps(base + ky * PW + kx + 8 * v);
        const float* wk = wp + (ky * 3 + kx) * OB;
        for (int k = 0; k < OB; ++k) {
          const __m256 w = _mm256_broadcast_ss(wk + k);
          for (int v = 0; v < PV; ++v) acc[k][v] = _mm256_fmadd_ps(w, in[v], acc[k][v]);
        }
      }
  }
  for (int k = 0; k < OB; ++k)
    for (int v = 0; v < PV; ++v)
      _mm256_storeu_ps(p.output + (o0 + k) * out_plane + static_cast<std::size_t>(y) * p.width + x + 8 * v, acc[k][v]);
}

template <int OB>
void conv_row(const Conv3x3Problem<float>& p, int o0, int y, const float* packed) {
  const int W = p.width, PW = W + 2;
  const std::size_t in_plane = static_cast<std::size_t>(p.height + 2) * PW;
  const std::size_t out_plane = static_cast<std::size_t>(p.height) * W;
  int x = 0;
  for (; x + 24 <= W; x += 24) conv_tile<OB, 3>(p, o0, y, x, packed);
  for (; x + 8 <= W; x += 8) conv_tile<OB, 1>(p, o0, y, x, packed);
  for (; x < W; ++x)
    for (int k = 0; k < OB; ++k) {
      float acc = p.bias ? p.bias[o0 + k] : 0.0f;
      for (int i = 0; i < p.in_channels; ++i) {
        const float* base = p.input + i * in_plane + static_cast<std::size_t>(y) * PW + x;
        const float* wp = packed + static_cast<std::size_t>(i) * 9 * OB;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) acc += wp[(ky * 3 + kx) * OB + k] * base[ky * PW + kx];
      }
      p.output[(o0 + k) * out_plane + static_cast<std::size_t>(y) * W + x] = acc;
    }
}

std::vector<float> pack_block(const Conv3x3Problem<float>& p, int o0, int ob) {
  std::vector<float> packed(static_cast<std::size_t>(p.in_channels) * 9 * ob);
  for (int i = 0; i < p.in_channels; ++i)
    for (int t = 0; t < 9; ++t)
      for (int k = 0; k < ob; ++k)
        packed[(static_cast<std::size_t>(i) * 9 + t) * ob + k] =
            p.weights[(static_cast<std::size_t>(o0 + k) * p.in_channels + i) * 9 + t];
  return packed;
}

void conv3x3_same(const Conv3x3Problem<float>& p) {
  constexpr int kOB = 4;
  const int full = p.out_channels / kOB, rest = p.out_channels % kOB;
  std::vector<std::vector<float>> packs;
  for (int b = 0; b < full; ++b) packs.push_back(pack_block(p, b * kOB, kOB));
  if (rest) packs.push_back(pack_block(p, full * kOB, rest));
  // Rows outermost: the three input rows of every channel stay cache
  // resident while all output blocks consume them.
  for (int y = 0; y < p.height; ++y) {
    for (int b = 0; b < full; ++b) conv_row<kOB>(p, b * kOB, y, packs[b].data());
    const float* rp = rest ? packs.back().data() : nullptr;
    switch (rest) {
      case 3: conv_row<3>(p, full * kOB, y, rp); break;
      case 2: conv_row<2>(p, full * kOB, y, rp); break;
      case 1: conv_row<1>(p, full * kOB, y, rp); break;
      default: break;
    }
  }
}

void conv3x3_weight_grad(const Conv3x3GradProblem<float>& p) {
  const int H = p.height, W = p.width, PW = W + 2;
  const std::size_t in_plane = static_cast<std::size_t>(H + 2) * PW;
  const std::size_t out_plane = static_cast<std::size_t>(H) * W;
  for (int o = 0; o < p.out_channels; ++o) {
    const float* g = p.grad_output + o * out_plane;
    if (p.grad_bias) {
      __m256 s = _mm256_setzero_ps();
      std::size_t k = 0;
      for (; k + 8 <= out_plane; k += 8) s = _mm256_add_ps(s, _mm256_loadu_ps(g + k));
      float tail = 0.0f;
      for (; k < out_plane; ++k) tail += g[k];
      p.grad_bias[o] += hsum(s) + tail;
    }
    for (int i = 0; i < p.in_channels; ++i) {
      const float* in = p.input + i * in_plane;
      __m256 acc[9];
      float tail[9] = {};
      for (auto& a : acc) a = _mm256_setzero_ps();
      for (int y = 0; y < H; ++y) {
        const float* grow = g + static_cast<std::size_t>(y) * W;
        const float* r0 = in + static_cast<std::size_t>(y) * PW;
        int x = 0;
        for (; x + 8 <= W; x += 8) {
          const __m256 d = _mm256_loadu_ps(grow + x);
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              acc[ky * 3 + kx] = _mm256_fmadd_ps(d, _mm256_loadu_ps(r0 + ky * PW + x + kx), acc[ky * 3 + kx]);
        }
        for (; x < W; ++x)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) tail[ky * 3 + kx] += grow[x] * r0[ky * PW + x + kx];
      }
      float* gw = p.grad_weights + (static_cast<std::size_t>(o) * p.in_channels + i) * 9;
      for (int t = 0; t < 9; ++t) gw[t] += hsum(acc[t]) + tail[t];
    }
  }
}

void relu(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* a, const float* dy, float* dx, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 m = _mm256_cmp_ps(_mm256_loadu_ps(a + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(m, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = a[i] > 0.0f ? dy[i] : 0.0f;
}

void sign_step_box(float* x, const float* g, const float* lo, const float* hi, float step, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 vstep = _mm256_set1_ps(step);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    const __m256 pos = _mm256_and_ps(_mm256_cmp_ps(gv, zero, _CMP_GT_OQ), one);
    const __m256 neg = _mm256_and_ps(_mm256_cmp_ps(gv, zero, _CMP_LT_OQ), one);
    const __m256 s = _mm256_sub_ps(pos, neg);
    __m256 v = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_mul_ps(vstep, s));
    v = _mm256_max_ps(v, _mm256_loadu_ps(lo + i));
    v = _mm256_min_ps(v, _mm256_loadu_ps(hi + i));
    _mm256_storeu_ps(x + i, v);
  }
  reference::sign_step_box(x + i, g + i, lo + i, hi + i, step, n - i);
}

float dot(const float* a, const float* b, std::size_t n) {
  __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), s1);
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum(_mm256_add_ps(s0, s1)) + tail;
}

}  // namespace
}  // namespace avx2

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{
      "avx2", &avx2::conv3x3_same, &avx2::conv3x3_weight_grad, &avx2::relu,
      &avx2::relu_backward, &avx2::sign_step_box, &avx2::dot,
  };
  return table;
}

}  // namespace lanesentinel::kernels
