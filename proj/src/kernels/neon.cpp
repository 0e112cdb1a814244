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

// AArch64 Advanced SIMD variant. Same blocking as the AVX2 path with 4-lane
// vectors.
#include <arm_neon.h>

#include <vector>

#include "lanesentinel/kernels/kernels.hpp"

namespace lanesentinel::kernels {
namespace neon {
namespace {

template <int OB>
void conv_block(const Conv3x3Problem<float>& p, int o0, const float* packed) {
  const int H = p.height, W = p.width, PW = W + 2;
  const std::size_t in_plane = static_cast<std::size_t>(H + 2) * PW;
  const std::size_t out_plane = static_cast<std::size_t>(H) * W;
  for (int y = 0; y < H; ++y) {
    int x = 0;
    for (; x + 4 <= W; x += 4) {
      float32x4_t acc[OB];
      for (int k = 0; k < OB; ++k) acc[k] = vdupq_n_f32(p.bias ? p.bias[o0 + k] : 0.0f);
      for (int i = 0; i < p.in_channels; ++i) {
        const float* base = p.input + i * in_plane + static_cast<std::size_t>(y) * PW + x;
        const float* wp = packed + static_cast<std::size_t>(i) * 9 * OB;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const float32x4_t v = vld1q_f32(base + ky * PW + kx);
            const float* wk = wp + (ky * 3 + kx) * OB;
            for (int k = 0; k < OB; ++k) acc[k] = vfmaq_n_f32(acc[k], v, wk[k]);
          }
      }
      for (int k = 0; k < OB; ++k) vst1q_f32(p.output + (o0 + k) * out_plane + y * W + x, acc[k]);
    }
    for (; x < W; ++x)
      for (int k = 0; k < OB; ++k) {
        float acc = p.bias ? p.bias[o0 + k] : 0.0f;
        for (int i = 0; i < p.in_channels; ++i) {
          const float* base = p.input + i * in_plane + static_cast<std::size_t>(y) * PW + x;
          const float* wp = packed + static_cast<std::size_t>(i) * 9 * OB;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) acc += wp[(ky * 3 + kx) * OB + k] * base[ky * PW + kx];
        }
        p.output[(o0 + k) * out_plane + y * W + x] = acc;
      }
  }
}

template <int OB>
void run_block(const Conv3x3Problem<float>& p, int o0) {
  std::vector<float> packed(static_cast<std::size_t>(p.in_channels) * 9 * OB);
  for (int i = 0; i < p.in_channels; ++i)
    for (int t = 0; t < 9; ++t)
      for (int k = 0; k < OB; ++k)
        packed[(static_cast<std::size_t>(i) * 9 + t) * OB + k] =
            p.weights[(static_cast<std::size_t>(o0 + k) * p.in_channels + i) * 9 + t];
  conv_block<OB>(p, o0, packed.data());
}

void conv3x3_same(const Conv3x3Problem<float>& p) {
  int o0 = 0;
  for (; o0 + 8 <= p.out_channels; o0 += 8) run_block<8>(p, o0);
  switch (p.out_channels - o0) {
    case 7: run_block<7>(p, o0); break;
    case 6: run_block<6>(p, o0); break;
    case 5: run_block<5>(p, o0); break;
    case 4: run_block<4>(p, o0); break;
    case 3: run_block<3>(p, o0); break;
    case 2: run_block<2>(p, o0); break;
    case 1: run_block<1>(p, o0); break;
    default: break;
  }
}

void relu(const float* x, float* y, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmaxq_f32(vld1q_f32(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* a, const float* dy, float* dx, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t m = vcgtq_f32(vld1q_f32(a + i), zero);
    vst1q_f32(dx + i, vreinterpretq_f32_u32(vandq_u32(m, vreinterpretq_u32_f32(vld1q_f32(dy + i)))));
  }
  for (; i < n; ++i) dx[i] = a[i] > 0.0f ? dy[i] : 0.0f;
}

float dot(const float* a, const float* b, std::size_t n) {
  float32x4_t s = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) s = vfmaq_f32(s, vld1q_f32(a + i), vld1q_f32(b + i));
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return vaddvq_f32(s) + tail;
}

}  // namespace
}  // namespace neon

const KernelTable& neon_table_unchecked() {
  // Weight gradients and the PGD step are memory bound; the reference loops
  // auto-vectorize well enough on AArch64.
  static const KernelTable table{
      "neon", &neon::conv3x3_same, &reference::conv3x3_weight_grad<float>, &neon::relu,
      &neon::relu_backward, &reference::sign_step_box<float>, &neon::dot,
  };
  return table;
}

}  // namespace lanesentinel::kernels
