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

#include <vector>

#include "lanesentinel/common/rng.hpp"
#include "lanesentinel/neural/tensor.hpp"

namespace lanesentinel::nn {

enum class Mode { kTrain, kEval };

// 3x3 convolution over [N, C, H, W]. Stride 1 / padding 1 runs through the
// dispatched SIMD kernels; other geometries use direct loops.
template <class T>
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int padding = 0;
  Tensor<T> weight;  // [out, in, 3, 3]
  Tensor<T> bias;    // [out]

  Conv2d() = default;
  Conv2d(int in, int out, int stride, int padding);

  int out_extent(int n) const { return (n + 2 * padding - 3) / stride + 1; }
  void init(Rng& rng);  // He-normal weights, zero bias

  Tensor<T> forward(const Tensor<T>& x) const;
  // Adds parameter gradients into gw / gb when given; returns dL/dx only
  // when want_input_grad.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gw, Tensor<T>* gb,
                     bool want_input_grad = true) const;
};

template <class T>
struct BatchNormCache {
  Mode mode = Mode::kEval;
  std::vector<int> shape;
  Tensor<T> xhat;
  std::vector<T> mean;
  std::vector<T> var;  // biased batch variance (Train) or running variance (Eval)
  std::vector<T> inv_std;
};

template <class T>
struct BatchNorm2d {
  int channels = 0;
  T momentum = T(0.1);
  T eps = T(1e-5);
  Tensor<T> gamma, beta, running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c);

  // Train normalizes with batch statistics; Eval with the running ones. The
  // layer itself is never mutated here.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, BatchNormCache<T>* cache) const;
  Tensor<T> backward(const BatchNormCache<T>& cache, const Tensor<T>& gy, Tensor<T>* ggamma, Tensor<T>* gbeta) const;
  // Folds a Train-mode batch into the running statistics (unbiased variance).
  void update_running_stats(const BatchNormCache<T>& cache);
};

template <class T>
struct Linear {
  int in_features = 0;
  int out_features = 0;
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(int in, int out);
  void init(Rng& rng);  // uniform +-1/sqrt(in)

  Tensor<T> forward(const Tensor<T>& x) const;  // [N, in] -> [N, out]
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gw, Tensor<T>* gb,
                     bool want_input_grad = true) const;
};

template <class T>
Tensor<T> relu(const Tensor<T>& x);
// dy masked by activation > 0; `activation` may be the input or the output.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& activation, const Tensor<T>& dy);

}  // namespace lanesentinel::nn
