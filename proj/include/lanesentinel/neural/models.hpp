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

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanesentinel/neural/layers.hpp"

namespace lanesentinel::nn {

template <class T>
struct ClassifierCache {
  virtual ~ClassifierCache() = default;
  int batch = 0;
};

// Binary lane classifier over [N, 1, H, W] stabilized lanes. The logit is
// the log-odds that a lane is FAKE.
template <class T>
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual nlohmann::json config() const = 0;
  virtual int input_height() const = 0;
  virtual int input_width() const = 0;

  virtual std::vector<T> forward(const Tensor<T>& x, Mode mode,
                                 std::unique_ptr<ClassifierCache<T>>* cache = nullptr) const = 0;
  // Adds parameter gradients into `grads` (aligned with parameters()) when
  // non-null and returns dL/dx. The model is not modified.
  virtual Tensor<T> backward(const ClassifierCache<T>& cache, const std::vector<T>& dlogits,
                             std::vector<Tensor<T>>* grads) const = 0;

  virtual std::vector<Tensor<T>*> parameters() = 0;
  virtual std::vector<std::string> parameter_names() const = 0;
  // Saved with the model but not trained (running statistics).
  virtual std::vector<Tensor<T>*> buffers() { return {}; }
  virtual std::vector<std::string> buffer_names() const { return {}; }
  virtual void update_running_stats(const ClassifierCache<T>&) {}
  virtual std::unique_ptr<Classifier> clone() const = 0;

  std::vector<Tensor<T>> zero_grads();
  // sigmoid(logit) of one [1, H, W] image in Eval mode.
  double score(const Tensor<T>& x) const;
};

struct VerifierConfig {
  int c1 = 8;
  int c2 = 16;
  int in_height = 128;
  int in_width = 40;
};

// conv(1->c1, s3) -> BN -> ReLU -> conv(c1->c2, s3) -> BN -> ReLU -> linear.
template <class T>
class VerifierCNN final : public Classifier<T> {
 public:
  struct Cache : ClassifierCache<T> {
    Tensor<T> x, z1, a1, z2, a2, flat;
    BatchNormCache<T> bn1, bn2;
  };

  explicit VerifierCNN(const VerifierConfig& cfg = {}, std::uint64_t seed = 0);

  std::string kind() const override { return "verifier_cnn"; }
  nlohmann::json config() const override;
  int input_height() const override { return cfg_.in_height; }
  int input_width() const override { return cfg_.in_width; }
  std::vector<T> forward(const Tensor<T>& x, Mode mode,
                         std::unique_ptr<ClassifierCache<T>>* cache = nullptr) const override;
  Tensor<T> backward(const ClassifierCache<T>& cache, const std::vector<T>& dlogits,
                     std::vector<Tensor<T>>* grads) const override;
  std::vector<Tensor<T>*> parameters() override;
  std::vector<std::string> parameter_names() const override;
  std::vector<Tensor<T>*> buffers() override;
  std::vector<std::string> buffer_names() const override;
  void update_running_stats(const ClassifierCache<T>& cache) override;
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<VerifierCNN>(*this); }

  const VerifierConfig& cfg() const { return cfg_; }
  int flat_features() const { return cfg_.c2 * h2_ * w2_; }
  int conv1_height() const { return h1_; }
  int conv1_width() const { return w1_; }
  int conv2_height() const { return h2_; }
  int conv2_width() const { return w2_; }

  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  Linear<T> fc;

 private:
  VerifierConfig cfg_;
  int h1_, w1_, h2_, w2_;
};

// Single affine map from the flattened input to the logit; no nonlinearity.
template <class T>
class LinearVerifier final : public Classifier<T> {
 public:
  struct Cache : ClassifierCache<T> {
    Tensor<T> flat;
    std::vector<int> in_shape;
  };

  explicit LinearVerifier(int in_height = 128, int in_width = 40, std::uint64_t seed = 0);

  std::string kind() const override { return "verifier_linear"; }
  nlohmann::json config() const override;
  int input_height() const override { return h_; }
  int input_width() const override { return w_; }
  std::vector<T> forward(const Tensor<T>& x, Mode mode,
                         std::unique_ptr<ClassifierCache<T>>* cache = nullptr) const override;
  Tensor<T> backward(const ClassifierCache<T>& cache, const std::vector<T>& dlogits,
                     std::vector<Tensor<T>>* grads) const override;
  std::vector<Tensor<T>*> parameters() override { return {&fc.weight, &fc.bias}; }
  std::vector<std::string> parameter_names() const override { return {"fc.weight", "fc.bias"}; }
  std::unique_ptr<Classifier<T>> clone() const override { return std::make_unique<LinearVerifier>(*this); }

  Linear<T> fc;

 private:
  int h_, w_;
};

// Four same-padded 3x3 convolutions (3->8->16->8->1) giving a per-pixel
// lane logit at input resolution.
template <class T>
class ToyDetector {
 public:
  struct Cache {
    Tensor<T> x, a1, a2, a3;  // inputs of conv1..conv4 (post-ReLU)
  };

  explicit ToyDetector(std::uint64_t seed = 0);

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const;  // [N,3,H,W] -> [N,1,H,W]
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dlogits, std::vector<Tensor<T>>* grads,
                     bool want_input_grad = true) const;

  std::vector<Tensor<T>*> parameters();
  std::vector<std::string> parameter_names() const;
  std::vector<Tensor<T>> zero_grads();
  nlohmann::json config() const { return {{"channels", {3, 8, 16, 8, 1}}}; }

  Conv2d<T> conv1, conv2, conv3, conv4;
};

}  // namespace lanesentinel::nn
