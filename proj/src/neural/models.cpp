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

#include "lanesentinel/neural/models.hpp"

#include <cmath>

#include "lanesentinel/common/error.hpp"

namespace lanesentinel::nn {

namespace {

template <class T>
void add_into(std::vector<Tensor<T>>* grads, std::size_t i, const Tensor<T>& g) {
  auto& dst = (*grads)[i].data;
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g.data[k];
}

template <class T>
Tensor<T> logits_column(const std::vector<T>& dlogits) {
  Tensor<T> g({static_cast<int>(dlogits.size()), 1});
  g.data = dlogits;
  return g;
}

void check_input(const std::vector<int>& s, int h, int w) {
  if (s.size() != 4 || s[1] != 1 || s[2] != h || s[3] != w)
    throw Error(Errc::kShapeMismatch,
                "classifier input must be [N, 1, " + std::to_string(h) + ", " + std::to_string(w) + "]");
}

}  // namespace

template <class T>
std::vector<Tensor<T>> Classifier<T>::zero_grads() {
  std::vector<Tensor<T>> g;
  for (auto* p : parameters()) g.emplace_back(p->shape);
  return g;
}

template <class T>
double Classifier<T>::score(const Tensor<T>& x) const {
  Tensor<T> batch = x;
  if (batch.shape.size() == 3) batch.shape.insert(batch.shape.begin(), 1);
  const T logit = forward(batch, Mode::kEval, nullptr).at(0);
  return 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
}

template <class T>
VerifierCNN<T>::VerifierCNN(const VerifierConfig& cfg, std::uint64_t seed)
    : conv1(1, cfg.c1, 3, 0), conv2(cfg.c1, cfg.c2, 3, 0), bn1(cfg.c1), bn2(cfg.c2), cfg_(cfg) {
  h1_ = conv1.out_extent(cfg.in_height);
  w1_ = conv1.out_extent(cfg.in_width);
  h2_ = conv2.out_extent(h1_);
  w2_ = conv2.out_extent(w1_);
  if (h2_ < 1 || w2_ < 1) throw Error(Errc::kInvalidConfig, "verifier input too small");
  fc = Linear<T>(cfg.c2 * h2_ * w2_, 1);
  Rng rng = make_rng(seed, 0x7E41F1E5ull);
  conv1.init(rng);
  conv2.init(rng);
  fc.init(rng);
}

template <class T>
nlohmann::json VerifierCNN<T>::config() const {
  return {{"c1", cfg_.c1}, {"c2", cfg_.c2}, {"in_height", cfg_.in_height}, {"in_width", cfg_.in_width}};
}

template <class T>
std::vector<T> VerifierCNN<T>::forward(const Tensor<T>& x, Mode mode,
                                       std::unique_ptr<ClassifierCache<T>>* cache) const {
  check_input(x.shape, cfg_.in_height, cfg_.in_width);
  auto c = std::make_unique<Cache>();
  c->batch = x.dim(0);
  c->x = x;
  c->z1 = conv1.forward(x);
  c->a1 = relu(bn1.forward(c->z1, mode, &c->bn1));
  c->z2 = conv2.forward(c->a1);
  c->a2 = relu(bn2.forward(c->z2, mode, &c->bn2));
  c->flat = c->a2;
  c->flat.shape = {c->batch, flat_features()};
  const Tensor<T> y = fc.forward(c->flat);
  if (cache) *cache = std::move(c);
  return y.data;
}

template <class T>
Tensor<T> VerifierCNN<T>::backward(const ClassifierCache<T>& base, const std::vector<T>& dlogits,
                                   std::vector<Tensor<T>>* grads) const {
  const auto* c = dynamic_cast<const Cache*>(&base);
  if (!c || static_cast<int>(dlogits.size()) != c->batch)
    throw Error(Errc::kStaleCache, "verifier backward: cache does not match this model or batch");
  if (grads && grads->size() != 10) throw Error(Errc::kShapeMismatch, "verifier backward: wrong gradient count");
  auto slot = [&](std::size_t i) -> Tensor<T>* { return grads ? &(*grads)[i] : nullptr; };
  Tensor<T> g = fc.backward(c->flat, logits_column(dlogits), slot(8), slot(9));
  g.shape = c->a2.shape;
  g = relu_backward(c->a2, g);
  g = bn2.backward(c->bn2, g, slot(6), slot(7));
  g = conv2.backward(c->a1, g, slot(4), slot(5));
  g = relu_backward(c->a1, g);
  g = bn1.backward(c->bn1, g, slot(2), slot(3));
  return conv1.backward(c->x, g, slot(0), slot(1));
}

template <class T>
std::vector<Tensor<T>*> VerifierCNN<T>::parameters() {
  return {&conv1.weight, &conv1.bias, &bn1.gamma, &bn1.beta, &conv2.weight,
          &conv2.bias,   &bn2.gamma,  &bn2.beta,  &fc.weight,  &fc.bias};
}

template <class T>
std::vector<std::string> VerifierCNN<T>::parameter_names() const {
  return {"conv1.weight", "conv1.bias", "bn1.gamma", "bn1.beta", "conv2.weight",
          "conv2.bias",   "bn2.gamma",  "bn2.beta",  "fc.weight", "fc.bias"};
}

template <class T>
std::vector<Tensor<T>*> VerifierCNN<T>::buffers() {
  return {&bn1.running_mean, &bn1.running_var, &bn2.running_mean, &bn2.running_var};
}

template <class T>
std::vector<std::string> VerifierCNN<T>::buffer_names() const {
  return {"bn1.running_mean", "bn1.running_var", "bn2.running_mean", "bn2.running_var"};
}

template <class T>
void VerifierCNN<T>::update_running_stats(const ClassifierCache<T>& base) {
  const auto* c = dynamic_cast<const Cache*>(&base);
  if (!c) throw Error(Errc::kStaleCache, "verifier: foreign cache");
  bn1.update_running_stats(c->bn1);
  bn2.update_running_stats(c->bn2);
}

template <class T>
LinearVerifier<T>::LinearVerifier(int in_height, int in_width, std::uint64_t seed)
    : fc(in_height * in_width, 1), h_(in_height), w_(in_width) {
  Rng rng = make_rng(seed, 0x11AEA4ull);
  fc.init(rng);
}

template <class T>
nlohmann::json LinearVerifier<T>::config() const {
  return {{"in_height", h_}, {"in_width", w_}};
}

template <class T>
std::vector<T> LinearVerifier<T>::forward(const Tensor<T>& x, Mode, std::unique_ptr<ClassifierCache<T>>* cache) const {
  check_input(x.shape, h_, w_);
  auto c = std::make_unique<Cache>();
  c->batch = x.dim(0);
  c->in_shape = x.shape;
  c->flat = x;
  c->flat.shape = {c->batch, h_ * w_};
  const Tensor<T> y = fc.forward(c->flat);
  if (cache) *cache = std::move(c);
  return y.data;
}

template <class T>
Tensor<T> LinearVerifier<T>::backward(const ClassifierCache<T>& base, const std::vector<T>& dlogits,
                                      std::vector<Tensor<T>>* grads) const {
  const auto* c = dynamic_cast<const Cache*>(&base);
  if (!c || static_cast<int>(dlogits.size()) != c->batch)
    throw Error(Errc::kStaleCache, "linear verifier backward: cache does not match this model or batch");
  Tensor<T>* gw = grads ? &(*grads)[0] : nullptr;
  Tensor<T>* gb = grads ? &(*grads)[1] : nullptr;
  Tensor<T> g = fc.backward(c->flat, logits_column(dlogits), gw, gb);
  g.shape = c->in_shape;
  return g;
}

template <class T>
ToyDetector<T>::ToyDetector(std::uint64_t seed)
    : conv1(3, 8, 1, 1), conv2(8, 16, 1, 1), conv3(16, 8, 1, 1), conv4(8, 1, 1, 1) {
  Rng rng = make_rng(seed, 0xDE7EC7ull);
  conv1.init(rng);
  conv2.init(rng);
  conv3.init(rng);
  conv4.init(rng);
  // Lane pixels are rare; start from a low prior.
  conv4.bias.data[0] = T(-3);
}

template <class T>
Tensor<T> ToyDetector<T>::forward(const Tensor<T>& x, Cache* cache) const {
  Tensor<T> a1 = relu(conv1.forward(x));
  Tensor<T> a2 = relu(conv2.forward(a1));
  Tensor<T> a3 = relu(conv3.forward(a2));
  Tensor<T> y = conv4.forward(a3);
  if (cache) {
    cache->x = x;
    cache->a1 = std::move(a1);
    cache->a2 = std::move(a2);
    cache->a3 = std::move(a3);
  }
  return y;
}

template <class T>
Tensor<T> ToyDetector<T>::backward(const Cache& c, const Tensor<T>& dlogits, std::vector<Tensor<T>>* grads,
                                   bool want_input_grad) const {
  if (c.x.shape.size() != 4 || dlogits.shape != std::vector<int>{c.x.dim(0), 1, c.x.dim(2), c.x.dim(3)})
    throw Error(Errc::kStaleCache, "detector backward: gradient shape does not match the cached forward");
  auto slot = [&](std::size_t i) -> Tensor<T>* { return grads ? &(*grads)[i] : nullptr; };
  Tensor<T> g = conv4.backward(c.a3, dlogits, slot(6), slot(7));
  g = conv3.backward(c.a2, relu_backward(c.a3, g), slot(4), slot(5));
  g = conv2.backward(c.a1, relu_backward(c.a2, g), slot(2), slot(3));
  return conv1.backward(c.x, relu_backward(c.a1, g), slot(0), slot(1), want_input_grad);
}

template <class T>
std::vector<Tensor<T>*> ToyDetector<T>::parameters() {
  return {&conv1.weight, &conv1.bias, &conv2.weight, &conv2.bias, &conv3.weight, &conv3.bias, &conv4.weight, &conv4.bias};
}

template <class T>
std::vector<std::string> ToyDetector<T>::parameter_names() const {
  return {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
          "conv3.weight", "conv3.bias", "conv4.weight", "conv4.bias"};
}

template <class T>
std::vector<Tensor<T>> ToyDetector<T>::zero_grads() {
  std::vector<Tensor<T>> g;
  for (auto* p : parameters()) g.emplace_back(p->shape);
  return g;
}

template class Classifier<float>;
template class Classifier<double>;
template class VerifierCNN<float>;
template class VerifierCNN<double>;
template class LinearVerifier<float>;
template class LinearVerifier<double>;
template class ToyDetector<float>;
template class ToyDetector<double>;

}  // namespace lanesentinel::nn
