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

#include "lanesentinel/neural/loss.hpp"

#include <algorithm>
#include <cmath>

#include "lanesentinel/common/error.hpp"

namespace lanesentinel::nn {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LossGrad focal_loss(double logit, LaneLabel label, const FocalParams& p) {
  if (label == LaneLabel::kUnknown) throw Error(Errc::kLabelMismatch, "focal loss needs a real or fake label");
  const double s = label == LaneLabel::kFake ? 1.0 : -1.0;
  const double alpha = label == LaneLabel::kFake ? p.alpha_fake : p.alpha_real;
  const double pt = sigmoid(s * logit);
  const double one_minus = sigmoid(-s * logit);
  const double log_pt = std::max(-softplus(-s * logit), std::log(1e-12));
  const double mod = std::pow(one_minus, p.gamma);
  LossGrad r;
  r.loss = -alpha * mod * log_pt;
  r.dlogit = alpha * s * mod * (p.gamma * pt * log_pt - one_minus);
  return r;
}

LossGrad bce_with_logits(double logit, double target) {
  LossGrad r;
  r.loss = target * softplus(-logit) + (1.0 - target) * softplus(logit);
  r.dlogit = sigmoid(logit) - target;
  return r;
}

}  // namespace lanesentinel::nn
