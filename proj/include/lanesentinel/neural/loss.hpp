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

#include "lanesentinel/geometry/lane.hpp"

namespace lanesentinel::nn {

struct FocalParams {
  double gamma = 2.0;
  double alpha_fake = 0.75;
  double alpha_real = 0.25;
};

struct LossGrad {
  double loss = 0.0;
  double dlogit = 0.0;
};

double sigmoid(double z);

// -alpha_t (1 - p_t)^gamma log p_t with p_t the probability of the true
// class; log clamped at p_t >= 1e-12. Evaluated in double.
LossGrad focal_loss(double logit, LaneLabel label, const FocalParams& p);

// Binary cross-entropy on a logit against target in {0, 1}.
LossGrad bce_with_logits(double logit, double target);

}  // namespace lanesentinel::nn
