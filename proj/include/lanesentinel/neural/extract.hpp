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

#include "lanesentinel/common/image.hpp"
#include "lanesentinel/geometry/lane.hpp"

namespace lanesentinel::nn {

struct ExtractConfig {
  float threshold = 0.5f;
  int min_rows = 30;
};

// Thresholds a probability map, links horizontal runs of neighbouring rows
// under 8-connectivity (bottom-up), and reports each chain's per-row
// centroid. Where two chains meet in one run, the run goes to the chain whose
// last centroid is nearest and the other chain ends, so converging lanes stay
// separate. Chains spanning fewer than min_rows rows are dropped. Output is
// ordered left to right by bottom x.
std::vector<Lane> extract_lanes(const Mask& mask, const ExtractConfig& cfg = {});
std::vector<Lane> extract_lanes(const Image& prob, const ExtractConfig& cfg = {});

}  // namespace lanesentinel::nn
