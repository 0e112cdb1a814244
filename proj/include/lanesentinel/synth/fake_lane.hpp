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

#include "lanesentinel/geometry/lane.hpp"

namespace lanesentinel::synth {

struct FakeLaneSpec {
  double max_deviation = 60.0;
  double deviation_exponent = 2.0;
  int direction = 0;  // +1 / -1, or 0 for a seeded random choice
};

// Offset added at `row` for a lane spanning [row_min, row_max]; zero at the
// bottom, +-max_deviation at the top.
double fake_offset(const FakeLaneSpec& spec, int direction, int row, int row_min, int row_max);

// Throws ExtentTooShort when the real lane spans fewer than 20 rows.
Lane generate_fake_lane(const Lane& real, const FakeLaneSpec& spec, std::uint64_t seed);

}  // namespace lanesentinel::synth
