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

#include "lanesentinel/synth/fake_lane.hpp"

#include <cmath>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/rng.hpp"

namespace lanesentinel::synth {

double fake_offset(const FakeLaneSpec& spec, int direction, int row, int row_min, int row_max) {
  const double u = static_cast<double>(row_max - row) / static_cast<double>(row_max - row_min);
  return direction * spec.max_deviation * std::pow(u, spec.deviation_exponent);
}

Lane generate_fake_lane(const Lane& real, const FakeLaneSpec& spec, std::uint64_t seed) {
  if (real.samples.empty() || real.row_max() - real.row_min() + 1 < 20)
    throw Error(Errc::kExtentTooShort, "fake lanes need a real lane spanning at least 20 rows");
  int dir = spec.direction;
  if (dir == 0) {
    Rng rng = make_rng(seed, 0);
    dir = uniform_int(rng, 0, 1) == 0 ? -1 : 1;
  }
  Lane fake;
  fake.label = LaneLabel::kFake;
  fake.samples.reserve(real.samples.size());
  const int lo = real.row_min(), hi = real.row_max();
  for (const auto& s : real.samples) fake.samples.push_back({s.row, s.x + fake_offset(spec, dir, s.row, lo, hi)});
  return fake;
}

}  // namespace lanesentinel::synth
