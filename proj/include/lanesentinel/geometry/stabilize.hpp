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

#include <optional>
#include <vector>

#include "lanesentinel/common/image.hpp"
#include "lanesentinel/geometry/lane.hpp"

namespace lanesentinel {

struct StabilizationConfig {
  int out_height = 128;
  int out_width = 40;
  int raw_band_width = 40;  // scene pixels sampled across the curve
};

// Scene-space source of one stabilized pixel; invalid when the sample fell
// outside the image.
struct Provenance {
  double y = 0.0;
  double x = 0.0;
  bool valid = false;
};

struct StabilizedLane {
  Image image;                         // 1 x out_height x out_width, scene luminance
  std::vector<Provenance> provenance;  // row-major, same layout as image
  PolyLane source_poly;
  int row_first = 0;  // clipped vertical extent actually sampled
  int row_last = 0;
};

// Bilinear read of channel `c` at (y, x); the caller guarantees
// 0 <= y <= H-1 and 0 <= x <= W-1.
float sample_bilinear(const Image& img, int c, double y, double x);
bool in_image(const Image& img, double y, double x);

// Canonical lane image: output row r maps to curve row
// y_r = row_first + r * (row_last - row_first) / (out_height - 1), output
// column c to the offset (c * (band - 1) / (out_width - 1) - (band - 1) / 2)
// along the unit normal at y_r. Each pixel is a single bilinear read of scene
// luminance, so its provenance reproduces it exactly. RGB input is converted
// to luminance first.
StabilizedLane stabilize_lane(const Image& scene, const PolyLane& poly, const StabilizationConfig& cfg = {});

// Scatters a stabilized-space perturbation back to scene pixels by bilinear
// splatting. A scene pixel hit by several stabilized pixels receives the
// splat-weighted average of their deltas. Pixels outside `region` (if given)
// are zeroed. Returns a 1 x H x W delta image.
Image write_back(const Image& scene, const StabilizedLane& stab, const Image& delta,
                 const Mask* region = nullptr);

}  // namespace lanesentinel
