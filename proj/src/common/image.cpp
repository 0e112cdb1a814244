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

#include "lanesentinel/common/image.hpp"

#include <algorithm>
#include <cmath>

#include "lanesentinel/common/error.hpp"

namespace lanesentinel {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

Image luminance(const Image& rgb) {
  if (rgb.channels == 1) return rgb;
  if (rgb.channels != 3) throw Error(Errc::kShapeMismatch, "luminance expects 1 or 3 channels");
  Image out(1, rgb.height, rgb.width);
  const auto r = rgb.plane(0), g = rgb.plane(1), b = rgb.plane(2);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
  return out;
}

void quantize_to_8bit(Image& img) {
  for (float& v : img.data) v = std::nearbyint(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

Mask threshold(const Image& prob, float level) {
  Mask m(prob.height, prob.width);
  const auto p = prob.plane(0);
  for (std::size_t i = 0; i < p.size(); ++i) m.data[i] = p[i] > level ? 1 : 0;
  return m;
}

}  // namespace lanesentinel
