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

#include <array>
#include <string_view>
#include <vector>

namespace lanesentinel {

enum class LaneLabel { kReal, kFake, kUnknown };

std::string_view label_name(LaneLabel label);
LaneLabel parse_label(std::string_view name);

struct LaneSample {
  int row = 0;
  double x = 0.0;
  bool operator==(const LaneSample&) const = default;
};

// One lane line as ordered (row, x) samples in scene pixels; rows strictly
// increasing.
struct Lane {
  std::vector<LaneSample> samples;
  LaneLabel label = LaneLabel::kUnknown;

  bool empty() const { return samples.empty(); }
  int row_min() const { return samples.front().row; }
  int row_max() const { return samples.back().row; }
  // x at the bottom-most sample; used for left-to-right ordering.
  double bottom_x() const { return samples.back().x; }
  bool rows_strictly_increasing() const;
  bool within_bounds(int height, int width) const;
};

// x = c0 + c1*y + c2*y^2 + c3*y^3 (higher degrees supported by the fitter).
struct PolyLane {
  std::vector<double> coeffs;
  int row_min = 0;
  int row_max = 0;
  int degree = 3;
  double fit_rms = 0.0;  // RMS residual of the fit that produced this curve

  double x_at(double row) const;
  double dx_dy(double row) const;
};

// Least-squares polynomial x(y). The solve runs on rows centered and scaled
// to [-1, 1] through a column-pivoted Householder QR, then converts back to
// the monomial basis.
PolyLane fit_polynomial(const Lane& lane, int degree = 3);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Frame {
  Vec2 tangent;  // unit, proportional to (dx/dy, 1)
  Vec2 normal;   // tangent rotated by +90 degrees, x component >= 0
};

Frame curve_tangent_normal(const PolyLane& poly, double row);

// Samples x(y) at every integer row of [row_min, row_max].
Lane sample_poly(const PolyLane& poly, LaneLabel label = LaneLabel::kUnknown);

}  // namespace lanesentinel
