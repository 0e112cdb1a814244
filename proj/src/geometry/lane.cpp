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

#include "lanesentinel/geometry/lane.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

#include "lanesentinel/common/error.hpp"

namespace lanesentinel {

std::string_view label_name(LaneLabel label) {
  switch (label) {
    case LaneLabel::kReal: return "real";
    case LaneLabel::kFake: return "fake";
    case LaneLabel::kUnknown: return "unknown";
  }
  return "unknown";
}

LaneLabel parse_label(std::string_view name) {
  if (name == "real") return LaneLabel::kReal;
  if (name == "fake") return LaneLabel::kFake;
  return LaneLabel::kUnknown;
}

bool Lane::rows_strictly_increasing() const {
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].row <= samples[i - 1].row) return false;
  return true;
}

bool Lane::within_bounds(int height, int width) const {
  return std::all_of(samples.begin(), samples.end(), [&](const LaneSample& s) {
    return s.row >= 0 && s.row < height && s.x >= 0.0 && s.x <= width - 1;
  });
}

double PolyLane::x_at(double row) const {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * row + *it;
  return acc;
}

double PolyLane::dx_dy(double row) const {
  double acc = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * row + static_cast<double>(k) * coeffs[k];
  return acc;
}

PolyLane fit_polynomial(const Lane& lane, int degree) {
  if (degree < 0) throw Error(Errc::kInvalidConfig, "negative polynomial degree");
  const auto n = static_cast<Eigen::Index>(lane.samples.size());
  const int terms = degree + 1;
  if (n < terms) throw Error(Errc::kTooFewSamples, "need at least " + std::to_string(terms) + " samples");

  std::set<int> rows;
  int lo = lane.samples.front().row, hi = lo;
  for (const auto& s : lane.samples) {
    rows.insert(s.row);
    lo = std::min(lo, s.row);
    hi = std::max(hi, s.row);
  }
  if (static_cast<int>(rows.size()) < terms)
    throw Error(Errc::kDegenerateSystem, "fewer distinct rows than polynomial terms");

  const double center = 0.5 * (lo + hi);
  const double scale = std::max(0.5 * (hi - lo), 1.0);
  Eigen::MatrixXd A(n, terms);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (lane.samples[i].row - center) / scale;
    double p = 1.0;
    for (int k = 0; k < terms; ++k, p *= u) A(i, k) = p;
    b(i) = lane.samples[i].x;
  }
  const auto qr = A.colPivHouseholderQr();
  if (qr.rank() < terms) throw Error(Errc::kDegenerateSystem, "singular least-squares system");
  const Eigen::VectorXd a = qr.solve(b);

  // x = sum_k a_k ((y - m)/s)^k  ->  monomials in y.
  PolyLane poly;
  poly.degree = degree;
  poly.coeffs.assign(terms, 0.0);
  for (int k = 0; k < terms; ++k) {
    const double ak = a(k) / std::pow(scale, k);
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
      if (j > 0) binom = binom * (k - j + 1) / j;
      poly.coeffs[j] += ak * binom * std::pow(-center, k - j);
    }
  }
  poly.row_min = lo;
  poly.row_max = hi;
  double ss = 0.0;
  for (const auto& s : lane.samples) {
    const double r = s.x - poly.x_at(s.row);
    ss += r * r;
  }
  poly.fit_rms = std::sqrt(ss / static_cast<double>(n));
  return poly;
}

Frame curve_tangent_normal(const PolyLane& poly, double row) {
  const double d = poly.dx_dy(row);
  const double inv = 1.0 / std::sqrt(d * d + 1.0);
  Frame f;
  f.tangent = {d * inv, inv};
  // Rotating (tx, ty) by +90 degrees gives (-ty, tx); flipping the sign so
  // that the x component is non-negative yields (ty, -tx).
  f.normal = {inv, -d * inv};
  return f;
}

Lane sample_poly(const PolyLane& poly, LaneLabel label) {
  Lane lane;
  lane.label = label;
  for (int r = poly.row_min; r <= poly.row_max; ++r) lane.samples.push_back({r, poly.x_at(r)});
  return lane;
}

}  // namespace lanesentinel
