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

#include "lanesentinel/geometry/stabilize.hpp"

#include <algorithm>
#include <cmath>

#include "lanesentinel/common/error.hpp"

namespace lanesentinel {
namespace {

struct SplatTaps {
  int y0, x0, y1, x1;
  double fy, fx;
};

SplatTaps taps_for(const Image& img, double y, double x) {
  SplatTaps t;
  t.y0 = static_cast<int>(std::floor(y));
  t.x0 = static_cast<int>(std::floor(x));
  t.y0 = std::clamp(t.y0, 0, img.height - 1);
  t.x0 = std::clamp(t.x0, 0, img.width - 1);
  t.y1 = std::min(t.y0 + 1, img.height - 1);
  t.x1 = std::min(t.x0 + 1, img.width - 1);
  t.fy = y - t.y0;
  t.fx = x - t.x0;
  return t;
}

}  // namespace

bool in_image(const Image& img, double y, double x) {
  return y >= 0.0 && x >= 0.0 && y <= img.height - 1 && x <= img.width - 1;
}

float sample_bilinear(const Image& img, int c, double y, double x) {
  const SplatTaps t = taps_for(img, y, x);
  const double a = img.at(c, t.y0, t.x0), b = img.at(c, t.y0, t.x1);
  const double d = img.at(c, t.y1, t.x0), e = img.at(c, t.y1, t.x1);
  const double top = (1.0 - t.fx) * a + t.fx * b;
  const double bottom = (1.0 - t.fx) * d + t.fx * e;
  return static_cast<float>((1.0 - t.fy) * top + t.fy * bottom);
}

StabilizedLane stabilize_lane(const Image& scene, const PolyLane& poly, const StabilizationConfig& cfg) {
  if (cfg.out_height < 1 || cfg.out_width < 1 || cfg.raw_band_width < 1)
    throw Error(Errc::kInvalidConfig, "stabilization dimensions must be positive");
  const Image luma = scene.channels == 1 ? Image{} : luminance(scene);
  const Image& src = scene.channels == 1 ? scene : luma;

  const int first = std::max(poly.row_min, 0);
  const int last = std::min(poly.row_max, src.height - 1);
  if (last - first + 1 < 2) throw Error(Errc::kEmptyExtent, "lane extent has fewer than 2 rows inside the image");

  StabilizedLane out;
  out.image = Image(1, cfg.out_height, cfg.out_width);
  out.provenance.resize(out.image.size());
  out.source_poly = poly;
  out.row_first = first;
  out.row_last = last;

  const double row_step = cfg.out_height > 1 ? static_cast<double>(last - first) / (cfg.out_height - 1) : 0.0;
  const double band_step =
      cfg.out_width > 1 ? static_cast<double>(cfg.raw_band_width - 1) / (cfg.out_width - 1) : 0.0;
  const double band_center = 0.5 * (cfg.raw_band_width - 1);

  for (int r = 0; r < cfg.out_height; ++r) {
    const double yc = first + r * row_step;
    const double xc = poly.x_at(yc);
    const Frame f = curve_tangent_normal(poly, yc);
    for (int c = 0; c < cfg.out_width; ++c) {
      const double s = c * band_step - band_center;
      const double px = xc + s * f.normal.x;
      const double py = yc + s * f.normal.y;
      const std::size_t idx = static_cast<std::size_t>(r) * cfg.out_width + c;
      if (in_image(src, py, px)) {
        out.image.data[idx] = sample_bilinear(src, 0, py, px);
        out.provenance[idx] = {py, px, true};
      } else {
        out.image.data[idx] = 0.0f;
        out.provenance[idx] = {0.0, 0.0, false};
      }
    }
  }
  return out;
}

Image write_back(const Image& scene, const StabilizedLane& stab, const Image& delta, const Mask* region) {
  if (!delta.same_shape(stab.image)) throw Error(Errc::kShapeMismatch, "delta must match the stabilized image");
  if (region && (region->height != scene.height || region->width != scene.width))
    throw Error(Errc::kShapeMismatch, "region mask must match the scene");

  const std::size_t n = scene.plane_size();
  std::vector<double> num(n, 0.0), den(n, 0.0);
  auto deposit = [&](int y, int x, double w, double d) {
    if (w <= 0.0) return;
    const std::size_t k = static_cast<std::size_t>(y) * scene.width + x;
    num[k] += w * d;
    den[k] += w;
  };
  for (std::size_t i = 0; i < stab.provenance.size(); ++i) {
    const Provenance& p = stab.provenance[i];
    if (!p.valid) continue;
    const double d = delta.data[i];
    const SplatTaps t = taps_for(scene, p.y, p.x);
    // Coincident taps at the right/bottom border merge their weights.
    deposit(t.y0, t.x0, (1.0 - t.fy) * (1.0 - t.fx), d);
    deposit(t.y0, t.x1, (1.0 - t.fy) * t.fx, d);
    deposit(t.y1, t.x0, t.fy * (1.0 - t.fx), d);
    deposit(t.y1, t.x1, t.fy * t.fx, d);
  }
  Image out(1, scene.height, scene.width);
  for (std::size_t k = 0; k < n; ++k) {
    if (den[k] <= 0.0) continue;
    if (region && !region->data[k]) continue;
    out.data[k] = static_cast<float>(num[k] / den[k]);
  }
  return out;
}

}  // namespace lanesentinel
