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

#include "lanesentinel/synth/scene.hpp"

#include <algorithm>
#include <cmath>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/rng.hpp"

namespace lanesentinel::synth {

void validate(const SceneConfig& c) {
  auto fail = [](const char* what) { throw Error(Errc::kInvalidConfig, what); };
  if (c.width < 16 || c.height < 16) fail("frame too small");
  if (c.vanishing_row < 0 || c.vanishing_row >= c.height - 1) fail("vanishing_row outside frame");
  if (c.lanes_min < 1 || c.lanes_max < c.lanes_min) fail("bad lane count range");
  if (!(c.lane_width_bottom >= 1.0)) fail("lane_width_bottom must be >= 1");
  if (!(c.noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (!(c.lane_spacing_min > 0.0) || c.lane_spacing_max < c.lane_spacing_min) fail("bad lane spacing");
  if (c.lane_start < 0.0 || c.lane_start >= 1.0) fail("lane_start must be in [0,1)");
  if (c.dashed_probability < 0.0 || c.dashed_probability > 1.0) fail("dashed_probability must be in [0,1]");
  if (c.min_lane_rows < 4) fail("min_lane_rows must be >= 4");
}

nlohmann::json to_json(const SceneConfig& c) {
  return {{"width", c.width},
          {"height", c.height},
          {"lanes_min", c.lanes_min},
          {"lanes_max", c.lanes_max},
          {"vanishing_row", c.vanishing_row},
          {"lane_width_bottom", c.lane_width_bottom},
          {"noise_std", c.noise_std},
          {"texture_seed", c.texture_seed},
          {"lane_spacing_min", c.lane_spacing_min},
          {"lane_spacing_max", c.lane_spacing_max},
          {"curvature_max", c.curvature_max},
          {"lane_start", c.lane_start},
          {"dashed_probability", c.dashed_probability},
          {"marking_min", c.marking_min},
          {"marking_max", c.marking_max},
          {"asphalt_min", c.asphalt_min},
          {"asphalt_max", c.asphalt_max},
          {"texture_amplitude", c.texture_amplitude},
          {"min_lane_rows", c.min_lane_rows}};
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    get("width", c.width);
    get("height", c.height);
    get("lanes_min", c.lanes_min);
    get("lanes_max", c.lanes_max);
    get("vanishing_row", c.vanishing_row);
    get("lane_width_bottom", c.lane_width_bottom);
    get("noise_std", c.noise_std);
    get("texture_seed", c.texture_seed);
    get("lane_spacing_min", c.lane_spacing_min);
    get("lane_spacing_max", c.lane_spacing_max);
    get("curvature_max", c.curvature_max);
    get("lane_start", c.lane_start);
    get("dashed_probability", c.dashed_probability);
    get("marking_min", c.marking_min);
    get("marking_max", c.marking_max);
    get("asphalt_min", c.asphalt_min);
    get("asphalt_max", c.asphalt_max);
    get("texture_amplitude", c.texture_amplitude);
    get("min_lane_rows", c.min_lane_rows);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfigError, std::string("scene config: ") + e.what());
  }
  validate(c);
  return c;
}

double marking_width(const SceneConfig& cfg, double row) {
  const double t = std::clamp((row - cfg.vanishing_row) / (cfg.bottom_row() - cfg.vanishing_row), 0.0, 1.0);
  return 1.0 + (cfg.lane_width_bottom - 1.0) * t;
}

void paint_lanes(Mask& mask, const std::vector<Lane>& lanes, const SceneConfig& cfg) {
  for (const auto& lane : lanes) {
    for (const auto& s : lane.samples) {
      if (s.row < 0 || s.row >= mask.height) continue;
      const double half = 0.5 * marking_width(cfg, s.row);
      const int x0 = std::max(0, static_cast<int>(std::ceil(s.x - half)));
      const int x1 = std::min(mask.width - 1, static_cast<int>(std::floor(s.x + half)));
      for (int x = x0; x <= x1; ++x) mask.at(s.row, x) = 1;
    }
  }
}

Mask render_lanes(const std::vector<Lane>& lanes, const SceneConfig& cfg) {
  Mask m(cfg.height, cfg.width);
  paint_lanes(m, lanes, cfg);
  return m;
}

namespace {

// Smooth value noise on a coarse lattice.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int h, int w, int cell) : cell_(cell), gw_(w / cell + 2), gh_(h / cell + 2) {
    grid_.resize(static_cast<std::size_t>(gw_) * gh_);
    for (auto& v : grid_) v = uniform(rng, -1.0, 1.0);
  }
  double operator()(int y, int x) const {
    const double gy = static_cast<double>(y) / cell_, gx = static_cast<double>(x) / cell_;
    const int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
    const double fy = smooth(gy - iy), fx = smooth(gx - ix);
    auto g = [&](int a, int b) { return grid_[static_cast<std::size_t>(a) * gw_ + b]; };
    return (1 - fy) * ((1 - fx) * g(iy, ix) + fx * g(iy, ix + 1)) + fy * ((1 - fx) * g(iy + 1, ix) + fx * g(iy + 1, ix + 1));
  }

 private:
  static double smooth(double t) { return t * t * (3 - 2 * t); }
  int cell_, gw_, gh_;
  std::vector<double> grid_;
};

struct LaneDraft {
  PolyLane curve;
  bool dashed = false;
  double dash_phase = 0.0;
  bool yellow = false;
  double brightness = 0.0;
};

}  // namespace

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed, int id) {
  validate(cfg);
  const int H = cfg.height, W = cfg.width, v = cfg.vanishing_row;
  const double depth = cfg.bottom_row() - v;
  Rng rng = make_rng(seed, 0);

  const int k = uniform_int(rng, cfg.lanes_min, cfg.lanes_max);
  const double spacing = uniform(rng, cfg.lane_spacing_min, cfg.lane_spacing_max);
  const double x_v = W / 2.0 + uniform(rng, -40.0, 40.0);
  const double center = W / 2.0 + uniform(rng, -0.3, 0.3) * spacing;
  const double kappa = uniform(rng, -cfg.curvature_max, cfg.curvature_max);
  const double asphalt = uniform(rng, cfg.asphalt_min, cfg.asphalt_max);

  // x(y) = x_v + (x_b - x_v) t + kappa (1 - t)^2 with t = (y - v) / depth,
  // expanded into monomials of y.
  const double a = -v / depth, b = 1.0 / depth;
  const int row_start = static_cast<int>(std::ceil(v + cfg.lane_start * depth));
  std::vector<LaneDraft> drafts;
  for (int i = 0; i < k; ++i) {
    LaneDraft d;
    const double x_b = center + (i - (k - 1) / 2.0) * spacing;
    const double delta = x_b - x_v;
    d.curve.coeffs = {x_v + delta * a + kappa * (1 - a) * (1 - a), delta * b - 2 * kappa * (1 - a) * b, kappa * b * b, 0.0};
    d.curve.row_min = row_start;
    d.curve.row_max = cfg.bottom_row();
    d.dashed = uniform(rng, 0.0, 1.0) < cfg.dashed_probability;
    d.dash_phase = uniform(rng, 0.0, 1.0);
    d.yellow = uniform(rng, 0.0, 1.0) < 0.2;
    d.brightness = uniform(rng, cfg.marking_min, cfg.marking_max);
    drafts.push_back(d);
  }

  Scene scene;
  scene.id = id;
  std::vector<const LaneDraft*> kept;
  for (const auto& d : drafts) {
    Lane lane;
    lane.label = LaneLabel::kReal;
    for (int y = row_start; y <= cfg.bottom_row(); ++y) {
      const double x = d.curve.x_at(y);
      if (x < 0.0 || x > W - 1.0) continue;
      if (d.dashed) {
        // Dash phase advances with inverse depth, so dashes shorten toward
        // the horizon.
        const double t = (y - v) / depth;
        const double phi = 2.0 / (t + 0.15) + d.dash_phase;
        if (phi - std::floor(phi) >= 0.7) continue;
      }
      lane.samples.push_back({y, x});
    }
    if (static_cast<int>(lane.samples.size()) < cfg.min_lane_rows) continue;
    PolyLane curve = d.curve;
    curve.row_min = lane.row_min();
    curve.row_max = lane.row_max();
    scene.gt_lanes.push_back(std::move(lane));
    scene.gt_curves.push_back(curve);
    kept.push_back(&d);
  }

  // Background: sky above the horizon, asphalt between the outer road edges,
  // verge outside.
  Rng tex_rng = make_rng(mix_seed(cfg.texture_seed, seed), 1);
  const ValueNoise coarse(tex_rng, H, W, 32);
  const ValueNoise fine(tex_rng, H, W, 6);
  const double x_left_b = center - ((k - 1) / 2.0 + 0.6) * spacing;
  const double x_right_b = center + ((k - 1) / 2.0 + 0.6) * spacing;
  auto edge = [&](double xb, double y) {
    const double t = (y - v) / depth;
    return x_v + (xb - x_v) * t + kappa * (1 - t) * (1 - t);
  };
  const double amp = cfg.texture_amplitude;
  Image img(3, H, W);
  for (int y = 0; y < H; ++y) {
    const double xl = edge(x_left_b, y), xr = edge(x_right_b, y);
    for (int x = 0; x < W; ++x) {
      double r, g, bl;
      if (y <= v) {
        const double s = static_cast<double>(y) / std::max(1, v);
        r = 0.55 + 0.2 * s;
        g = 0.68 + 0.15 * s;
        bl = 0.88 + 0.05 * s;
        const double n = 0.02 * coarse(y, x);
        r += n;
        g += n;
        bl += n;
      } else if (x >= xl && x <= xr) {
        const double n = asphalt + amp * coarse(y, x) + 0.5 * amp * fine(y, x);
        r = n;
        g = n;
        bl = n * 1.02;
      } else {
        const double n = amp * coarse(y, x) + 0.5 * amp * fine(y, x);
        r = 0.30 + n;
        g = 0.38 + n;
        bl = 0.22 + n;
      }
      img.at(0, y, x) = static_cast<float>(r);
      img.at(1, y, x) = static_cast<float>(g);
      img.at(2, y, x) = static_cast<float>(bl);
    }
  }

  scene.seg_map = Mask(H, W);
  for (std::size_t i = 0; i < scene.gt_lanes.size(); ++i) {
    const Mask m = render_lanes({scene.gt_lanes[i]}, cfg);
    const LaneDraft& d = *kept[i];
    const double cr = d.brightness, cg = d.yellow ? 0.9 * d.brightness : d.brightness,
                 cb = d.yellow ? 0.35 * d.brightness : d.brightness;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (!m.at(y, x)) continue;
        const double n = 0.5 * amp * fine(y, x);
        img.at(0, y, x) = static_cast<float>(cr + n);
        img.at(1, y, x) = static_cast<float>(cg + n);
        img.at(2, y, x) = static_cast<float>(cb + n);
        scene.seg_map.at(y, x) = 1;
      }
  }

  if (cfg.noise_std > 0.0) {
    Rng noise_rng = make_rng(seed, 2);
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (auto& p : img.data) p = static_cast<float>(p + noise(noise_rng));
  }
  for (auto& p : img.data) p = std::clamp(p, 0.0f, 1.0f);
  quantize_to_8bit(img);
  scene.image = std::move(img);
  return scene;
}

}  // namespace lanesentinel::synth
