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
#include <vector>

#include <json.hpp>

#include "lanesentinel/common/image.hpp"
#include "lanesentinel/geometry/lane.hpp"

namespace lanesentinel::synth {

struct SceneConfig {
  int width = 512;
  int height = 288;
  int lanes_min = 2;
  int lanes_max = 5;
  int vanishing_row = 100;
  double lane_width_bottom = 14.0;
  double noise_std = 0.02;
  std::uint64_t texture_seed = 0;

  double lane_spacing_min = 110.0;
  double lane_spacing_max = 160.0;
  double curvature_max = 50.0;      // |kappa| bound of the shared bend term
  double lane_start = 0.1;          // depth fraction where markings begin
  double dashed_probability = 0.25;
  double marking_min = 0.62;        // marking brightness range
  double marking_max = 0.80;
  double asphalt_min = 0.30;
  double asphalt_max = 0.42;
  double texture_amplitude = 0.06;
  int min_lane_rows = 20;

  int bottom_row() const { return height - 1; }
};

void validate(const SceneConfig& cfg);
nlohmann::json to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

struct Scene {
  int id = 0;
  Image image;                   // 3 x H x W in [0,1], 8-bit grid
  std::vector<Lane> gt_lanes;    // left to right, label kReal
  std::vector<PolyLane> gt_curves;  // generating curve of each gt lane
  Mask seg_map;
};

// Marking width at a row: lane_width_bottom at the bottom row, falling
// linearly to 1 px at the vanishing row.
double marking_width(const SceneConfig& cfg, double row);

// Paints every sample of every lane as a horizontal run |x - x_s| <= w/2.
// This is the one rasterizer shared by scenes, attack targets and reports.
void paint_lanes(Mask& mask, const std::vector<Lane>& lanes, const SceneConfig& cfg);
Mask render_lanes(const std::vector<Lane>& lanes, const SceneConfig& cfg);

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed, int id = 0);

}  // namespace lanesentinel::synth
