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
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lanesentinel/geometry/stabilize.hpp"
#include "lanesentinel/synth/fake_lane.hpp"
#include "lanesentinel/synth/scene.hpp"

namespace lanesentinel::synth {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;  // test takes the remainder
};

// Splits by rank of the scene id among n scenes, so a scene id lands in
// exactly one split.
Split assign_split(int rank, int n, const SplitFractions& f);

struct ManifestEntry {
  std::string path;  // relative to the dataset root
  LaneLabel label = LaneLabel::kReal;
  int scene_id = 0;
  int lane_id = 0;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int skipped = 0;  // lanes whose fit or stabilization failed

  std::size_t count(LaneLabel label, Split split) const;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

// TuSimple-style label: {"h_samples": rows, "lanes": [[x or -2, ...]],
// "raw_file": path}. The extra "curves" and "id" keys carry the generating
// polynomials so a scene can be restored exactly.
nlohmann::json scene_label(const Scene& scene, const std::string& raw_file);
std::vector<Lane> lanes_from_label(const nlohmann::json& label);

struct SceneFiles {
  std::string image;
  std::string seg;
  std::string label;
};
SceneFiles scene_file_names(int id);
void write_scene(const std::filesystem::path& root, const Scene& scene);
Scene read_scene(const std::filesystem::path& root, int id);

std::vector<Scene> generate_scenes(const SceneConfig& cfg, std::uint64_t seed, int first_id, int count, int jobs);
std::uint64_t scene_seed(std::uint64_t seed, int id);

struct DatasetOptions {
  int fakes_per_real = 3;
  StabilizationConfig stab;
  FakeLaneSpec fake;
  std::uint64_t seed = 0;
};

// In-memory labeled stabilized lanes of one scene (real first, then its
// fakes, lane by lane).
struct LaneExample {
  Image image;
  LaneLabel label = LaneLabel::kReal;
  int lane_id = 0;
  int variant = 0;  // 0 for the real lane, 1.. for fakes
};
std::vector<LaneExample> scene_examples(const Scene& scene, const DatasetOptions& opt, int* skipped = nullptr);

// Writes stabilized PNGs under root/stabilized and the manifest at
// root/manifest.json. Splits are assigned by scene rank within `scenes`.
DatasetManifest build_dataset(const std::vector<Scene>& scenes, const DatasetOptions& opt,
                              const std::filesystem::path& root, const SplitFractions& fractions = {},
                              int jobs = 1);

// Streams a full corpus to disk in chunks; scenes/, stabilized/ and
// manifest.json under root.
DatasetManifest generate_dataset(const SceneConfig& cfg, int n_scenes, std::uint64_t seed, const DatasetOptions& opt,
                                 const std::filesystem::path& root, const SplitFractions& fractions = {},
                                 int jobs = 1);

struct LabeledImages {
  std::vector<Image> images;
  std::vector<LaneLabel> labels;
};
LabeledImages load_split(const DatasetManifest& m, const std::filesystem::path& root, Split split);

// Scene ids of a split, ascending, from root/scenes/index.json.
std::vector<int> split_scene_ids(const std::filesystem::path& root, Split split);

}  // namespace lanesentinel::synth
