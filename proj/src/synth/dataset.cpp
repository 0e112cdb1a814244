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

#include "lanesentinel/synth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/io.hpp"
#include "lanesentinel/common/parallel.hpp"
#include "lanesentinel/common/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lanesentinel::synth {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(Errc::kConfigError, "unknown split '" + std::string(name) + "'");
}

Split assign_split(int rank, int n, const SplitFractions& f) {
  const int n_train = static_cast<int>(std::lround(f.train * n));
  const int n_val = static_cast<int>(std::lround(f.val * n));
  if (rank < n_train) return Split::kTrain;
  if (rank < n_train + n_val) return Split::kVal;
  return Split::kTest;
}

std::size_t DatasetManifest::count(LaneLabel label, Split split) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) {
    return e.label == label && e.split == split;
  }));
}

json manifest_to_json(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"path", e.path},
                       {"label", label_name(e.label)},
                       {"scene_id", e.scene_id},
                       {"lane_id", e.lane_id},
                       {"split", split_name(e.split)}});
  return entries;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    for (const auto& e : j) {
      ManifestEntry entry;
      entry.path = e.at("path").get<std::string>();
      entry.label = parse_label(e.at("label").get<std::string>());
      entry.scene_id = e.at("scene_id").get<int>();
      entry.lane_id = e.at("lane_id").get<int>();
      entry.split = parse_split(e.at("split").get<std::string>());
      if (entry.label == LaneLabel::kUnknown) throw Error(Errc::kConfigError, "manifest label must be real or fake");
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& ex) {
    throw Error(Errc::kConfigError, std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) { io::write_json(path, manifest_to_json(m)); }

DatasetManifest read_manifest(const fs::path& path) { return manifest_from_json(io::read_json(path)); }

json scene_label(const Scene& scene, const std::string& raw_file) {
  int lo = 0, hi = -1;
  if (!scene.gt_lanes.empty()) {
    lo = scene.gt_lanes.front().row_min();
    hi = scene.gt_lanes.front().row_max();
    for (const auto& l : scene.gt_lanes) {
      lo = std::min(lo, l.row_min());
      hi = std::max(hi, l.row_max());
    }
  }
  json rows = json::array();
  for (int r = lo; r <= hi; ++r) rows.push_back(r);
  json lanes = json::array();
  for (const auto& l : scene.gt_lanes) {
    std::vector<double> xs(static_cast<std::size_t>(std::max(0, hi - lo + 1)), -2.0);
    for (const auto& s : l.samples) xs[s.row - lo] = s.x;
    lanes.push_back(xs);
  }
  json curves = json::array();
  for (const auto& c : scene.gt_curves) curves.push_back({{"coeffs", c.coeffs}, {"row_min", c.row_min}, {"row_max", c.row_max}});
  return {{"h_samples", rows}, {"lanes", lanes}, {"raw_file", raw_file}, {"id", scene.id}, {"curves", curves}};
}

std::vector<Lane> lanes_from_label(const json& label) {
  std::vector<Lane> out;
  try {
    const auto rows = label.at("h_samples").get<std::vector<int>>();
    for (const auto& xs_json : label.at("lanes")) {
      const auto xs = xs_json.get<std::vector<double>>();
      if (xs.size() != rows.size()) throw Error(Errc::kIoError, "lane length differs from h_samples");
      Lane lane;
      lane.label = LaneLabel::kReal;
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (xs[i] >= 0.0) lane.samples.push_back({rows[i], xs[i]});
      out.push_back(std::move(lane));
    }
  } catch (const json::exception& ex) {
    throw Error(Errc::kIoError, std::string("malformed lane label: ") + ex.what());
  }
  return out;
}

SceneFiles scene_file_names(int id) {
  char base[32];
  std::snprintf(base, sizeof base, "scene_%05d", id);
  const std::string b = base;
  return {b + ".png", b + "_seg.png", b + ".json"};
}

void write_scene(const fs::path& root, const Scene& scene) {
  const auto names = scene_file_names(scene.id);
  const fs::path dir = root / "scenes";
  fs::create_directories(dir);
  io::write_png(dir / names.image, scene.image);
  io::write_png(dir / names.seg, scene.seg_map);
  io::write_json(dir / names.label, scene_label(scene, "scenes/" + names.image));
}

Scene read_scene(const fs::path& root, int id) {
  const auto names = scene_file_names(id);
  const fs::path dir = root / "scenes";
  Scene s;
  s.id = id;
  s.image = io::read_png(dir / names.image);
  s.seg_map = io::read_png_mask(dir / names.seg);
  const json label = io::read_json(dir / names.label);
  s.gt_lanes = lanes_from_label(label);
  for (const auto& c : label.at("curves")) {
    PolyLane p;
    p.coeffs = c.at("coeffs").get<std::vector<double>>();
    p.degree = static_cast<int>(p.coeffs.size()) - 1;
    p.row_min = c.at("row_min").get<int>();
    p.row_max = c.at("row_max").get<int>();
    s.gt_curves.push_back(p);
  }
  return s;
}

std::uint64_t scene_seed(std::uint64_t seed, int id) { return mix_seed(seed, 0x5CE0000ull + static_cast<std::uint64_t>(id)); }

std::vector<Scene> generate_scenes(const SceneConfig& cfg, std::uint64_t seed, int first_id, int count, int jobs) {
  std::vector<Scene> scenes(static_cast<std::size_t>(count));
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    const int id = first_id + static_cast<int>(i);
    scenes[i] = generate_scene(cfg, scene_seed(seed, id), id);
  });
  return scenes;
}

std::vector<LaneExample> scene_examples(const Scene& scene, const DatasetOptions& opt, int* skipped) {
  std::vector<LaneExample> out;
  int skip = 0;
  for (std::size_t li = 0; li < scene.gt_lanes.size(); ++li) {
    const Lane& real = scene.gt_lanes[li];
    try {
      LaneExample ex;
      ex.image = stabilize_lane(scene.image, fit_polynomial(real), opt.stab).image;
      quantize_to_8bit(ex.image);
      ex.label = LaneLabel::kReal;
      ex.lane_id = static_cast<int>(li);
      out.push_back(std::move(ex));
    } catch (const Error&) {
      ++skip;
      continue;
    }
    for (int k = 1; k <= opt.fakes_per_real; ++k) {
      const std::uint64_t s = mix_seed(opt.seed, (static_cast<std::uint64_t>(scene.id) << 16) | (li << 8) | k);
      try {
        LaneExample ex;
        ex.image = stabilize_lane(scene.image, fit_polynomial(generate_fake_lane(real, opt.fake, s)), opt.stab).image;
        quantize_to_8bit(ex.image);
        ex.label = LaneLabel::kFake;
        ex.lane_id = static_cast<int>(li);
        ex.variant = k;
        out.push_back(std::move(ex));
      } catch (const Error&) {
        ++skip;
      }
    }
  }
  if (skipped) *skipped += skip;
  return out;
}

namespace {

std::string example_path(int scene_id, const LaneExample& ex) {
  char buf[64];
  if (ex.label == LaneLabel::kReal)
    std::snprintf(buf, sizeof buf, "stabilized/s%05d_l%d_real.png", scene_id, ex.lane_id);
  else
    std::snprintf(buf, sizeof buf, "stabilized/s%05d_l%d_fake%d.png", scene_id, ex.lane_id, ex.variant);
  return buf;
}

// Stabilizes and writes one chunk; entries come back in scene order.
void emit_chunk(const std::vector<Scene>& scenes, const std::vector<Split>& splits, const DatasetOptions& opt,
                const fs::path& root, int jobs, DatasetManifest& m) {
  std::vector<std::vector<ManifestEntry>> per_scene(scenes.size());
  std::vector<int> skipped(scenes.size(), 0);
  parallel_for(scenes.size(), jobs, [&](std::size_t i) {
    for (const auto& ex : scene_examples(scenes[i], opt, &skipped[i])) {
      ManifestEntry e{example_path(scenes[i].id, ex), ex.label, scenes[i].id, ex.lane_id, splits[i]};
      io::write_png(root / e.path, ex.image);
      per_scene[i].push_back(std::move(e));
    }
  });
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    m.entries.insert(m.entries.end(), per_scene[i].begin(), per_scene[i].end());
    m.skipped += skipped[i];
  }
}

void check_fakes_per_real(const DatasetOptions& opt) {
  if (opt.fakes_per_real < 1) throw Error(Errc::kInvalidConfig, "fakes_per_real must be >= 1");
}

}  // namespace

DatasetManifest build_dataset(const std::vector<Scene>& scenes, const DatasetOptions& opt, const fs::path& root,
                              const SplitFractions& fractions, int jobs) {
  if (scenes.empty()) throw Error(Errc::kEmptyInput, "no scenes");
  check_fakes_per_real(opt);
  std::vector<int> ids;
  for (const auto& s : scenes) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  std::vector<Split> splits;
  for (const auto& s : scenes) {
    const int rank = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), s.id) - ids.begin());
    splits.push_back(assign_split(rank, static_cast<int>(ids.size()), fractions));
  }
  fs::create_directories(root / "stabilized");
  DatasetManifest m;
  emit_chunk(scenes, splits, opt, root, jobs, m);
  write_manifest(root / "manifest.json", m);
  return m;
}

DatasetManifest generate_dataset(const SceneConfig& cfg, int n_scenes, std::uint64_t seed, const DatasetOptions& opt,
                                 const fs::path& root, const SplitFractions& fractions, int jobs) {
  if (n_scenes < 1) throw Error(Errc::kEmptyInput, "no scenes");
  check_fakes_per_real(opt);
  fs::create_directories(root / "stabilized");
  fs::create_directories(root / "scenes");
  DatasetManifest m;
  json index = json::array();
  constexpr int kChunk = 32;
  for (int first = 0; first < n_scenes; first += kChunk) {
    const int count = std::min(kChunk, n_scenes - first);
    const auto scenes = generate_scenes(cfg, seed, first, count, jobs);
    std::vector<Split> splits;
    for (const auto& s : scenes) {
      splits.push_back(assign_split(s.id, n_scenes, fractions));
      index.push_back({{"id", s.id}, {"split", split_name(splits.back())}});
    }
    parallel_for(scenes.size(), jobs, [&](std::size_t i) { write_scene(root, scenes[i]); });
    emit_chunk(scenes, splits, opt, root, jobs, m);
  }
  io::write_json(root / "scenes" / "index.json", index);
  write_manifest(root / "manifest.json", m);
  return m;
}

LabeledImages load_split(const DatasetManifest& m, const fs::path& root, Split split) {
  std::vector<const ManifestEntry*> sel;
  for (const auto& e : m.entries)
    if (e.split == split) sel.push_back(&e);
  LabeledImages out;
  out.images.resize(sel.size());
  out.labels.resize(sel.size());
  for (std::size_t i = 0; i < sel.size(); ++i) {
    out.images[i] = io::read_png(root / sel[i]->path);
    out.labels[i] = sel[i]->label;
  }
  return out;
}

std::vector<int> split_scene_ids(const fs::path& root, Split split) {
  std::vector<int> ids;
  for (const auto& e : io::read_json(root / "scenes" / "index.json"))
    if (parse_split(e.at("split").get<std::string>()) == split) ids.push_back(e.at("id").get<int>());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace lanesentinel::synth
