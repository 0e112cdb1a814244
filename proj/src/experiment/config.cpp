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

#include "lanesentinel/experiment/config.hpp"

#include "lanesentinel/common/error.hpp"
#include "lanesentinel/common/io.hpp"

namespace lanesentinel::experiment {

namespace {

using nlohmann::json;

json stab_json(const StabilizationConfig& s) {
  return {{"out_height", s.out_height}, {"out_width", s.out_width}, {"raw_band_width", s.raw_band_width}};
}

// Overlays `user` on `defaults` after checking that every user key exists
// in the defaults.
json overlay(const json& defaults, const json& user, const std::string& where) {
  if (user.is_null()) return defaults;
  if (!user.is_object()) throw Error(Errc::kConfigError, where + ": expected an object");
  json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (!defaults.contains(it.key())) throw Error(Errc::kConfigError, where + ": unknown key '" + it.key() + "'");
    if (defaults[it.key()].is_object()) {
      out[it.key()] = overlay(defaults[it.key()], it.value(), where + "." + it.key());
    } else {
      out[it.key()] = it.value();
    }
  }
  return out;
}

template <class T>
T get(const json& j, const char* key) {
  return j.at(key).get<T>();
}

}  // namespace

pipeline::VerifyConfig ExperimentConfig::verify_config() const {
  pipeline::VerifyConfig v;
  v.stab = dataset.stab;
  v.degree = verify_degree;
  v.rows_per_degree = verify_rows_per_degree;
  return v;
}

synth::DatasetOptions ExperimentConfig::dataset_options() const {
  synth::DatasetOptions o = dataset;
  o.seed = seed;
  return o;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.scene.marking_min = 0.46;
  c.scene.marking_max = 0.56;
  c.detector.steps = 2500;
  c.detector.seed = c.seed;
  c.verifier.seed = c.seed;
  c.linear_verifier.seed = c.seed;
  c.linear_verifier.lr = 0.005;
  c.attack.max_iters = 60;
  c.attack.seed = c.seed;
  return c;
}

json to_json(const ExperimentConfig& c) {
  return {
      {"scene", to_json(c.scene)},
      {"dataset",
       {{"n_scenes", c.n_scenes},
        {"seed", c.seed},
        {"train_fraction", c.splits.train},
        {"val_fraction", c.splits.val},
        {"fakes_per_real", c.dataset.fakes_per_real},
        {"fake_max_deviation", c.dataset.fake.max_deviation},
        {"fake_deviation_exponent", c.dataset.fake.deviation_exponent},
        {"fake_direction", c.dataset.fake.direction}}},
      {"stabilization", stab_json(c.dataset.stab)},
      {"detector",
       {{"train", to_json(c.detector)},
        {"extract_threshold", c.extract.threshold},
        {"extract_min_rows", c.extract.min_rows}}},
      {"verifier",
       {{"c1", c.verifier_arch.c1},
        {"c2", c.verifier_arch.c2},
        {"train", to_json(c.verifier)},
        {"focal_gamma", c.focal.gamma},
        {"focal_alpha_fake", c.focal.alpha_fake},
        {"focal_alpha_real", c.focal.alpha_real}}},
      {"linear_verifier", {{"train", to_json(c.linear_verifier)}}},
      {"attack", {{"pgd", to_json(c.attack)}, {"patch_side", c.patch_side}, {"scenes", c.attack_scenes}}},
      {"eval", {{"target_fpr", c.target_fpr}, {"match_tolerance", c.match.max_mean_dx}, {"verify_degree", c.verify_degree},
                {"verify_rows_per_degree", c.verify_rows_per_degree}}},
      {"bench", {{"scenes", c.bench_scenes}, {"reps", c.bench_reps}}},
  };
}

ExperimentConfig config_from_json(const json& user) {
  const ExperimentConfig d = default_config();
  const json j = overlay(to_json(d), user, "config");
  ExperimentConfig c = d;
  try {
    c.scene = synth::scene_config_from_json(j["scene"]);
    const json& ds = j["dataset"];
    c.n_scenes = get<int>(ds, "n_scenes");
    c.seed = get<std::uint64_t>(ds, "seed");
    c.splits.train = get<double>(ds, "train_fraction");
    c.splits.val = get<double>(ds, "val_fraction");
    c.dataset.fakes_per_real = get<int>(ds, "fakes_per_real");
    c.dataset.fake.max_deviation = get<double>(ds, "fake_max_deviation");
    c.dataset.fake.deviation_exponent = get<double>(ds, "fake_deviation_exponent");
    c.dataset.fake.direction = get<int>(ds, "fake_direction");
    const json& st = j["stabilization"];
    c.dataset.stab.out_height = get<int>(st, "out_height");
    c.dataset.stab.out_width = get<int>(st, "out_width");
    c.dataset.stab.raw_band_width = get<int>(st, "raw_band_width");
    const json& det = j["detector"];
    c.detector = nn::detector_train_config_from_json(det["train"]);
    c.extract.threshold = get<float>(det, "extract_threshold");
    c.extract.min_rows = get<int>(det, "extract_min_rows");
    const json& ver = j["verifier"];
    c.verifier_arch.c1 = get<int>(ver, "c1");
    c.verifier_arch.c2 = get<int>(ver, "c2");
    c.verifier_arch.in_height = c.dataset.stab.out_height;
    c.verifier_arch.in_width = c.dataset.stab.out_width;
    c.verifier = nn::train_config_from_json(ver["train"]);
    c.focal.gamma = get<double>(ver, "focal_gamma");
    c.focal.alpha_fake = get<double>(ver, "focal_alpha_fake");
    c.focal.alpha_real = get<double>(ver, "focal_alpha_real");
    c.linear_verifier = nn::train_config_from_json(j["linear_verifier"]["train"]);
    const json& at = j["attack"];
    c.attack = attacks::attack_config_from_json(at["pgd"]);
    c.patch_side = get<int>(at, "patch_side");
    c.attack_scenes = get<int>(at, "scenes");
    const json& ev = j["eval"];
    c.target_fpr = get<double>(ev, "target_fpr");
    c.match.max_mean_dx = get<double>(ev, "match_tolerance");
    c.verify_degree = get<int>(ev, "verify_degree");
    c.verify_rows_per_degree = get<int>(ev, "verify_rows_per_degree");
    c.bench_scenes = get<int>(j["bench"], "scenes");
    c.bench_reps = get<int>(j["bench"], "reps");
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigError, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kConfigError) throw;
    throw Error(Errc::kConfigError, e.what());
  }
  const auto fail = [](const std::string& m) { throw Error(Errc::kConfigError, m); };
  if (c.n_scenes < 3) fail("dataset.n_scenes must be at least 3");
  if (c.splits.train <= 0.0 || c.splits.val <= 0.0 || c.splits.train + c.splits.val >= 1.0)
    fail("split fractions must be positive and leave room for the test split");
  if (c.dataset.fakes_per_real < 1) fail("dataset.fakes_per_real must be at least 1");
  if (c.dataset.stab.out_height < 3 || c.dataset.stab.out_width < 3 || c.dataset.stab.raw_band_width < 1)
    fail("stabilization sizes too small");
  if (c.extract.min_rows < 1) fail("detector.extract_min_rows must be positive");
  if (c.patch_side < 1) fail("attack.patch_side must be positive");
  if (c.attack_scenes < 1) fail("attack.scenes must be positive");
  if (!(c.target_fpr >= 0.0 && c.target_fpr <= 1.0)) fail("eval.target_fpr must be in [0,1]");
  if (c.verify_degree < 1) fail("eval.verify_degree must be positive");
  if (c.verify_rows_per_degree < 0) fail("eval.verify_rows_per_degree must be non-negative");
  if (c.bench_scenes < 1 || c.bench_reps < 1) fail("bench sizes must be positive");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = io::read_json(path);
  } catch (const Error& e) {
    if (e.code() == Errc::kIoError) throw;
    throw Error(Errc::kConfigError, e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& c) { return io::fnv1a_hex(to_json(c).dump()); }

}  // namespace lanesentinel::experiment
