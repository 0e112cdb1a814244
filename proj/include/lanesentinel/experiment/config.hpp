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

#include <json.hpp>

#include "lanesentinel/attacks/attacks.hpp"
#include "lanesentinel/eval/metrics.hpp"
#include "lanesentinel/neural/extract.hpp"
#include "lanesentinel/neural/loss.hpp"
#include "lanesentinel/neural/models.hpp"
#include "lanesentinel/neural/train.hpp"
#include "lanesentinel/synth/dataset.hpp"
#include "lanesentinel/synth/scene.hpp"

namespace lanesentinel::experiment {

// Everything that determines an experiment's outputs. Serialized as JSON
// with one object per module; unknown keys are rejected.
struct ExperimentConfig {
  synth::SceneConfig scene;
  int n_scenes = 500;
  std::uint64_t seed = 7;
  synth::SplitFractions splits;
  synth::DatasetOptions dataset;  // dataset.seed is ignored; `seed` drives everything

  nn::DetectorTrainConfig detector;
  nn::ExtractConfig extract;
  nn::VerifierConfig verifier_arch;
  nn::TrainConfig verifier;
  nn::TrainConfig linear_verifier;
  nn::FocalParams focal;

  attacks::AttackConfig attack;
  int patch_side = 100;
  int attack_scenes = 50;  // leading scenes of the test split

  double target_fpr = 0.05;
  eval::MatchConfig match;
  int verify_degree = 3;
  int verify_rows_per_degree = 32;

  int bench_scenes = 20;
  int bench_reps = 5;

  pipeline::VerifyConfig verify_config() const;
  synth::DatasetOptions dataset_options() const;
};

// Desk-scale defaults: faded markings (so an 8/255 budget can move the toy
// detector), a 60-iteration attack cap, and seeds fixed for every stage.
ExperimentConfig default_config();

nlohmann::json to_json(const ExperimentConfig& c);
// Missing keys keep their defaults. Throws ConfigError on unknown keys,
// wrong types, or values the module validators reject.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a over the canonical JSON dump.
std::string config_hash(const ExperimentConfig& c);

}  // namespace lanesentinel::experiment
