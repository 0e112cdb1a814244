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

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanesentinel/attacks/attacks.hpp"
#include "lanesentinel/experiment/config.hpp"
#include "lanesentinel/synth/dataset.hpp"

namespace lanesentinel::experiment {

using Log = std::function<void(const std::string&)>;

struct RunContext {
  ExperimentConfig config;
  std::string config_hash;
  int jobs = 1;
  Log log;  // progress lines; may be empty
};

RunContext make_context(const ExperimentConfig& config, int jobs = 1, Log log = {});

// Every command writes its artifact plus <artifact>.run.json holding the
// command, config hash, seed, wall time and a command-specific summary.
std::filesystem::path run_metadata_path(const std::filesystem::path& artifact);

// Scenes, stabilized lanes and manifest under `out`, plus out/dataset.json
// with the generating config and its hash.
nlohmann::json gen_data(const RunContext& ctx, const std::filesystem::path& out);

enum class Role { kDetector, kVerifier, kLinearVerifier };
std::string_view role_name(Role r);
Role parse_role(std::string_view s);

// Detector: train-split scenes, reports held-out IoU on the val split.
// Verifiers: train/val stabilized lanes, reports the training curve.
nlohmann::json train_model(const RunContext& ctx, Role role, const std::filesystem::path& data,
                           const std::filesystem::path& out);

struct AttackOptions {
  std::string mode = "bounded";  // "clean" runs detection only
  bool adaptive = false;
  int cycles = 1;
  std::filesystem::path data;
  std::filesystem::path detector;
  std::vector<std::filesystem::path> verifiers;  // the first one is attacked when adaptive
  std::filesystem::path out;                     // JSON lines, one record per scene
  std::string condition;                         // defaults to a name derived from the mode
};

std::string condition_name(const AttackOptions& opt);

// Attacks the leading `attack.scenes` test scenes that have two or more
// lanes and scores every detected lane with every verifier. Records are
// written in scene order whatever the worker count.
nlohmann::json run_attack(const RunContext& ctx, const AttackOptions& opt);

struct EvalOptions {
  std::vector<std::filesystem::path> results;
  std::filesystem::path verifier;
  std::filesystem::path data;
  synth::Split calibrate = synth::Split::kVal;
  std::filesystem::path out;  // report JSON; ROC CSVs and SVGs go beside it
  bool svg = false;
  bool force = false;         // accept results or models from another config
};

// Calibrates tau on the real lanes of the calibration split, then reports
// every results file as one condition. Throws NoResults when the results
// hold no records and HashMismatch on foreign inputs unless forced.
nlohmann::json run_eval(const RunContext& ctx, const EvalOptions& opt);

struct BenchOptions {
  std::filesystem::path detector;
  std::filesystem::path verifier;
  std::filesystem::path data;
  std::filesystem::path out;
  int reps = 0;  // 0 means the configured count
};

nlohmann::json run_bench(const RunContext& ctx, const BenchOptions& opt);

// JSON-lines helpers.
std::vector<nlohmann::json> read_records(const std::filesystem::path& path);

}  // namespace lanesentinel::experiment
