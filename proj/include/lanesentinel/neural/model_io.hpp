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
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lanesentinel/neural/models.hpp"

namespace lanesentinel::nn {

// On-disk layout: "LSNT1", uint32 little-endian header length, JSON header
// {kind, config, config_hash, dtype "f32le", tensors [{name, shape, offset,
// count}]}, then the float32 little-endian blocks in header order. Offsets
// are relative to the start of the data section.
struct ModelFile {
  std::string kind;
  nlohmann::json config;
  std::string config_hash;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void write_model_file(const std::filesystem::path& path, const ModelFile& m);
// Throws IncompatibleModelFile on bad magic, malformed header, or a length
// that disagrees with the header.
ModelFile read_model_file(const std::filesystem::path& path);

void save_classifier(const std::filesystem::path& path, Classifier<float>& model, const std::string& config_hash);
std::unique_ptr<Classifier<float>> load_classifier(const std::filesystem::path& path, std::string* config_hash = nullptr);

void save_detector(const std::filesystem::path& path, ToyDetector<float>& model, const std::string& config_hash);
ToyDetector<float> load_detector(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace lanesentinel::nn
