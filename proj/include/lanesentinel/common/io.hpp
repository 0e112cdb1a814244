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
#include <string>

#include <json.hpp>

#include "lanesentinel/common/image.hpp"

namespace lanesentinel::io {

// 8-bit PNG storage. Gray images must have 1 channel, RGB images 3. Values
// are clamped to [0,1] and rounded to the nearest 1/255 step.
void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const Mask& mask);
Image read_png(const std::filesystem::path& path);
Mask read_png_mask(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
// Pretty-printed, newline-terminated; byte-stable for equal input.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace lanesentinel::io
