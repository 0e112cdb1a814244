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

#include "lanesentinel/neural/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lanesentinel/common/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lanesentinel::nn {

namespace {

constexpr char kMagic[5] = {'L', 'S', 'N', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void incompatible(const std::string& path, const std::string& why) {
  throw Error(Errc::kIncompatibleModelFile, path + ": " + why);
}

void copy_into(const ModelFile& f, const std::vector<std::string>& names, const std::vector<Tensor<float>*>& dst,
               const std::string& path) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = std::find_if(f.tensors.begin(), f.tensors.end(), [&](const auto& t) { return t.first == names[i]; });
    if (it == f.tensors.end()) incompatible(path, "missing tensor " + names[i]);
    if (it->second.shape != dst[i]->shape) incompatible(path, "shape mismatch for " + names[i]);
    dst[i]->data = it->second.data;
  }
}

}  // namespace

void write_model_file(const fs::path& path, const ModelFile& m) {
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : m.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.numel()}});
    offset += t.numel() * 4;
  }
  const json header = {{"kind", m.kind},
                       {"config", m.config},
                       {"config_hash", m.config_hash},
                       {"dtype", "f32le"},
                       {"tensors", tensors}};
  const std::string head = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(head.size()));
  out += head;
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : m.tensors)
    for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f || !f.write(out.data(), static_cast<std::streamsize>(out.size())))
    throw Error(Errc::kIoError, "cannot write " + path.string());
}

ModelFile read_model_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::kIoError, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string p = path.string();
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 5) != 0) incompatible(p, "bad magic");
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t head_len = get_u32(u + 5);
  if (9 + head_len > bytes.size()) incompatible(p, "truncated header");
  ModelFile m;
  json header;
  try {
    header = json::parse(bytes.substr(9, head_len));
    m.kind = header.at("kind").get<std::string>();
    m.config = header.at("config");
    m.config_hash = header.at("config_hash").get<std::string>();
    if (header.at("dtype") != "f32le") incompatible(p, "unsupported dtype");
  } catch (const json::exception& e) {
    incompatible(p, std::string("malformed header: ") + e.what());
  }
  const std::size_t data_start = 9 + head_len;
  std::size_t expected = 0;
  try {
    for (const auto& t : header.at("tensors")) {
      Tensor<float> tensor(t.at("shape").get<std::vector<int>>());
      const std::size_t count = t.at("count").get<std::size_t>();
      const std::size_t offset = t.at("offset").get<std::size_t>();
      if (count != tensor.numel() || offset != expected) incompatible(p, "inconsistent tensor table");
      if (data_start + offset + 4 * count > bytes.size()) incompatible(p, "truncated tensor data");
      for (std::size_t i = 0; i < count; ++i)
        tensor.data[i] = std::bit_cast<float>(get_u32(u + data_start + offset + 4 * i));
      expected += 4 * count;
      m.tensors.emplace_back(t.at("name").get<std::string>(), std::move(tensor));
    }
  } catch (const json::exception& e) {
    incompatible(p, std::string("malformed tensor table: ") + e.what());
  }
  if (data_start + expected != bytes.size()) incompatible(p, "file length disagrees with header");
  return m;
}

void save_classifier(const fs::path& path, Classifier<float>& model, const std::string& config_hash) {
  ModelFile f{model.kind(), model.config(), config_hash, {}};
  const auto pn = model.parameter_names();
  const auto ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) f.tensors.emplace_back(pn[i], *ps[i]);
  const auto bn = model.buffer_names();
  const auto bs = model.buffers();
  for (std::size_t i = 0; i < bs.size(); ++i) f.tensors.emplace_back(bn[i], *bs[i]);
  write_model_file(path, f);
}

std::unique_ptr<Classifier<float>> load_classifier(const fs::path& path, std::string* config_hash) {
  const ModelFile f = read_model_file(path);
  std::unique_ptr<Classifier<float>> model;
  try {
    if (f.kind == "verifier_cnn") {
      VerifierConfig c;
      c.c1 = f.config.at("c1").get<int>();
      c.c2 = f.config.at("c2").get<int>();
      c.in_height = f.config.at("in_height").get<int>();
      c.in_width = f.config.at("in_width").get<int>();
      model = std::make_unique<VerifierCNN<float>>(c);
    } else if (f.kind == "verifier_linear") {
      model = std::make_unique<LinearVerifier<float>>(f.config.at("in_height").get<int>(),
                                                      f.config.at("in_width").get<int>());
    } else {
      incompatible(path.string(), "not a verifier model (kind '" + f.kind + "')");
    }
  } catch (const json::exception& e) {
    incompatible(path.string(), std::string("bad config: ") + e.what());
  }
  copy_into(f, model->parameter_names(), model->parameters(), path.string());
  copy_into(f, model->buffer_names(), model->buffers(), path.string());
  if (config_hash) *config_hash = f.config_hash;
  return model;
}

void save_detector(const fs::path& path, ToyDetector<float>& model, const std::string& config_hash) {
  ModelFile f{"detector_toy", model.config(), config_hash, {}};
  const auto pn = model.parameter_names();
  const auto ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) f.tensors.emplace_back(pn[i], *ps[i]);
  write_model_file(path, f);
}

ToyDetector<float> load_detector(const fs::path& path, std::string* config_hash) {
  const ModelFile f = read_model_file(path);
  if (f.kind != "detector_toy") incompatible(path.string(), "not a detector model (kind '" + f.kind + "')");
  ToyDetector<float> model;
  copy_into(f, model.parameter_names(), model.parameters(), path.string());
  if (config_hash) *config_hash = f.config_hash;
  return model;
}

}  // namespace lanesentinel::nn
