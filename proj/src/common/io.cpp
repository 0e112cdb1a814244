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

#include "lanesentinel/common/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "lanesentinel/common/error.hpp"

namespace lanesentinel::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(Errc::kIoError, "cannot open " + path.string());
  return f;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_png_bytes(const std::filesystem::path& path, int width, int height, int color_type,
                     const std::vector<std::uint8_t>& interleaved) {
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::kIoError, "libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::kIoError, "libpng write failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int stride = width * (color_type == PNG_COLOR_TYPE_RGB ? 3 : 1);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(interleaved.data() + static_cast<std::size_t>(y) * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct RawPng {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> bytes;
};

RawPng read_png_bytes(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::kIoError, "libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::kIoError, "libpng read failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  RawPng raw;
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  raw.bytes.resize(rowbytes * raw.height);
  std::vector<png_bytep> rows(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = raw.bytes.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw Error(Errc::kShapeMismatch, "PNG needs 1 or 3 channels");
  std::vector<std::uint8_t> buf(img.plane_size() * img.channels);
  for (std::size_t i = 0; i < img.plane_size(); ++i)
    for (int c = 0; c < img.channels; ++c) buf[i * img.channels + c] = to_byte(img.data[c * img.plane_size() + i]);
  write_png_bytes(path, img.width, img.height, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, buf);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> buf(mask.data.size());
  std::transform(mask.data.begin(), mask.data.end(), buf.begin(), [](std::uint8_t v) { return v ? 255 : 0; });
  write_png_bytes(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, buf);
}

Image read_png(const std::filesystem::path& path) {
  const RawPng raw = read_png_bytes(path);
  const int channels = raw.channels >= 3 ? 3 : 1;
  Image img(channels, raw.height, raw.width);
  for (std::size_t i = 0; i < img.plane_size(); ++i)
    for (int c = 0; c < channels; ++c)
      img.data[c * img.plane_size() + i] = static_cast<float>(raw.bytes[i * raw.channels + c]) / 255.0f;
  return img;
}

Mask read_png_mask(const std::filesystem::path& path) {
  const RawPng raw = read_png_bytes(path);
  Mask m(raw.height, raw.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = raw.bytes[i * raw.channels] > 127 ? 1 : 0;
  return m;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoError, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfigError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::kIoError, "short write to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) { return fnv1a_hex(read_text(path)); }

}  // namespace lanesentinel::io
