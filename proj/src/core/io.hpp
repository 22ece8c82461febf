// Copyright 2026 The gtxai Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// VLAB container:
//   "VLAB" | version u32 | nx ny nz u32 | spacing 3 x f64 | dtype u8 | payload (LE)
// Atlases append a region table trailer:
//   "RTAB" | count u32 | { id i32 | family i32 | laterality u8 | name_len u32 | name }*

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/volume.hpp"

namespace gtx::io {

enum class DType : std::uint8_t { F64 = 0, F32 = 1, U8 = 2, I32 = 3 };

inline constexpr std::uint32_t kVlabVersion = 1;

void write_volume(const std::filesystem::path& p, const vol::Volume& v, DType dtype = DType::F64);
vol::Volume read_volume(const std::filesystem::path& p);

void write_mask(const std::filesystem::path& p, const vol::RegionMask& m);
vol::RegionMask read_mask(const std::filesystem::path& p);

void write_atlas(const std::filesystem::path& p, const vol::Atlas& a);
vol::Atlas read_atlas(const std::filesystem::path& p);

// Round-trips a value through the storage precision of dtype.
double quantize(double v, DType dtype);

// Greyscale slice export. Values are linearly mapped from [lo, hi] to 0..255.
struct Rgb {
  std::uint8_t r, g, b;
};
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<Rgb> pixels;
};

Image slice_image(const vol::Volume& v, std::size_t z, double lo, double hi);
// Paints mask boundary voxels of slice z in the given colour.
void overlay_outline(Image& img, const vol::RegionMask& m, std::size_t z, Rgb colour);

void write_pgm(const std::filesystem::path& p, const Image& img);  // luminance only
void write_ppm(const std::filesystem::path& p, const Image& img);
void write_png(const std::filesystem::path& p, const Image& img);

std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& s);

}  // namespace gtx::io
