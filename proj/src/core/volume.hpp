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

// Volumetric primitives: dense scalar grids, boolean masks and labelled
// atlases, all sharing one flat layout with x varying fastest:
//   index(x, y, z) = (z * ny + y) * nx + x
// A 2D image is a volume with nz == 1.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gtx::vol {

struct Dims {
  std::size_t nx = 1, ny = 1, nz = 1;

  std::size_t count() const { return nx * ny * nz; }
  bool is_2d() const { return nz == 1; }
  std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

using Spacing = std::array<double, 3>;

std::string to_string(const Dims& d);

class Volume {
 public:
  Volume() = default;
  Volume(Dims dims, Spacing spacing, double fill = 0.0);
  Volume(Dims dims, Spacing spacing, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (z * dims_.ny + y) * dims_.nx + x;
  }
  double& at(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double sum() const;
  double min() const;
  double max() const;
  double voxel_volume() const { return spacing_[0] * spacing_[1] * spacing_[2]; }
  bool all_finite() const;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<double> data_;
};

class RegionMask {
 public:
  RegionMask() = default;
  RegionMask(Dims dims, Spacing spacing);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return bits_.size(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::vector<std::uint8_t>& raw() { return bits_; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool subset_of(const RegionMask& other) const;

  RegionMask operator|(const RegionMask& other) const;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> bits_;
};

enum class Laterality { None, Left, Right };

std::string to_string(Laterality l);
Laterality laterality_from_string(const std::string& s);

struct RegionInfo {
  std::string name;
  Laterality laterality = Laterality::None;
  int family_id = 0;
};

class Atlas {
 public:
  Atlas() = default;
  Atlas(Dims dims, Spacing spacing);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }

  std::int32_t label(std::size_t i) const { return labels_[i]; }
  void set_label(std::size_t i, std::int32_t id) { labels_[i] = id; }
  std::span<const std::int32_t> labels() const { return labels_; }
  std::vector<std::int32_t>& raw_labels() { return labels_; }

  const std::map<int, RegionInfo>& regions() const { return regions_; }
  void add_region(int id, RegionInfo info);
  const RegionInfo& region(int id) const;
  bool has_region(int id) const { return regions_.count(id) != 0; }

  // Membership mask of one region.
  RegionMask mask(int id) const;

  // Throws if a nonzero voxel label is missing from the region table.
  void validate() const;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<std::int32_t> labels_;
  std::map<int, RegionInfo> regions_;
};

void require_same_dims(const Dims& a, const Dims& b, const char* what);

// Separable Gaussian smoothing with sigma_axis = fwhm / (spacing_axis * 2 sqrt(2 ln 2)).
// The kernel is truncated at 4 sigma; at the boundary each source voxel's
// in-bounds taps are renormalised, so total mass is preserved.
Volume gaussian_smooth(const Volume& v, double fwhm_mm);

// 1D kernel weights used by gaussian_smooth for the given sigma (in voxels),
// centre tap at index radius. Exposed for tests.
std::vector<double> gaussian_kernel(double sigma_vox);

// Nearest-rank percentile: sorted[ceil(p/100 * N) - 1], clamped; p = 0 gives min.
double percentile(std::span<const double> values, double p);
double percentile(const Volume& v, double p, const RegionMask* mask = nullptr);

// Euclidean (mm) dilation; radius 0 is the identity.
RegionMask dilate(const RegionMask& m, double radius_mm);

// Integer voxel offsets (dx, dy, dz) with physical distance <= radius_mm.
std::vector<std::array<long, 3>> ball_offsets(const Spacing& spacing, double radius_mm, bool is_2d);

Volume mask_zero(const Volume& v, const RegionMask& m);

// Trilinear (bilinear for nz == 1) interpolation with align-corners semantics.
Volume upsample(const Volume& v, Dims target);

}  // namespace gtx::vol
