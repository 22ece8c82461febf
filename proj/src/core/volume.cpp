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

#include "core/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"

namespace gtx::vol {

std::string to_string(const Dims& d) {
  return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b))
    throw ShapeError(std::string(what) + ": dimension mismatch " + to_string(a) + " vs " + to_string(b));
}

static void check_dims(const Dims& d) {
  if (d.nx < 1 || d.ny < 1 || d.nz < 1) throw ShapeError("volume dims must all be >= 1");
}

Volume::Volume(Dims dims, Spacing spacing, double fill) : dims_(dims), spacing_(spacing) {
  check_dims(dims);
  data_.assign(dims.count(), fill);
}

Volume::Volume(Dims dims, Spacing spacing, std::vector<double> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims);
  if (data_.size() != dims.count()) throw ShapeError("volume data length does not match dims");
}

double Volume::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
double Volume::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Volume::max() const { return *std::max_element(data_.begin(), data_.end()); }

bool Volume::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

RegionMask::RegionMask(Dims dims, Spacing spacing) : dims_(dims), spacing_(spacing) {
  check_dims(dims);
  bits_.assign(dims.count(), 0);
}

std::size_t RegionMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool RegionMask::subset_of(const RegionMask& other) const {
  require_same_dims(dims_, other.dims_, "mask subset");
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i] && !other.bits_[i]) return false;
  return true;
}

RegionMask RegionMask::operator|(const RegionMask& other) const {
  require_same_dims(dims_, other.dims_, "mask union");
  RegionMask out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] | other.bits_[i];
  return out;
}

std::string to_string(Laterality l) {
  switch (l) {
    case Laterality::Left: return "left";
    case Laterality::Right: return "right";
    default: return "none";
  }
}

Laterality laterality_from_string(const std::string& s) {
  if (s == "left") return Laterality::Left;
  if (s == "right") return Laterality::Right;
  if (s == "none" || s.empty()) return Laterality::None;
  throw ConfigError("unknown laterality '" + s + "'");
}

Atlas::Atlas(Dims dims, Spacing spacing) : dims_(dims), spacing_(spacing) {
  check_dims(dims);
  labels_.assign(dims.count(), 0);
}

void Atlas::add_region(int id, RegionInfo info) {
  if (id == 0) throw ConfigError("region id 0 is reserved for background");
  if (!regions_.emplace(id, std::move(info)).second)
    throw ConfigError("duplicate region id " + std::to_string(id));
}

const RegionInfo& Atlas::region(int id) const {
  auto it = regions_.find(id);
  if (it == regions_.end()) throw ConfigError("unknown region id " + std::to_string(id));
  return it->second;
}

RegionMask Atlas::mask(int id) const {
  RegionMask m(dims_, spacing_);
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == id) m.set(i);
  return m;
}

void Atlas::validate() const {
  for (auto l : labels_)
    if (l != 0 && !regions_.count(l))
      throw ConfigError("atlas label " + std::to_string(l) + " missing from region table");
}

std::vector<double> gaussian_kernel(double sigma_vox) {
  if (!(sigma_vox > 1e-12)) return {1.0};
  const auto radius = static_cast<long>(std::ceil(4.0 * sigma_vox));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    double w = std::exp(-0.5 * (i * i) / (sigma_vox * sigma_vox));
    k[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (auto& w : k) w /= total;
  return k;
}

namespace {

// Convolve along one axis in place. Each source voxel spreads its value over
// the in-bounds taps only, renormalised, so total mass is preserved.
void smooth_axis(std::vector<double>& data, const Dims& d, int axis, const std::vector<double>& k) {
  const long radius = static_cast<long>(k.size() / 2);
  if (radius == 0) return;
  const std::size_t n = d[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
  std::vector<double> line(n), out(n);
  const std::size_t outer = d.count() / n;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t base;
    if (axis == 0) {
      base = o * d.nx;
    } else if (axis == 1) {
      base = (o / d.nx) * d.nx * d.ny + (o % d.nx);
    } else {
      base = o;
    }
    for (std::size_t i = 0; i < n; ++i) line[i] = data[base + i * stride];
    std::fill(out.begin(), out.end(), 0.0);
    for (long j = 0; j < static_cast<long>(n); ++j) {
      const long lo = std::max(-radius, -j);
      const long hi = std::min(radius, static_cast<long>(n) - 1 - j);
      double wsum = 0.0;
      for (long t = lo; t <= hi; ++t) wsum += k[static_cast<std::size_t>(t + radius)];
      const double v = line[static_cast<std::size_t>(j)] / wsum;
      for (long t = lo; t <= hi; ++t) out[static_cast<std::size_t>(j + t)] += k[static_cast<std::size_t>(t + radius)] * v;
    }
    for (std::size_t i = 0; i < n; ++i) data[base + i * stride] = out[i];
  }
}

}  // namespace

Volume gaussian_smooth(const Volume& v, double fwhm_mm) {
  if (!std::isfinite(fwhm_mm)) throw ConfigError("gaussian_smooth: fwhm must be finite");
  if (fwhm_mm < 0) throw ConfigError("gaussian_smooth: fwhm must be >= 0");
  Volume out = v;
  if (fwhm_mm == 0.0) return out;
  const double fwhm_to_sigma = 1.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  for (int axis = 0; axis < 3; ++axis) {
    if (v.dims()[axis] == 1) continue;
    const double sigma = fwhm_mm * fwhm_to_sigma / v.spacing()[axis];
    smooth_axis(out.values(), v.dims(), axis, gaussian_kernel(sigma));
  }
  return out;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw NumericError("percentile: empty domain");
  if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("percentile: p must be in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  const auto n = static_cast<long>(sorted.size());
  long rank = static_cast<long>(std::ceil(p / 100.0 * static_cast<double>(n))) - 1;
  rank = std::clamp(rank, 0L, n - 1);
  std::nth_element(sorted.begin(), sorted.begin() + rank, sorted.end());
  return sorted[static_cast<std::size_t>(rank)];
}

double percentile(const Volume& v, double p, const RegionMask* mask) {
  if (!mask) return percentile(v.data(), p);
  require_same_dims(v.dims(), mask->dims(), "percentile");
  std::vector<double> vals;
  vals.reserve(mask->count());
  for (std::size_t i = 0; i < v.size(); ++i)
    if ((*mask)[i]) vals.push_back(v[i]);
  if (vals.empty()) throw NumericError("percentile: empty mask domain");
  return percentile(vals, p);
}

std::vector<std::array<long, 3>> ball_offsets(const Spacing& s, double radius_mm, bool is_2d) {
  std::vector<std::array<long, 3>> out;
  const double tol = 1e-9 * std::max(1.0, radius_mm);
  const long rx = static_cast<long>(std::floor(radius_mm / s[0] + 1e-9));
  const long ry = static_cast<long>(std::floor(radius_mm / s[1] + 1e-9));
  const long rz = is_2d ? 0 : static_cast<long>(std::floor(radius_mm / s[2] + 1e-9));
  for (long dz = -rz; dz <= rz; ++dz)
    for (long dy = -ry; dy <= ry; ++dy)
      for (long dx = -rx; dx <= rx; ++dx) {
        const double d2 = std::pow(dx * s[0], 2) + std::pow(dy * s[1], 2) + std::pow(dz * s[2], 2);
        if (std::sqrt(d2) <= radius_mm + tol) out.push_back({dx, dy, dz});
      }
  return out;
}

RegionMask dilate(const RegionMask& m, double radius_mm) {
  if (!(radius_mm >= 0.0)) throw ConfigError("dilate: radius must be >= 0");
  RegionMask out = m;
  if (radius_mm == 0.0) return out;
  const auto& d = m.dims();
  const auto offsets = ball_offsets(m.spacing(), radius_mm, d.is_2d());
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        if (!m[(z * d.ny + y) * d.nx + x]) continue;
        for (const auto& o : offsets) {
          const long xx = static_cast<long>(x) + o[0];
          const long yy = static_cast<long>(y) + o[1];
          const long zz = static_cast<long>(z) + o[2];
          if (xx < 0 || yy < 0 || zz < 0 || xx >= static_cast<long>(d.nx) ||
              yy >= static_cast<long>(d.ny) || zz >= static_cast<long>(d.nz))
            continue;
          out.set((static_cast<std::size_t>(zz) * d.ny + static_cast<std::size_t>(yy)) * d.nx +
                  static_cast<std::size_t>(xx));
        }
      }
  return out;
}

Volume mask_zero(const Volume& v, const RegionMask& m) {
  require_same_dims(v.dims(), m.dims(), "mask_zero");
  Volume out = v;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (m[i]) out[i] = 0.0;
  return out;
}

Volume upsample(const Volume& v, Dims target) {
  const Dims& s = v.dims();
  if (target.nx < s.nx || target.ny < s.ny || target.nz < s.nz || target.count() == 0)
    throw ShapeError("upsample: target dims " + to_string(target) + " smaller than source " + to_string(s));
  Spacing sp = v.spacing();
  for (int a = 0; a < 3; ++a)
    if (s[a] > 1 && target[a] > 1) sp[a] *= static_cast<double>(s[a] - 1) / static_cast<double>(target[a] - 1);
  Volume out(target, sp);
  auto coord = [](std::size_t i, std::size_t src, std::size_t tgt, std::size_t& i0, std::size_t& i1,
                  double& f) {
    if (src == 1 || tgt == 1) {
      i0 = i1 = 0;
      f = 0.0;
      return;
    }
    const double c = static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(tgt - 1);
    i0 = std::min(static_cast<std::size_t>(std::floor(c)), src - 1);
    i1 = std::min(i0 + 1, src - 1);
    f = c - static_cast<double>(i0);
  };
  for (std::size_t z = 0; z < target.nz; ++z) {
    std::size_t z0, z1;
    double fz;
    coord(z, s.nz, target.nz, z0, z1, fz);
    for (std::size_t y = 0; y < target.ny; ++y) {
      std::size_t y0, y1;
      double fy;
      coord(y, s.ny, target.ny, y0, y1, fy);
      for (std::size_t x = 0; x < target.nx; ++x) {
        std::size_t x0, x1;
        double fx;
        coord(x, s.nx, target.nx, x0, x1, fx);
        auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
        const double c00 = lerp(v.at(x0, y0, z0), v.at(x1, y0, z0), fx);
        const double c10 = lerp(v.at(x0, y1, z0), v.at(x1, y1, z0), fx);
        const double c01 = lerp(v.at(x0, y0, z1), v.at(x1, y0, z1), fx);
        const double c11 = lerp(v.at(x0, y1, z1), v.at(x1, y1, z1), fx);
        out.at(x, y, z) = lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
      }
    }
  }
  return out;
}

}  // namespace gtx::vol
