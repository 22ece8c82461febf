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

// Mass-univariate OLS with max-|t| permutation inference.
//
// The contrast column is orthogonalised against [intercept, confounds] and
// its values are permuted across subjects; every permutation refits the full
// model, so the statistic is exact under confounds. Family-wise error p per
// voxel is (1 + #{perm : max_v |t_perm| >= |t_obs|}) / (1 + n_perm).

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "core/volume.hpp"

namespace gtx::stats {

struct Design {
  std::vector<double> contrast;                // one value per subject
  std::vector<std::vector<double>> confounds;  // columns, each of n_subjects

  std::size_t n_subjects() const { return contrast.size(); }
  void validate() const;
};

struct StatMap {
  vol::Volume t_values;
  vol::Volume fwe_p;
  std::size_t n_perm = 0;
  std::uint64_t seed = 0;

  std::size_t n_significant(double alpha) const;
};

// Subject volumes laid out voxel-major (rows = voxels, cols = subjects), so
// they can be reused across many contrasts.
class VoxelData {
 public:
  explicit VoxelData(std::span<const vol::Volume> subjects);

  std::size_t n_voxels() const { return static_cast<std::size_t>(y_.rows()); }
  std::size_t n_subjects() const { return static_cast<std::size_t>(y_.cols()); }
  const Eigen::MatrixXd& matrix() const { return y_; }
  const vol::Dims& dims() const { return dims_; }
  const vol::Spacing& spacing() const { return spacing_; }

 private:
  Eigen::MatrixXd y_;
  vol::Dims dims_;
  vol::Spacing spacing_{};
};

using Permutation = std::vector<std::size_t>;

// n_perm random permutations drawn from seed (Fisher-Yates on mt19937_64).
std::vector<Permutation> draw_permutations(std::size_t n_subjects, std::size_t n_perm, std::uint64_t seed);

StatMap permuted_ols(const Design& design, const VoxelData& data, std::size_t n_perm, std::uint64_t seed);
StatMap permuted_ols(const Design& design, std::span<const vol::Volume> subjects, std::size_t n_perm,
                     std::uint64_t seed);
// Explicit permutation list (the seed is recorded only).
StatMap permuted_ols(const Design& design, const VoxelData& data, std::span<const Permutation> perms,
                     std::uint64_t seed = 0);

// Per-voxel Cohen's d (pooled sd), zeroed where fwe_p > alpha. Requires at
// least two subjects per group.
vol::Volume effect_size_map(std::span<const vol::Volume> group_a, std::span<const vol::Volume> group_b,
                            const StatMap& sig, double alpha);

// CSV with columns n_perm,seed,n_sig_voxels,alpha.
void write_summary(const std::filesystem::path& p, const StatMap& s, double alpha);

}  // namespace gtx::stats
