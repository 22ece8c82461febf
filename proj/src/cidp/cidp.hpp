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

// Corrected phenotypes: regress a target IDP on the leading principal
// components of all IDPs that do not belong to the target's region family,
// and keep the residual.

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <vector>

#include "stats/permuted_ols.hpp"
#include "synth/cohort.hpp"

namespace gtx::cidp {

struct CorrectionSet {
  Eigen::MatrixXd values;  // subjects x m
  std::vector<synth::IdpDescriptor> columns;
  int excluded_family = -1;

  std::size_t n_subjects() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t size() const { return columns.size(); }
};

CorrectionSet build_correction_set(const synth::PhenotypeTable& table, const synth::IdpDescriptor& target);

struct PCAModel {
  Eigen::VectorXd means;
  Eigen::VectorXd sds;
  Eigen::MatrixXd components;  // rows are unit directions in standardized space
  Eigen::VectorXd eigenvalues;  // descending
  Eigen::MatrixXd scores;       // training subjects x components

  std::size_t n_components() const { return static_cast<std::size_t>(components.rows()); }
  // Scores of new observations (rows = subjects, cols = original columns).
  Eigen::MatrixXd project(const Eigen::MatrixXd& x) const;
};

// Correlation-matrix PCA via SVD. Each component is signed so that its
// largest-magnitude loading is positive.
PCAModel fit_pca(const CorrectionSet& set);

struct CIDP {
  std::vector<double> values;
  synth::IdpDescriptor target;
  std::size_t k_used = 0;
  double localization = -1.0;  // < 0 until scored
  bool no_significant = false;
};

// Standardize the target, regress on [1, first k PC scores], return residuals.
CIDP residualize(std::span<const double> target, const PCAModel& model, std::size_t k);

struct Localization {
  double score = 1.0;
  std::size_t n_significant = 0;
  std::size_t n_inside = 0;
  bool no_significant = false;  // score defaults to 1 when nothing is significant
};

Localization localization_score(const stats::StatMap& stat, const vol::RegionMask& mask, double alpha,
                                double dilation_mm);

struct SelectKConfig {
  std::vector<std::size_t> grid{0, 5, 10};
  std::size_t n_perm = 200;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  double dilation_mm = 8.0;
  double tolerance = 0.95;  // pick the smallest k within this fraction of the best score
};

struct KSweepEntry {
  std::size_t k = 0;
  Localization loc;
};

struct SelectKResult {
  std::size_t k = 0;
  std::vector<KSweepEntry> sweep;
};

// Grid entries with no significant voxel are excluded from the maximum unless
// every entry is in that state.
SelectKResult select_k(std::span<const double> target, const PCAModel& model, const stats::VoxelData& volumes,
                       const vol::RegionMask& mask, const SelectKConfig& cfg);

// 0, step, 2 step, ... up to max_k (inclusive when it lands on the grid).
std::vector<std::size_t> k_grid(std::size_t max_k, std::size_t step);

// CSV quartet <prefix>_means.csv, _sds.csv, _components.csv, _eigenvalues.csv.
void write_pca(const PCAModel& m, const std::filesystem::path& dir, const std::string& prefix);
PCAModel read_pca(const std::filesystem::path& dir, const std::string& prefix);

std::string cidp_column_name(const std::string& idp, std::size_t k);

}  // namespace gtx::cidp
