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

// Heatmap post-processing and evaluation scores against known ground truth.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "core/volume.hpp"

namespace gtx::metrics {

enum class Rectify { Abs, PositivePart };

std::string to_string(Rectify r);
Rectify rectify_from_string(const std::string& s);

struct PostprocessConfig {
  Rectify rectify = Rectify::Abs;
  double fwhm_mm = 4.0;
  double scale_percentile = 99.0;
  double cutoff_percentile = 99.0;

  void validate() const;
};

struct Processed {
  vol::Volume map;
  bool degenerate = false;  // scale value was 0, map left unscaled
};

// rectify, smooth, scale by a percentile, zero values strictly below the
// cutoff percentile, cap at 1.
Processed postprocess(const vol::Volume& h, const PostprocessConfig& cfg);

struct RmaResult {
  double value = 0.0;
  bool degenerate = false;  // zero total mass
};

// Fraction of heatmap mass inside the dilated ground-truth mask.
RmaResult rma(const vol::Volume& h, const vol::RegionMask& gt, double dilation_mm);

struct RegionScoreRow {
  int region_id = 0;         // smallest id of the merged group
  std::vector<int> members;  // atlas ids folded into this row
  std::string name;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

// Per region 99th-percentile intensity; bilateral pairs (same family, one
// left and one right) keep the larger score. Sorted descending, ties by id.
std::vector<RegionScoreRow> region_scores(const vol::Volume& h, const vol::Atlas& atlas, double percentile = 99.0);

// True iff the row containing target_region has rank <= top_k.
bool tpr_hit(const std::vector<RegionScoreRow>& scores, int target_region, std::size_t top_k = 3);

struct FprResult {
  bool flag = false;
  bool degenerate = false;  // all-zero heatmap
  double threshold = 0.0;
};

// Voxels eligible to count as false positives: outside the dilated mask.
vol::RegionMask fpr_candidates(const vol::RegionMask& gt, double dilation_mm);

// Flag iff any voxel outside dilate(gt) exceeds the 99th percentile inside it.
FprResult fpr_flag(const vol::Volume& h, const vol::RegionMask& gt, double dilation_mm = 20.0);

// |top-k rows intersect S| / k, k = |S| when 0. Rows match S by any member id.
double overlap_topk(const std::vector<RegionScoreRow>& scores, const std::set<int>& reference, std::size_t k = 0);

struct SubjectScore {
  std::string task;
  std::string method;
  std::string subject_id;
  double rma = 0.0;      // nan when not scored
  double tpr_hit = 0.0;  // 0/1, nan when not scored
  double fpr_flag = 0.0;
  double overlap = 0.0;
  bool degenerate = false;
};

struct Aggregate {
  std::string task;
  std::string method;
  std::size_t n = 0;             // scored subjects
  std::size_t n_degenerate = 0;  // excluded
  double rma_mean = 0, rma_sd = 0;
  double tpr = 0, tpr_sd = 0;
  double fpr = 0, fpr_sd = 0;
  double overlap_mean = 0, overlap_sd = 0;
};

struct EvalResult {
  std::vector<SubjectScore> subjects;
  std::vector<Aggregate> aggregates;  // one per (task, method), sorted
};

// Means and population sds over non-degenerate rows, skipping nan entries.
std::vector<Aggregate> aggregate(const std::vector<SubjectScore>& rows);

// Columns: task,method,subject_id,rma,tpr_hit,fpr_flag,overlap,degenerate_flag.
void write_scores(const std::filesystem::path& p, const std::vector<SubjectScore>& rows);
std::vector<SubjectScore> read_scores(const std::filesystem::path& p);

// Task-by-method tables of one statistic: first column task, then methods.
enum class Stat { RmaMean, RmaSd, Tpr, TprSd, Fpr, FprSd, OverlapMean, OverlapSd, NDegenerate };
void write_aggregate_table(const std::filesystem::path& p, const std::vector<Aggregate>& aggs, Stat stat);

}  // namespace gtx::metrics
