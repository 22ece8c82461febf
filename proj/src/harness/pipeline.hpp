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

// Stage orchestration: generate -> correct -> train -> explain -> evaluate
// -> report, with every intermediate persisted under out/<run-id>/.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "harness/config.hpp"
#include "metrics/metrics.hpp"

namespace gtx::harness {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path cohort() const { return root / "cohort"; }
  std::filesystem::path main_cohort() const { return root / "cohort" / "main"; }
  std::filesystem::path lesion_cohort() const { return root / "cohort" / "lesion"; }
  std::filesystem::path tasks() const { return root / "cohort" / "tasks"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path heatmaps() const { return root / "heatmaps"; }
  std::filesystem::path scores() const { return root / "scores"; }
  std::filesystem::path report() const { return root / "report"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
};

RunPaths run_paths(const ExperimentConfig& cfg, const std::filesystem::path& out_root);

struct DiseaseLabels {
  std::vector<double> labels;          // 1 patient, 0 control, nan excluded
  std::vector<std::size_t> excluded;   // subject indices inside the exclusion band
  std::size_t n_patients = 0, n_controls = 0;
};

// Subjects with either value strictly inside (p_lo, p_hi) of its own
// distribution are excluded; the rest are patients iff c1 > p_hi(c1) and
// c2 <= p_lo(c2). Percentiles use nearest-rank semantics.
DiseaseLabels artificial_disease_labels(std::span<const double> c1, std::span<const double> c2, double hi = 0.60,
                                        double lo = 0.40);

// One prediction problem with its ground truth.
struct TaskDef {
  std::string name;
  Stage stage = Stage::Localized;
  std::string cohort = "main";  // main | lesion
  bool classification = false;
  std::vector<double> target;      // per cohort subject; nan when excluded
  std::vector<int> gt_regions;     // localized / disease
  bool lesion_gt = false;          // lesion
  std::vector<int> reference;      // plausibility
  double rma_dilation_mm = 0.0;
  std::size_t k_used = 0;          // cIDP components removed
};

void write_tasks(const std::vector<TaskDef>& tasks, const std::filesystem::path& dir,
                 const std::vector<std::string>& subject_ids);
std::vector<TaskDef> read_tasks(const std::filesystem::path& dir);

// Individual steps. Each reads the artifacts of its predecessors.
void generate(const ExperimentConfig& cfg, const RunPaths& paths);
void correct(const ExperimentConfig& cfg, const RunPaths& paths);
void train_models(const ExperimentConfig& cfg, const RunPaths& paths);
// Writes heatmaps; returns the scores computed in memory from the stored
// precision of each heatmap.
std::vector<metrics::SubjectScore> explain(const ExperimentConfig& cfg, const RunPaths& paths);
// Re-scores stored heatmaps.
std::vector<metrics::SubjectScore> evaluate(const ExperimentConfig& cfg, const RunPaths& paths);
void report(const ExperimentConfig& cfg, const RunPaths& paths);
// Renders every task/method pair of the configured stages.
void render(const ExperimentConfig& cfg, const RunPaths& paths);
// All steps plus manifest.json.
void pipeline(const ExperimentConfig& cfg, const RunPaths& paths);

// Writes <out>.png and <out>.pgm of one axial slice (the slice holding the
// most mask voxels, or the heatmap maximum without a mask).
void render_heatmap(const vol::Volume& h, const vol::RegionMask* mask, const std::filesystem::path& out,
                    std::optional<std::size_t> slice = std::nullopt);

// Score files holding the exact per-subject layout.
std::filesystem::path score_file(const RunPaths& paths, const std::string& task, std::uint64_t seed);

// Row-wise min-max scaling; rows with no spread become all zero and flagged.
struct ScaledMatrix {
  std::vector<std::vector<double>> values;
  std::vector<bool> flat;
};
ScaledMatrix minmax_rows(const std::vector<std::vector<double>>& m);

}  // namespace gtx::harness
