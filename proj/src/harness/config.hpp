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

// Experiment configuration: one TOML file per experiment.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attribution/attribution.hpp"
#include "cidp/cidp.hpp"
#include "metrics/metrics.hpp"
#include "net/train.hpp"
#include "synth/cohort.hpp"

namespace gtx::harness {

enum class Stage { Localized, ArtificialDisease, Lesion, Plausibility };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct CohortConfig {
  std::size_t n_subjects = 512;
  vol::Dims dims{24, 24, 24};
  vol::Spacing spacing_mm{4.0, 4.0, 4.0};
  std::size_t n_regions = 6;
  bool bilateral_pairs = true;
  std::uint64_t seed = 7;
  std::optional<double> noise_sd, tau, rho;
};

struct CorrectionConfig {
  std::vector<std::size_t> grid{0, 5};
  std::size_t n_perm = 200;
  double alpha = 0.05;
  double dilation_mm = 8.0;
  double tolerance = 0.95;
};

struct DiseasePair {
  std::string first, second;  // IDP names; labels use their cIDPs
};

struct DiseaseConfig {
  std::vector<DiseasePair> pairs;
  double hi = 0.60, lo = 0.40;
};

struct LesionConfig {
  double rate = 2.0;
  double radius_min_mm = 4.0;
  double radius_max_mm = 6.4;
  double intensity_boost = 1.5;
};

struct PlausibilityConfig {
  std::vector<std::string> regions;  // reference set by region name
  std::vector<double> weights;       // empty: all 1
  double noise_sd = 0.1;
};

struct MethodsConfig {
  std::vector<std::string> names = attr::all_method_names();
  double smoothgrad_noise = 0.1;
  std::size_t smoothgrad_n = 20;
  std::string deeplift_baseline = "training_mean";  // zero | training_mean
  double lrp_eps = 1e-6;
};

struct MetricsConfig {
  double rma_dilation_mm = 2.0;
  double lesion_dilation_mm = 0.0;
  double fpr_dilation_mm = 20.0;
  std::size_t top_k = 3;
  std::size_t n_explain = 16;  // test subjects explained per model
};

struct ReportGroup {
  std::string name;
  std::vector<std::string> tasks;
};

struct ReportConfig {
  std::vector<ReportGroup> groups;
};

struct ExperimentConfig {
  std::string run_id = "desk";
  std::vector<Stage> stages{Stage::Localized};
  std::vector<std::string> targets{"mean_intensity_nucleus_L", "mean_intensity_region5"};  // localized stage
  CohortConfig cohort;
  CorrectionConfig correction;
  DiseaseConfig disease;
  LesionConfig lesion;
  PlausibilityConfig plausibility;
  net::TrainConfig train;
  std::vector<std::size_t> widths{8, 16, 16};
  MethodsConfig methods;
  metrics::PostprocessConfig postprocess;
  MetricsConfig metrics;
  ReportConfig report;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  bool has_stage(Stage s) const;
  // Throws ConfigError on unresolvable regions, targets or methods.
  void validate() const;
};

synth::CohortSpec cohort_spec(const CohortConfig& c);

// TOML text or a run manifest (JSON with a "config_toml" entry).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& p);
std::string to_toml(const ExperimentConfig& c);
std::string to_json(const ExperimentConfig& c);

// Resolved method list, with per-experiment parameters applied.
std::vector<attr::Method> resolve_methods(const ExperimentConfig& c);

}  // namespace gtx::harness
