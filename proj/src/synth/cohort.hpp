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

// Synthetic volumetric cohorts whose phenotypes have a known causal source.
//
// Every subject is rendered from a fixed template plus
//   * global factors g ~ N(0, I_G) that shift intensity everywhere, add a
//     left-right intensity ramp and scale every region radius;
//   * per-region latents: an intensity offset delta_r ~ N(0, tau_r^2) and a
//     radius jitter u_r ~ N(0, 1) (scaled by rho_r);
//   * iid Gaussian voxel noise.
// Phenotypes are then measured from the rendered image and realised masks,
// never copied from latents.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/volume.hpp"

namespace gtx::synth {

enum class Shape { Sphere, Box };

struct RegionBlueprint {
  int id = 0;
  std::string name;
  int family_id = 0;
  vol::Laterality laterality = vol::Laterality::None;
  Shape shape = Shape::Sphere;
  std::array<double, 3> center_mm{};
  double base_radius_mm = 4.0;
  double intensity = 2.0;  // template interior level
  double tau = 0.3;        // sd of the local intensity latent
  double rho = 0.05;       // sd of the relative radius jitter
};

struct FactorLoading {
  double intensity_gain = 0.0;
  double spatial_gradient_amplitude = 0.0;
  double global_radius_scale = 0.0;
};

// Template: background outside a centred ellipsoidal "brain", tissue inside.
struct TemplateSpec {
  double background = 0.0;
  double tissue = 1.0;
  double brain_fraction = 0.46;  // ellipsoid semi-axis as fraction of extent
};

struct CohortSpec {
  std::size_t n_subjects = 512;
  vol::Dims dims{24, 24, 24};
  vol::Spacing spacing_mm{4.0, 4.0, 4.0};
  std::vector<RegionBlueprint> regions;
  std::vector<FactorLoading> loadings;  // size G
  double noise_sd = 0.25;
  TemplateSpec templ;
  std::uint64_t seed = 1;

  std::size_t n_factors() const { return loadings.size(); }
  void validate() const;
};

// Default blueprint: n_regions spheres/boxes laid out inside the template
// brain with two shared factors. Regions with index pairs (0,1) and (2,3)
// form bilateral families when bilateral_pairs is true.
CohortSpec default_spec(vol::Dims dims, vol::Spacing spacing, std::size_t n_regions, std::size_t n_subjects,
                        std::uint64_t seed, bool bilateral_pairs = true);

enum class IdpKind { MeanIntensity, Volume, LesionLoad, AgeLike };

std::string to_string(IdpKind k);

struct IdpDescriptor {
  std::string name;
  int region_id = 0;  // 0 for lesion_load / age_like
  int family_id = -1;
  IdpKind kind = IdpKind::MeanIntensity;
};

struct PhenotypeTable {
  std::vector<std::string> subject_ids;
  std::vector<IdpDescriptor> idps;
  std::vector<std::vector<double>> values;  // [idp][subject]

  std::size_t n_subjects() const { return subject_ids.size(); }
  std::size_t column(const std::string& name) const;
  const std::vector<double>& column_values(const std::string& name) const { return values[column(name)]; }
  void add_column(IdpDescriptor d, std::vector<double> v);
};

struct Subject {
  std::string id;
  vol::Volume image;
  vol::Atlas labels;                         // realised region labels (disjoint)
  std::vector<double> global_factors;        // g
  std::vector<double> intensity_latents;     // delta_r, per region in blueprint order
  std::vector<double> radius_latents;        // u_r
  std::optional<vol::RegionMask> lesions;    // lesion task only

  vol::RegionMask region_mask(int region_id) const { return labels.mask(region_id); }
};

struct Cohort {
  CohortSpec spec;
  vol::Atlas atlas;  // base-radius atlas
  std::vector<Subject> subjects;
  PhenotypeTable phenotypes;
};

struct LesionParams {
  double rate = 2.0;  // Poisson mean number of blobs
  double radius_min_mm = 4.0;
  double radius_max_mm = 6.0;
  double intensity_boost = 1.5;
  std::array<double, 3> zone_min_mm{};
  std::array<double, 3> zone_max_mm{};

  void validate(const CohortSpec& spec) const;
};

// Default eligible zone: central box covering the middle third of each axis.
LesionParams default_lesion_params(const CohortSpec& spec);

Cohort generate_cohort(const CohortSpec& spec);

// Renders the cohort with lesion blobs; adds a lesion_load phenotype.
Cohort generate_lesion_task(const CohortSpec& spec, const LesionParams& params);

struct AgeTask {
  std::vector<double> age_like;
  std::vector<int> reference_regions;
};

// age_like = sum_r w_r * standardised(delta_r) + N(0, noise_sd^2).
AgeTask generate_age_task(const Cohort& cohort, const std::vector<int>& regions, const std::vector<double>& weights,
                          double noise_sd = 0.1);

// IDPs measured from an image + realised labels, in blueprint order:
// mean_intensity_<name>, volume_<name> for every region.
std::vector<double> measure_idps(const vol::Volume& image, const vol::Atlas& labels, const CohortSpec& spec);
std::vector<IdpDescriptor> idp_descriptors(const CohortSpec& spec);

// Directory layout: atlas.vlab, subjects/<id>.vlab, masks/<id>_<region>.vlab,
// phenotypes.csv (subject_id,idp_name,value), manifest.json.
void save_cohort(const Cohort& c, const std::filesystem::path& dir);
Cohort load_cohort(const std::filesystem::path& dir);

// Long-format phenotype CSV.
void write_phenotypes(const PhenotypeTable& t, const std::filesystem::path& p);
PhenotypeTable read_phenotypes(const std::filesystem::path& p, const std::vector<IdpDescriptor>& known);

}  // namespace gtx::synth
