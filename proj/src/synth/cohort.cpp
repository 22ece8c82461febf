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

#include "synth/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/io.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "synth/spec_json.hpp"

namespace gtx::synth {

namespace {

constexpr double kJitterClamp = 3.0;

double bounding_radius(const RegionBlueprint& r, double factor, bool is_2d) {
  const double rad = r.base_radius_mm * factor;
  return r.shape == Shape::Sphere ? rad : rad * (is_2d ? std::sqrt(2.0) : std::sqrt(3.0));
}

double max_radius_factor(const CohortSpec& s, const RegionBlueprint& r) {
  double f = 1.0 + kJitterClamp * r.rho;
  for (const auto& l : s.loadings) f += kJitterClamp * std::abs(l.global_radius_scale);
  return f;
}

std::array<double, 3> grid_center(const CohortSpec& s) {
  return {(static_cast<double>(s.dims.nx) - 1) / 2 * s.spacing_mm[0],
          (static_cast<double>(s.dims.ny) - 1) / 2 * s.spacing_mm[1],
          s.dims.is_2d() ? 0.0 : (static_cast<double>(s.dims.nz) - 1) / 2 * s.spacing_mm[2]};
}

std::array<double, 3> brain_semi_axes(const CohortSpec& s) {
  return {s.templ.brain_fraction * static_cast<double>(s.dims.nx) * s.spacing_mm[0],
          s.templ.brain_fraction * static_cast<double>(s.dims.ny) * s.spacing_mm[1],
          s.templ.brain_fraction * static_cast<double>(s.dims.nz) * s.spacing_mm[2]};
}

}  // namespace

void CohortSpec::validate() const {
  if (n_subjects < 1) throw ConfigError("cohort: n_subjects must be >= 1");
  if (dims.count() == 0) throw ConfigError("cohort: dims must be >= 1");
  for (double s : spacing_mm)
    if (!(s > 0)) throw ConfigError("cohort: spacing must be positive");
  if (loadings.empty()) throw ConfigError("cohort: need at least one global factor");
  if (!(noise_sd >= 0)) throw ConfigError("cohort: noise_sd must be >= 0");
  if (regions.empty()) throw ConfigError("cohort: need at least one region");
  std::map<int, int> seen;
  const bool is_2d = dims.is_2d();
  for (const auto& r : regions) {
    if (r.id <= 0) throw ConfigError("cohort: region ids must be positive");
    if (!seen.emplace(r.id, 1).second) throw ConfigError("cohort: duplicate region id " + std::to_string(r.id));
    if (!(r.tau >= 0) || !(r.rho >= 0)) throw ConfigError("cohort: tau and rho must be >= 0 for " + r.name);
    if (!(r.base_radius_mm > 0)) throw ConfigError("cohort: region radius must be positive for " + r.name);
  }
  for (std::size_t i = 0; i < regions.size(); ++i)
    for (std::size_t j = i + 1; j < regions.size(); ++j) {
      const auto& a = regions[i];
      const auto& b = regions[j];
      double d2 = 0;
      for (int k = 0; k < (is_2d ? 2 : 3); ++k) d2 += std::pow(a.center_mm[k] - b.center_mm[k], 2);
      const double reach = bounding_radius(a, max_radius_factor(*this, a), is_2d) +
                           bounding_radius(b, max_radius_factor(*this, b), is_2d);
      if (std::sqrt(d2) <= reach)
        throw ConfigError("cohort: regions '" + a.name + "' and '" + b.name + "' may overlap after jitter");
    }
}

std::string to_string(IdpKind k) {
  switch (k) {
    case IdpKind::MeanIntensity: return "mean_intensity";
    case IdpKind::Volume: return "volume";
    case IdpKind::LesionLoad: return "lesion_load";
    case IdpKind::AgeLike: return "age_like";
  }
  return "?";
}

std::size_t PhenotypeTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < idps.size(); ++i)
    if (idps[i].name == name) return i;
  throw ConfigError("unknown phenotype '" + name + "'");
}

void PhenotypeTable::add_column(IdpDescriptor d, std::vector<double> v) {
  if (v.size() != subject_ids.size()) throw ShapeError("phenotype column length differs from subject count");
  for (std::size_t i = 0; i < idps.size(); ++i)
    if (idps[i].name == d.name) {
      idps[i] = std::move(d);
      values[i] = std::move(v);
      return;
    }
  idps.push_back(std::move(d));
  values.push_back(std::move(v));
}

CohortSpec default_spec(vol::Dims dims, vol::Spacing spacing, std::size_t n_regions, std::size_t n_subjects,
                        std::uint64_t seed, bool bilateral_pairs) {
  // Slot positions as fractions of the brain semi-axes; slots (0,1) and
  // (2,3) are mirror images across the midline.
  static const std::array<std::array<double, 3>, 12> kSlots{{{-0.48, 0.32, 0.0},
                                                             {0.48, 0.32, 0.0},
                                                             {-0.48, -0.32, 0.0},
                                                             {0.48, -0.32, 0.0},
                                                             {0.0, 0.58, 0.32},
                                                             {0.0, -0.58, -0.32},
                                                             {0.0, 0.0, 0.6},
                                                             {0.0, 0.0, -0.6},
                                                             {-0.55, 0.0, 0.55},
                                                             {0.55, 0.0, -0.55},
                                                             {0.0, 0.0, 0.0},
                                                             {-0.3, 0.6, -0.4}}};
  if (n_regions < 1 || n_regions > kSlots.size())
    throw ConfigError("default atlas supports 1.." + std::to_string(kSlots.size()) + " regions");
  CohortSpec s;
  s.n_subjects = n_subjects;
  s.dims = dims;
  s.spacing_mm = spacing;
  s.seed = seed;
  s.loadings = {{0.60, 0.10, 0.03}, {0.25, 0.0, 0.05}};
  s.noise_sd = 0.2;
  s.templ.tissue = 3.0;
  const auto c = grid_center(s);
  const auto a = brain_semi_axes(s);
  const double amin = dims.is_2d() ? std::min(a[0], a[1]) : std::min({a[0], a[1], a[2]});
  int next_family = 1;
  for (std::size_t i = 0; i < n_regions; ++i) {
    RegionBlueprint r;
    r.id = static_cast<int>(i + 1);
    const auto& slot = kSlots[i];
    const bool paired = bilateral_pairs && i < 4 && (i % 2 == 1 ? true : i + 1 < n_regions);
    if (paired) {
      r.laterality = slot[0] < 0 ? vol::Laterality::Left : vol::Laterality::Right;
      r.family_id = (i % 2 == 0) ? next_family++ : next_family - 1;
      r.name = std::string(i < 2 ? "nucleus" : "gyrus") + (slot[0] < 0 ? "_L" : "_R");
    } else {
      r.family_id = next_family++;
      r.name = "region" + std::to_string(i + 1);
    }
    r.shape = (i == 2 || i == 3 || i == 6 || i == 9) ? Shape::Box : Shape::Sphere;
    for (int k = 0; k < 3; ++k) r.center_mm[k] = c[k] + slot[k] * a[k];
    if (dims.is_2d()) r.center_mm[2] = 0.0;
    r.base_radius_mm = (r.shape == Shape::Box ? 0.12 : 0.17) * amin;
    const double contrast = 0.8 + 0.6 * static_cast<double>(i / 2);
    r.intensity = s.templ.tissue + (i % 2 == 0 ? contrast : -contrast);
    r.tau = 0.3;
    r.rho = 0.06;
    s.regions.push_back(r);
  }
  return s;
}

std::vector<IdpDescriptor> idp_descriptors(const CohortSpec& spec) {
  std::vector<IdpDescriptor> out;
  for (const auto& r : spec.regions) {
    out.push_back({"mean_intensity_" + r.name, r.id, r.family_id, IdpKind::MeanIntensity});
    out.push_back({"volume_" + r.name, r.id, r.family_id, IdpKind::Volume});
  }
  return out;
}

std::vector<double> measure_idps(const vol::Volume& image, const vol::Atlas& labels, const CohortSpec& spec) {
  vol::require_same_dims(image.dims(), labels.dims(), "measure_idps");
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const int l = labels.label(i);
    if (l == 0) continue;
    auto& a = acc[l];
    a.first += image[i];
    ++a.second;
  }
  std::vector<double> out;
  for (const auto& r : spec.regions) {
    const auto it = acc.find(r.id);
    const std::size_t n = it == acc.end() ? 0 : it->second.second;
    out.push_back(n ? it->second.first / static_cast<double>(n) : 0.0);
    out.push_back(static_cast<double>(n) * image.voxel_volume());
  }
  return out;
}

void LesionParams::validate(const CohortSpec& spec) const {
  if (!(rate >= 0)) throw ConfigError("lesion: rate must be >= 0");
  if (!(radius_min_mm >= 0) || radius_max_mm < radius_min_mm) throw ConfigError("lesion: invalid radius range");
  const int axes = spec.dims.is_2d() ? 2 : 3;
  for (int k = 0; k < axes; ++k) {
    const double extent = (static_cast<double>(spec.dims[k]) - 1) * spec.spacing_mm[k];
    if (zone_min_mm[k] < 0 || zone_max_mm[k] > extent || zone_min_mm[k] > zone_max_mm[k])
      throw ConfigError("lesion: eligible zone must lie inside the volume");
  }
}

LesionParams default_lesion_params(const CohortSpec& spec) {
  LesionParams p;
  for (int k = 0; k < 3; ++k) {
    const double extent = (static_cast<double>(spec.dims[k]) - 1) * spec.spacing_mm[k];
    p.zone_min_mm[k] = spec.dims[k] == 1 ? 0.0 : extent / 3.0;
    p.zone_max_mm[k] = spec.dims[k] == 1 ? 0.0 : 2.0 * extent / 3.0;
  }
  p.radius_min_mm = spec.spacing_mm[0];
  p.radius_max_mm = 1.6 * spec.spacing_mm[0];
  return p;
}

namespace {

std::string subject_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "sub-%04zu", i + 1);
  return buf;
}

Subject render_subject(const CohortSpec& spec, std::size_t index, const LesionParams* lesion) {
  auto rng = make_stream(spec.seed, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool is_2d = spec.dims.is_2d();
  Subject s;
  s.id = subject_id(index);
  s.global_factors.resize(spec.n_factors());
  for (auto& g : s.global_factors) g = normal(rng);
  for (const auto& r : spec.regions) {
    s.intensity_latents.push_back(r.tau * normal(rng));
    s.radius_latents.push_back(normal(rng));
  }
  double gain = 0, ramp = 0, scale = 0;
  for (std::size_t k = 0; k < spec.n_factors(); ++k) {
    const double g = s.global_factors[k];
    const double gc = std::clamp(g, -kJitterClamp, kJitterClamp);
    gain += g * spec.loadings[k].intensity_gain;
    ramp += g * spec.loadings[k].spatial_gradient_amplitude;
    scale += gc * spec.loadings[k].global_radius_scale;
  }

  const auto centre = grid_center(spec);
  const auto semi = brain_semi_axes(spec);
  const auto& d = spec.dims;
  s.image = vol::Volume(d, spec.spacing_mm);
  s.labels = vol::Atlas(d, spec.spacing_mm);
  for (const auto& r : spec.regions) s.labels.add_region(r.id, {r.name, r.laterality, r.family_id});

  std::vector<double> radius(spec.regions.size());
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    const auto& bp = spec.regions[r];
    const double u = std::clamp(s.radius_latents[r], -kJitterClamp, kJitterClamp);
    radius[r] = std::max(0.0, bp.base_radius_mm * (1.0 + scale + bp.rho * u));
  }

  std::vector<std::uint8_t> lesion_bits;
  if (lesion) {
    auto lrng = make_stream(spec.seed ^ 0x6c6573696f6eULL, index);
    std::poisson_distribution<int> count(lesion->rate);
    std::uniform_real_distribution<double> rad(lesion->radius_min_mm, lesion->radius_max_mm);
    lesion_bits.assign(d.count(), 0);
    std::array<std::size_t, 3> lo{}, hi{};
    for (int k = 0; k < 3; ++k) {
      lo[k] = static_cast<std::size_t>(std::ceil(lesion->zone_min_mm[k] / spec.spacing_mm[k] - 1e-9));
      hi[k] = static_cast<std::size_t>(std::floor(lesion->zone_max_mm[k] / spec.spacing_mm[k] + 1e-9));
      hi[k] = std::min(hi[k], d[k] - 1);
      if (d[k] == 1) lo[k] = hi[k] = 0;
    }
    const int k_blobs = count(lrng);
    for (int b = 0; b < k_blobs; ++b) {
      std::array<long, 3> c{};
      for (int k = 0; k < 3; ++k) {
        std::uniform_int_distribution<std::size_t> pick(lo[k], hi[k]);
        c[k] = static_cast<long>(pick(lrng));
      }
      const double r = rad(lrng);
      for (const auto& o : vol::ball_offsets(spec.spacing_mm, r, is_2d)) {
        const long x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
        if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(d.nx) || y >= static_cast<long>(d.ny) ||
            z >= static_cast<long>(d.nz))
          continue;
        lesion_bits[(static_cast<std::size_t>(z) * d.ny + static_cast<std::size_t>(y)) * d.nx +
                    static_cast<std::size_t>(x)] = 1;
      }
    }
  }

  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        const std::array<double, 3> p{static_cast<double>(x) * spec.spacing_mm[0],
                                      static_cast<double>(y) * spec.spacing_mm[1],
                                      is_2d ? 0.0 : static_cast<double>(z) * spec.spacing_mm[2]};
        double e = 0;
        for (int k = 0; k < (is_2d ? 2 : 3); ++k) e += std::pow((p[k] - centre[k]) / semi[k], 2);
        const std::size_t i = s.image.index(x, y, z);
        double v = spec.templ.background;
        if (e <= 1.0) {
          const double shared = gain + ramp * (p[0] - centre[0]) / semi[0];
          v = spec.templ.tissue + shared;
          for (std::size_t r = 0; r < spec.regions.size(); ++r) {
            const auto& bp = spec.regions[r];
            bool inside;
            if (bp.shape == Shape::Sphere) {
              double d2 = 0;
              for (int k = 0; k < (is_2d ? 2 : 3); ++k) d2 += std::pow(p[k] - bp.center_mm[k], 2);
              inside = std::sqrt(d2) <= radius[r] + 1e-9;
            } else {
              inside = true;
              for (int k = 0; k < (is_2d ? 2 : 3); ++k)
                inside = inside && std::abs(p[k] - bp.center_mm[k]) <= radius[r] + 1e-9;
            }
            if (inside) {
              if (s.labels.label(i) != 0) throw NumericError("cohort: regions overlap after jitter in " + s.id);
              s.labels.set_label(i, bp.id);
              v = bp.intensity + shared + s.intensity_latents[r];
            }
          }
          if (lesion && lesion_bits[i]) v += lesion->intensity_boost;
        } else if (lesion) {
          lesion_bits[i] = 0;  // lesions only exist inside the brain
        }
        s.image[i] = v;
      }
  if (spec.noise_sd > 0) {
    auto nrng = make_stream(spec.seed ^ 0x6e6f697365ULL, index);
    std::normal_distribution<double> noise(0.0, spec.noise_sd);
    for (auto& v : s.image.values()) v += noise(nrng);
  }
  if (lesion) {
    vol::RegionMask m(d, spec.spacing_mm);
    m.raw() = std::move(lesion_bits);
    s.lesions = std::move(m);
  }
  return s;
}

Cohort build(const CohortSpec& spec, const LesionParams* lesion) {
  spec.validate();
  Cohort c;
  c.spec = spec;
  c.atlas = vol::Atlas(spec.dims, spec.spacing_mm);
  {
    CohortSpec base = spec;
    base.noise_sd = 0;
    base.loadings.assign(spec.loadings.size(), FactorLoading{});
    for (auto& r : base.regions) {
      r.tau = 0;
      r.rho = 0;
    }
    Subject t = render_subject(base, 0, nullptr);
    c.atlas = t.labels;
  }
  c.subjects.resize(spec.n_subjects);
  parallel_for(spec.n_subjects, [&](std::size_t i) { c.subjects[i] = render_subject(spec, i, lesion); });

  auto& t = c.phenotypes;
  t.idps = idp_descriptors(spec);
  t.values.assign(t.idps.size(), std::vector<double>(spec.n_subjects));
  for (std::size_t i = 0; i < spec.n_subjects; ++i) {
    t.subject_ids.push_back(c.subjects[i].id);
    const auto v = measure_idps(c.subjects[i].image, c.subjects[i].labels, spec);
    for (std::size_t k = 0; k < v.size(); ++k) t.values[k][i] = v[k];
  }
  if (lesion) {
    std::vector<double> load(spec.n_subjects);
    for (std::size_t i = 0; i < spec.n_subjects; ++i)
      load[i] = static_cast<double>(c.subjects[i].lesions->count()) * c.subjects[i].image.voxel_volume();
    t.add_column({"lesion_load", 0, -1, IdpKind::LesionLoad}, std::move(load));
  }
  return c;
}

}  // namespace

Cohort generate_cohort(const CohortSpec& spec) { return build(spec, nullptr); }

Cohort generate_lesion_task(const CohortSpec& spec, const LesionParams& params) {
  params.validate(spec);
  return build(spec, &params);
}

AgeTask generate_age_task(const Cohort& cohort, const std::vector<int>& regions, const std::vector<double>& weights,
                          double noise_sd) {
  if (regions.size() != weights.size()) throw ConfigError("age task: regions and weights differ in length");
  if (regions.size() < 2) throw ConfigError("age task: reference set needs at least two regions");
  const std::size_t n = cohort.subjects.size();
  AgeTask task;
  task.reference_regions = regions;
  task.age_like.assign(n, 0.0);
  for (std::size_t k = 0; k < regions.size(); ++k) {
    std::size_t idx = cohort.spec.regions.size();
    for (std::size_t r = 0; r < cohort.spec.regions.size(); ++r)
      if (cohort.spec.regions[r].id == regions[k]) idx = r;
    if (idx == cohort.spec.regions.size())
      throw ConfigError("age task: unknown region " + std::to_string(regions[k]));
    double mean = 0, sd = 0;
    for (const auto& s : cohort.subjects) mean += s.intensity_latents[idx];
    mean /= static_cast<double>(n);
    for (const auto& s : cohort.subjects) sd += std::pow(s.intensity_latents[idx] - mean, 2);
    sd = std::sqrt(sd / static_cast<double>(n > 1 ? n - 1 : 1));
    for (std::size_t i = 0; i < n; ++i) {
      const double z = sd > 0 ? (cohort.subjects[i].intensity_latents[idx] - mean) / sd : 0.0;
      task.age_like[i] += weights[k] * z;
    }
  }
  auto rng = make_stream(cohort.spec.seed ^ 0x616765ULL, 0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& a : task.age_like) a += noise_sd * noise(rng);
  return task;
}

void write_phenotypes(const PhenotypeTable& t, const std::filesystem::path& p) {
  csv::Table out({"subject_id", "idp_name", "value"});
  for (std::size_t i = 0; i < t.n_subjects(); ++i)
    for (std::size_t k = 0; k < t.idps.size(); ++k) out.add({t.subject_ids[i], t.idps[k].name, csv::fmt(t.values[k][i])});
  out.write(p);
}

PhenotypeTable read_phenotypes(const std::filesystem::path& p, const std::vector<IdpDescriptor>& known) {
  const auto in = csv::Table::read(p);
  const auto sc = in.column("subject_id"), nc = in.column("idp_name"), vc = in.column("value");
  PhenotypeTable t;
  std::map<std::string, std::size_t> subj, idp;
  for (const auto& row : in.rows()) {
    if (!subj.count(row[sc])) {
      subj[row[sc]] = t.subject_ids.size();
      t.subject_ids.push_back(row[sc]);
    }
    if (!idp.count(row[nc])) {
      idp[row[nc]] = t.idps.size();
      IdpDescriptor d{row[nc], 0, -1, IdpKind::MeanIntensity};
      for (const auto& k : known)
        if (k.name == row[nc]) d = k;
      t.idps.push_back(d);
    }
  }
  t.values.assign(t.idps.size(), std::vector<double>(t.subject_ids.size(), std::nan("")));
  for (const auto& row : in.rows()) t.values[idp[row[nc]]][subj[row[sc]]] = std::stod(row[vc]);
  for (const auto& col : t.values)
    for (double v : col)
      if (std::isnan(v)) throw IoError(p.string() + ": missing phenotype values");
  return t;
}

void save_cohort(const Cohort& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "subjects");
  std::filesystem::create_directories(dir / "masks");
  io::write_atlas(dir / "atlas.vlab", c.atlas);
  parallel_for(c.subjects.size(), [&](std::size_t i) {
    const auto& s = c.subjects[i];
    io::write_volume(dir / "subjects" / (s.id + ".vlab"), s.image);
    for (const auto& r : c.spec.regions) io::write_mask(dir / "masks" / (s.id + "_" + r.name + ".vlab"), s.region_mask(r.id));
    if (s.lesions) io::write_mask(dir / "masks" / (s.id + "_lesion.vlab"), *s.lesions);
  });
  write_phenotypes(c.phenotypes, dir / "phenotypes.csv");

  csv::Table lat({"subject_id", "latent", "value"});
  for (const auto& s : c.subjects) {
    for (std::size_t k = 0; k < s.global_factors.size(); ++k) lat.add({s.id, "g" + std::to_string(k + 1), csv::fmt(s.global_factors[k])});
    for (std::size_t r = 0; r < c.spec.regions.size(); ++r) {
      lat.add({s.id, "delta_" + c.spec.regions[r].name, csv::fmt(s.intensity_latents[r])});
      lat.add({s.id, "u_" + c.spec.regions[r].name, csv::fmt(s.radius_latents[r])});
    }
  }
  lat.write(dir / "latents.csv");

  nlohmann::ordered_json m;
  m["spec"] = spec_to_json(c.spec);
  m["seed"] = c.spec.seed;
  m["lesion_task"] = !c.subjects.empty() && c.subjects[0].lesions.has_value();
  nlohmann::ordered_json idps = nlohmann::ordered_json::array();
  for (const auto& d : c.phenotypes.idps)
    idps.push_back({{"name", d.name}, {"region_id", d.region_id}, {"family_id", d.family_id}, {"kind", to_string(d.kind)}});
  m["idps"] = idps;
  io::write_text(dir / "manifest.json", m.dump(2) + "\n");
}

Cohort load_cohort(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json"))
    throw IoError("no cohort at '" + dir.string() + "' (missing manifest.json)");
  const auto m = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  Cohort c;
  c.spec = spec_from_json(m.at("spec"));
  const bool lesion = m.value("lesion_task", false);
  std::vector<IdpDescriptor> known;
  for (const auto& d : m.at("idps")) {
    IdpDescriptor x;
    x.name = d.at("name").get<std::string>();
    x.region_id = d.at("region_id").get<int>();
    x.family_id = d.at("family_id").get<int>();
    const auto kind = d.at("kind").get<std::string>();
    x.kind = kind == "volume" ? IdpKind::Volume
             : kind == "lesion_load" ? IdpKind::LesionLoad
             : kind == "age_like" ? IdpKind::AgeLike
                                  : IdpKind::MeanIntensity;
    known.push_back(x);
  }
  c.atlas = io::read_atlas(dir / "atlas.vlab");
  c.phenotypes = read_phenotypes(dir / "phenotypes.csv", known);
  c.subjects.resize(c.phenotypes.n_subjects());

  std::map<std::string, std::map<std::string, double>> latents;
  if (std::filesystem::exists(dir / "latents.csv")) {
    const auto lt = csv::Table::read(dir / "latents.csv");
    for (const auto& row : lt.rows()) latents[row[0]][row[1]] = std::stod(row[2]);
  }
  parallel_for(c.subjects.size(), [&](std::size_t i) {
    auto& s = c.subjects[i];
    s.id = c.phenotypes.subject_ids[i];
    s.image = io::read_volume(dir / "subjects" / (s.id + ".vlab"));
    s.labels = vol::Atlas(s.image.dims(), s.image.spacing());
    for (const auto& r : c.spec.regions) {
      s.labels.add_region(r.id, {r.name, r.laterality, r.family_id});
      const auto mask = io::read_mask(dir / "masks" / (s.id + "_" + r.name + ".vlab"));
      for (std::size_t v = 0; v < mask.size(); ++v)
        if (mask[v]) s.labels.set_label(v, r.id);
    }
    if (lesion) s.lesions = io::read_mask(dir / "masks" / (s.id + "_lesion.vlab"));
    const auto it = latents.find(s.id);
    if (it != latents.end()) {
      for (std::size_t k = 0; k < c.spec.n_factors(); ++k) s.global_factors.push_back(it->second.at("g" + std::to_string(k + 1)));
      for (const auto& r : c.spec.regions) {
        s.intensity_latents.push_back(it->second.at("delta_" + r.name));
        s.radius_latents.push_back(it->second.at("u_" + r.name));
      }
    }
  });
  return c;
}

}  // namespace gtx::synth
