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

#include "synth/spec_json.hpp"

#include "core/error.hpp"

namespace gtx::synth {

nlohmann::ordered_json spec_to_json(const CohortSpec& s) {
  nlohmann::ordered_json j;
  j["n_subjects"] = s.n_subjects;
  j["dims"] = {s.dims.nx, s.dims.ny, s.dims.nz};
  j["spacing_mm"] = s.spacing_mm;
  j["noise_sd"] = s.noise_sd;
  j["seed"] = s.seed;
  j["template"] = {{"background", s.templ.background},
                   {"tissue", s.templ.tissue},
                   {"brain_fraction", s.templ.brain_fraction}};
  auto& l = j["loadings"] = nlohmann::ordered_json::array();
  for (const auto& f : s.loadings)
    l.push_back({{"intensity_gain", f.intensity_gain},
                 {"spatial_gradient_amplitude", f.spatial_gradient_amplitude},
                 {"global_radius_scale", f.global_radius_scale}});
  auto& r = j["regions"] = nlohmann::ordered_json::array();
  for (const auto& b : s.regions)
    r.push_back({{"id", b.id},
                 {"name", b.name},
                 {"family_id", b.family_id},
                 {"laterality", vol::to_string(b.laterality)},
                 {"shape", b.shape == Shape::Box ? "box" : "sphere"},
                 {"center_mm", b.center_mm},
                 {"base_radius_mm", b.base_radius_mm},
                 {"intensity", b.intensity},
                 {"tau", b.tau},
                 {"rho", b.rho}});
  return j;
}

CohortSpec spec_from_json(const nlohmann::json& j) {
  try {
    CohortSpec s;
    s.n_subjects = j.at("n_subjects").get<std::size_t>();
    const auto d = j.at("dims").get<std::array<std::size_t, 3>>();
    s.dims = {d[0], d[1], d[2]};
    s.spacing_mm = j.at("spacing_mm").get<vol::Spacing>();
    s.noise_sd = j.at("noise_sd").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& t = j.at("template");
    s.templ = {t.at("background").get<double>(), t.at("tissue").get<double>(), t.at("brain_fraction").get<double>()};
    for (const auto& f : j.at("loadings"))
      s.loadings.push_back({f.at("intensity_gain").get<double>(), f.at("spatial_gradient_amplitude").get<double>(),
                            f.at("global_radius_scale").get<double>()});
    for (const auto& b : j.at("regions")) {
      RegionBlueprint r;
      r.id = b.at("id").get<int>();
      r.name = b.at("name").get<std::string>();
      r.family_id = b.at("family_id").get<int>();
      r.laterality = vol::laterality_from_string(b.at("laterality").get<std::string>());
      r.shape = b.at("shape").get<std::string>() == "box" ? Shape::Box : Shape::Sphere;
      r.center_mm = b.at("center_mm").get<std::array<double, 3>>();
      r.base_radius_mm = b.at("base_radius_mm").get<double>();
      r.intensity = b.at("intensity").get<double>();
      r.tau = b.at("tau").get<double>();
      r.rho = b.at("rho").get<double>();
      s.regions.push_back(std::move(r));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cohort spec: ") + e.what());
  }
}

}  // namespace gtx::synth
