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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <map>

#include "core/error.hpp"
#include "synth/cohort.hpp"
#include "test_util.hpp"

using namespace gtx;
using gtx::testing::pearson;

namespace {

synth::CohortSpec small_spec(std::size_t n, std::uint64_t seed = 3) {
  return synth::default_spec({16, 16, 16}, {4, 4, 4}, 6, n, seed);
}

// Voxel count of a Euclidean ball of radius r (in voxels) on the unit grid.
std::size_t ball_count(double r) {
  const long k = static_cast<long>(std::floor(r + 1e-9));
  std::size_t c = 0;
  for (long z = -k; z <= k; ++z)
    for (long y = -k; y <= k; ++y)
      for (long x = -k; x <= k; ++x) c += (x * x + y * y + z * z) <= r * r + 1e-9 ? 1 : 0;
  return c;
}

}  // namespace

TEST_CASE("generation is seeded") {
  const auto a = synth::generate_cohort(small_spec(20));
  const auto b = synth::generate_cohort(small_spec(20));
  CHECK(a.phenotypes.values == b.phenotypes.values);
  CHECK(a.subjects[5].image.values() == b.subjects[5].image.values());
  const auto c = synth::generate_cohort(small_spec(20, 4));
  CHECK(a.phenotypes.values != c.phenotypes.values);
}

TEST_CASE("noise-free cohort reproduces the template analytically") {
  auto spec = small_spec(5);
  spec.noise_sd = 0;
  for (auto& l : spec.loadings) l = {};
  for (auto& r : spec.regions) r.tau = r.rho = 0;
  const auto c = synth::generate_cohort(spec);
  const double vv = 64.0;
  for (std::size_t s = 0; s < c.subjects.size(); ++s)
    for (const auto& r : spec.regions) {
      CHECK(c.phenotypes.column_values("mean_intensity_" + r.name)[s] == doctest::Approx(r.intensity));
      // Oracle: count grid points inside the blueprint shape.
      std::size_t n = 0;
      const auto& d = spec.dims;
      for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
          for (std::size_t x = 0; x < d.nx; ++x) {
            const double p[3] = {4.0 * double(x), 4.0 * double(y), 4.0 * double(z)};
            bool in = true;
            double d2 = 0;
            for (int k = 0; k < 3; ++k) {
              d2 += std::pow(p[k] - r.center_mm[k], 2);
              in = in && std::abs(p[k] - r.center_mm[k]) <= r.base_radius_mm + 1e-9;
            }
            if (r.shape == synth::Shape::Sphere) in = std::sqrt(d2) <= r.base_radius_mm + 1e-9;
            n += in ? 1 : 0;
          }
      CHECK(c.phenotypes.column_values("volume_" + r.name)[s] == doctest::Approx(double(n) * vv));
    }
}

TEST_CASE("raw intensities share the global gain factor") {
  const auto c = synth::generate_cohort(small_spec(500));
  std::vector<double> g;
  for (const auto& s : c.subjects) g.push_back(s.global_factors[0]);
  for (const auto& d : c.phenotypes.idps)
    if (d.kind == synth::IdpKind::MeanIntensity) CHECK(std::abs(pearson(c.phenotypes.column_values(d.name), g)) >= 0.3);
}

TEST_CASE("phenotypes are measured from images and masks") {
  const auto c = synth::generate_cohort(small_spec(8));
  for (std::size_t s = 0; s < c.subjects.size(); ++s) {
    const auto v = synth::measure_idps(c.subjects[s].image, c.subjects[s].labels, c.spec);
    for (std::size_t k = 0; k < v.size(); ++k) CHECK(v[k] == c.phenotypes.values[k][s]);
    for (const auto& r : c.spec.regions) {
      const auto m = c.subjects[s].region_mask(r.id);
      double sum = 0;
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) sum += c.subjects[s].image[i];
      CHECK(c.phenotypes.column_values("mean_intensity_" + r.name)[s] ==
            doctest::Approx(sum / double(m.count())).epsilon(1e-12));
    }
  }
}

TEST_CASE("cohort directory round trip") {
  const auto dir = gtx::testing::temp_dir("synth");
  const auto c = synth::generate_cohort(small_spec(6));
  synth::save_cohort(c, dir / "c");
  CHECK(std::filesystem::exists(dir / "c" / "atlas.vlab"));
  CHECK(std::filesystem::exists(dir / "c" / "phenotypes.csv"));
  CHECK(std::filesystem::exists(dir / "c" / "manifest.json"));
  const auto r = synth::load_cohort(dir / "c");
  CHECK(r.phenotypes.values == c.phenotypes.values);
  CHECK(r.subjects[3].image.values() == c.subjects[3].image.values());
  for (const auto& reg : c.spec.regions)
    CHECK(r.subjects[2].region_mask(reg.id).count() == c.subjects[2].region_mask(reg.id).count());
}

TEST_CASE("lesions") {
  auto spec = small_spec(40);
  auto p = synth::default_lesion_params(spec);
  p.rate = 0;
  const auto none = synth::generate_lesion_task(spec, p);
  for (double l : none.phenotypes.column_values("lesion_load")) CHECK(l == 0.0);
  for (const auto& s : none.subjects) CHECK(s.lesions->empty());

  p.rate = 1.0;
  p.radius_min_mm = p.radius_max_mm = 4.0;
  const auto unit = synth::generate_lesion_task(spec, p);
  std::map<double, int> loads;
  for (double l : unit.phenotypes.column_values("lesion_load"))
    if (l > 0) ++loads[l];
  REQUIRE(!loads.empty());
  const auto mode = std::max_element(loads.begin(), loads.end(), [](auto& a, auto& b) { return a.second < b.second; });
  CHECK(mode->first == doctest::Approx(double(ball_count(1.0)) * 64.0));
  CHECK(ball_count(1.0) == 7);

  p.validate(spec);
  auto bad = p;
  bad.zone_max_mm[0] = 1e6;
  CHECK_THROWS_AS(synth::generate_lesion_task(spec, bad), ConfigError);
}

TEST_CASE("mean lesion load matches the analytic expectation") {
  auto spec = small_spec(1000);
  auto p = synth::default_lesion_params(spec);
  p.rate = 0.3;
  p.radius_min_mm = 4.0;
  p.radius_max_mm = 6.4;
  const auto c = synth::generate_lesion_task(spec, p);
  double mean = 0;
  for (double l : c.phenotypes.column_values("lesion_load")) mean += l / 1000.0;
  double expected_vox = 0;
  const int steps = 4000;
  for (int i = 0; i < steps; ++i) {
    const double r = (p.radius_min_mm + (p.radius_max_mm - p.radius_min_mm) * (i + 0.5) / steps) / 4.0;
    expected_vox += double(ball_count(r)) / steps;
  }
  const double expected = p.rate * expected_vox * 64.0;
  CHECK(std::abs(mean - expected) / expected < 0.10);
}

TEST_CASE("age-like target") {
  const auto c = synth::generate_cohort(small_spec(400));
  const int r5 = c.spec.regions[4].id, r6 = c.spec.regions[5].id;
  const auto single = synth::generate_age_task(c, {r5, r6}, {1.0, 0.0}, 0.0);
  std::vector<double> lat;
  for (const auto& s : c.subjects) lat.push_back(s.intensity_latents[4]);
  CHECK(pearson(single.age_like, lat) == doctest::Approx(1.0).epsilon(1e-12));

  const auto two = synth::generate_age_task(c, {r5, r6}, {1.0, 1.0}, 0.1);
  CHECK(two.reference_regions == std::vector<int>{r5, r6});
  Eigen::MatrixXd x(c.subjects.size(), 3);
  Eigen::VectorXd y(c.subjects.size());
  for (std::size_t i = 0; i < c.subjects.size(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = c.subjects[i].intensity_latents[4];
    x(i, 2) = c.subjects[i].intensity_latents[5];
    y(i) = two.age_like[i];
  }
  // Standardise the latents so the coefficients are the weights.
  for (int k = 1; k < 3; ++k) {
    const double m = x.col(k).mean();
    const double sd = std::sqrt((x.col(k).array() - m).square().mean());
    x.col(k) = (x.col(k).array() - m) / sd;
  }
  const Eigen::VectorXd b = x.colPivHouseholderQr().solve(y);
  CHECK(b(1) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(b(2) == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS_AS(synth::generate_age_task(c, {999, r5}, {1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(synth::generate_age_task(c, {r5}, {1.0}), ConfigError);
}

TEST_CASE("spec validation") {
  auto s = small_spec(4);
  s.noise_sd = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(synth::default_spec({16, 16, 16}, {4, 4, 4}, 0, 4, 1), ConfigError);
}
