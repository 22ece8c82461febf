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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "metrics/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gtx;

namespace {

vol::RegionMask box(vol::Dims d, std::size_t x0, std::size_t x1, std::size_t y0, std::size_t y1, std::size_t z0,
                    std::size_t z1) {
  vol::RegionMask m(d, {1, 1, 1});
  for (std::size_t z = z0; z < z1; ++z)
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) m.set((z * d.ny + y) * d.nx + x);
  return m;
}

metrics::PostprocessConfig plain(double cutoff) {
  metrics::PostprocessConfig c;
  c.fwhm_mm = 0.0;
  c.cutoff_percentile = cutoff;
  return c;
}

vol::Atlas two_region_atlas() {
  vol::Atlas a({4, 1, 1}, {1, 1, 1});
  a.add_region(1, {"a"});
  a.add_region(2, {"b"});
  a.set_label(0, 1);
  a.set_label(1, 1);
  a.set_label(2, 2);
  a.set_label(3, 2);
  return a;
}

}  // namespace

TEST_CASE("postprocess") {
  SUBCASE("all-zero maps pass through flagged") {
    const auto p = metrics::postprocess(vol::Volume({5, 5, 5}, {1, 1, 1}), metrics::PostprocessConfig{});
    CHECK(p.degenerate);
    CHECK(p.map.max() == 0.0);
  }
  SUBCASE("cutoff keeps exactly the top nearest-rank voxels") {
    vol::Volume h({10, 10, 1}, {1, 1, 1});
    std::vector<std::size_t> order(100);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), std::mt19937_64(3));
    for (std::size_t i = 0; i < 100; ++i) h[order[i]] = static_cast<double>(i + 1);
    for (double cut : {99.0, 95.0, 80.0, 0.0}) {
      const auto p = metrics::postprocess(h, plain(cut));
      const double scale = oracle::percentile(h.values(), 99.0);
      std::vector<double> scaled;
      for (double v : h.values()) scaled.push_back(v / scale);
      const double thr = oracle::percentile(scaled, cut);
      for (std::size_t i = 0; i < 100; ++i) {
        const double want = scaled[i] < thr ? 0.0 : std::min(scaled[i], 1.0);
        CHECK(p.map[i] == doctest::Approx(want).epsilon(1e-14));
      }
    }
    std::size_t kept = 0;
    const auto top = metrics::postprocess(h, plain(99.0));
    for (double v : top.map.values()) kept += v > 0;
    CHECK(kept == 2);
  }
  SUBCASE("self-normalisation, rectification and argmax") {
    auto h = gtx::testing::random_volume({6, 6, 6}, 5);
    const auto a = metrics::postprocess(h, plain(0.0));
    CHECK(a.map.max() == 1.0);
    CHECK(a.map.min() >= 0.0);
    std::size_t arg = 0;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (std::abs(h[i]) > std::abs(h[arg])) arg = i;
    CHECK(a.map[arg] == a.map.max());
    auto cfg = plain(0.0);
    cfg.rectify = metrics::Rectify::PositivePart;
    const auto b = metrics::postprocess(h, cfg);
    for (std::size_t i = 0; i < h.size(); ++i)
      if (h[i] <= 0) CHECK(b.map[i] == 0.0);
    CHECK(metrics::postprocess(h, metrics::PostprocessConfig{}).map.min() >= 0.0);
  }
  SUBCASE("validation") {
    auto bad = plain(101.0);
    CHECK_THROWS_AS(metrics::postprocess(vol::Volume({2, 2, 2}, {1, 1, 1}), bad), ConfigError);
    vol::Volume h({2, 2, 2}, {1, 1, 1});
    h[3] = std::nan("");
    CHECK_THROWS_AS(metrics::postprocess(h, plain(0)), NumericError);
    CHECK(metrics::rectify_from_string(metrics::to_string(metrics::Rectify::PositivePart)) ==
          metrics::Rectify::PositivePart);
    CHECK_THROWS_AS(metrics::rectify_from_string("square"), ConfigError);
  }
}

TEST_CASE("relevance mass accuracy") {
  const vol::Dims d{8, 8, 8};
  const auto gt = box(d, 2, 4, 2, 5, 3, 4);
  vol::Volume h(d, {1, 1, 1});
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = gt[i] ? 2.0 : 0.0;
  CHECK(metrics::rma(h, gt, 0.0).value == 1.0);
  vol::Volume out(d, {1, 1, 1});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gt[i] ? 0.0 : 1.0;
  CHECK(metrics::rma(out, gt, 0.0).value == 0.0);
  const vol::Volume uniform(d, {1, 1, 1}, 1.0);
  for (double r : {0.0, 1.0, 1.5, 2.0}) {
    const auto dm = oracle::dilate(gt, r);
    CHECK(metrics::rma(uniform, gt, r).value ==
          doctest::Approx(static_cast<double>(dm.count()) / static_cast<double>(d.count())).epsilon(1e-14));
  }
  const auto z = metrics::rma(vol::Volume(d, {1, 1, 1}), gt, 2.0);
  CHECK(z.degenerate);
  CHECK(std::isnan(z.value));
  const auto rep = oracle::rma_scale_invariance(1000, 7);
  CHECK(rep.cases == 1000);
  CHECK(rep.failures == 0);
}

TEST_CASE("region scores and ranking") {
  std::mt19937_64 rng(9);
  const auto atlas = oracle::random_atlas({8, 8, 8}, 6, rng);
  SUBCASE("indicator map ranks its region first") {
    for (int r = 1; r <= 6; ++r) {
      vol::Volume h(atlas.dims(), atlas.spacing());
      for (std::size_t i = 0; i < h.size(); ++i) h[i] = atlas.label(i) == r;
      const auto rows = metrics::region_scores(h, atlas);
      CHECK(rows.front().region_id == r);
      CHECK(metrics::tpr_hit(rows, r, 1));
    }
  }
  SUBCASE("all-zero map ranks by id") {
    const auto rows = metrics::region_scores(vol::Volume(atlas.dims(), atlas.spacing()), atlas);
    REQUIRE(rows.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(rows[i].region_id == static_cast<int>(i + 1));
      CHECK(rows[i].rank == i + 1);
      CHECK(rows[i].score == 0.0);
    }
  }
  SUBCASE("hand-worked two-region case") {
    const auto a = two_region_atlas();
    vol::Volume h({4, 1, 1}, {1, 1, 1}, std::vector<double>{0.1, 0.4, 0.9, 0.2});
    const auto rows = metrics::region_scores(h, a);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].region_id == 2);
    CHECK(rows[0].score == 0.9);
    CHECK(rows[1].region_id == 1);
    CHECK(rows[1].score == 0.4);
    CHECK_FALSE(metrics::tpr_hit(rows, 1, 1));
    CHECK(metrics::tpr_hit(rows, 1, 2));
    CHECK_THROWS_AS(metrics::tpr_hit(rows, 7), ConfigError);
  }
  SUBCASE("bilateral pairs merge keeping the larger score") {
    vol::Atlas a({6, 1, 1}, {1, 1, 1});
    a.add_region(1, {"hip_L", vol::Laterality::Left, 4});
    a.add_region(2, {"hip_R", vol::Laterality::Right, 4});
    a.add_region(3, {"mid"});
    a.add_region(4, {"ghost"});
    for (std::size_t i = 0; i < 6; ++i) a.set_label(i, static_cast<std::int32_t>(i / 2 + 1));
    const vol::Volume h({6, 1, 1}, {1, 1, 1}, std::vector<double>{0.1, 0.2, 0.7, 0.3, 0.5, 0.5});
    const auto rows = metrics::region_scores(h, a);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].region_id == 1);
    CHECK(rows[0].name == "hip");
    CHECK(rows[0].members == std::vector<int>{1, 2});
    CHECK(rows[0].score == 0.7);
    CHECK(metrics::tpr_hit(rows, 2, 1));
    CHECK(rows[1].region_id == 3);
  }
  SUBCASE("rank 4 misses the top 3") {
    vol::Volume h(atlas.dims(), atlas.spacing());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = 7.0 - atlas.label(i);
    const auto rows = metrics::region_scores(h, atlas);
    CHECK(metrics::tpr_hit(rows, 3, 3));
    CHECK_FALSE(metrics::tpr_hit(rows, 4, 3));
  }
  SUBCASE("monotone transforms leave rankings unchanged") {
    const auto rep = oracle::rank_monotone_invariance(1000, 11);
    CHECK(rep.cases == 1000);
    CHECK(rep.failures == 0);
  }
}

TEST_CASE("false-positive flag") {
  const vol::Dims d{10, 10, 10};
  const auto gt = box(d, 4, 6, 4, 6, 4, 6);
  vol::Volume h(d, {1, 1, 1});
  const auto dil = oracle::dilate(gt, 2.0);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = dil[i] ? 1.0 + 0.01 * static_cast<double>(i % 7) : 0.0;
  CHECK_FALSE(metrics::fpr_flag(h, gt, 2.0).flag);
  std::size_t outside = 0;
  while (dil[outside]) ++outside;
  h[outside] = 5.0;
  CHECK(metrics::fpr_flag(h, gt, 2.0).flag);
  const auto zero = metrics::fpr_flag(vol::Volume(d, {1, 1, 1}), gt, 2.0);
  CHECK(zero.degenerate);
  CHECK_FALSE(zero.flag);
  CHECK_THROWS_AS(metrics::fpr_flag(h, vol::RegionMask(d, {1, 1, 1}), 2.0), ConfigError);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t flagged = 0;
  for (int c = 0; c < 200; ++c) {
    vol::Volume r(d, {1, 1, 1});
    for (auto& v : r.values()) v = u(rng) < 0.9 ? 0.0 : u(rng);
    for (std::size_t i = 0; i < r.size(); ++i)
      if (gt[i]) r[i] = 0.5 + u(rng);
    const double dm = 1.0 + c % 3;
    const bool want = oracle::fpr_flag(r, gt, dm);
    CHECK(metrics::fpr_flag(r, gt, dm).flag == want);
    flagged += want;
  }
  CHECK(flagged > 0);
  CHECK(flagged < 200);

  for (double d1 : {0.0, 1.0, 2.0, 3.0})
    for (double d2 : {d1 + 1.0, d1 + 2.5}) CHECK(metrics::fpr_candidates(gt, d2).subset_of(metrics::fpr_candidates(gt, d1)));
}

TEST_CASE("top-k overlap") {
  std::vector<metrics::RegionScoreRow> rows;
  for (int i = 1; i <= 10; ++i) rows.push_back({i, {i}, "r", 1.0 / i, static_cast<std::size_t>(i)});
  CHECK(metrics::overlap_topk(rows, {1, 2, 3}) == 1.0);
  CHECK(metrics::overlap_topk(rows, {8, 9, 10}) == 0.0);
  CHECK(metrics::overlap_topk(rows, {1, 9, 10}) == doctest::Approx(1.0 / 3));
  CHECK(metrics::overlap_topk(rows, {1, 9}, 5) == doctest::Approx(0.2));
  CHECK_THROWS_AS(metrics::overlap_topk(rows, {1}, 11), ConfigError);
  CHECK_THROWS_AS(metrics::overlap_topk(rows, {}), ConfigError);

  std::mt19937_64 rng(17);
  const std::set<int> ref{2, 5, 7};
  const std::size_t n = 10000;
  double s = 0, s2 = 0;
  for (std::size_t t = 0; t < n; ++t) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const double o = metrics::overlap_topk(rows, ref);
    s += o;
    s2 += o * o;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 0.3) < 3 * se);
}

TEST_CASE("aggregation and score files") {
  const double nan = std::nan("");
  std::vector<metrics::SubjectScore> rows{
      {"t", "m", "s2", 0.5, 1, 0, nan, false},
      {"t", "m", "s1", 0.3, 0, 1, nan, false},
      {"t", "m", "s3", nan, nan, nan, nan, true},
      {"t", "m", "s4", 0.7, 1, 0, nan, false},
      {"u", "m", "s1", 0.1, 0, 0, 0.5, false},
  };
  const auto agg = metrics::aggregate(rows);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].task == "t");
  CHECK(agg[0].n == 3);
  CHECK(agg[0].n_degenerate == 1);
  CHECK(agg[0].rma_mean == doctest::Approx(0.5));
  CHECK(agg[0].rma_sd == doctest::Approx(std::sqrt(0.08 / 3)));
  CHECK(agg[0].tpr == doctest::Approx(2.0 / 3));
  CHECK(agg[0].fpr == doctest::Approx(1.0 / 3));
  CHECK(std::isnan(agg[0].overlap_mean));
  CHECK(agg[1].overlap_mean == 0.5);
  CHECK(agg[1].rma_sd == 0.0);

  const auto dir = gtx::testing::temp_dir("metrics");
  metrics::write_scores(dir / "s.csv", rows);
  const auto back = metrics::read_scores(dir / "s.csv");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].subject_id == rows[i].subject_id);
    CHECK(back[i].degenerate == rows[i].degenerate);
    CHECK((std::isnan(back[i].rma) ? std::isnan(rows[i].rma) : back[i].rma == rows[i].rma));
  }
  metrics::write_aggregate_table(dir / "a.csv", agg, metrics::Stat::RmaMean);
  const auto t = csv::Table::read(dir / "a.csv");
  CHECK(t.header() == csv::Row{"task", "m"});
  CHECK(t.rows().size() == 2);
}

TEST_CASE("handcrafted maps match the brute-force oracles") { CHECK(oracle::handcrafted_mismatches(300, 19) == 0); }
