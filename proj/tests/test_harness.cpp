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

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/io.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gtx;
namespace fs = std::filesystem;

namespace {

const char* kSmoke = R"(
[run]
id = "tiny"
[stage]
names = ["localized", "artificial_disease", "lesion", "plausibility"]
targets = ["mean_intensity_nucleus_L", "mean_intensity_region5"]
[cohort]
n_subjects = 80
dims = [12, 12, 12]
spacing_mm = [8.0, 8.0, 8.0]
n_regions = 6
[correction]
grid = [0, 1, 2]
n_perm = 10
[disease]
pairs = [["mean_intensity_nucleus_L", "mean_intensity_region5"]]
[plausibility]
regions = ["region5", "region6"]
[train]
steps = 12
widths = [4, 4, 4]
[methods]
names = ["Gradient", "SmoothGrad", "GradCAM", "DeepLift", "LRP_EpsilonPlus"]
smoothgrad_n = 2
[metrics]
n_explain = 2
[seeds]
values = [1, 2]
[report]
groups = { loc = ["mean_intensity_nucleus_L", "mean_intensity_region5"], one = ["lesion_load"] }
)";

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<fs::path> score_csvs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") out.push_back(e.path().filename());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("configuration parsing") {
  const auto cfg = harness::parse_config(kSmoke);
  CHECK(cfg.run_id == "tiny");
  CHECK(cfg.stages.size() == 4);
  CHECK(cfg.cohort.dims == vol::Dims{12, 12, 12});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(cfg.methods.names.size() == 5);
  CHECK(harness::resolve_methods(cfg).size() == 5);

  SUBCASE("round trips through TOML and the manifest form") {
    const auto text = harness::to_toml(cfg);
    CHECK(harness::to_toml(harness::parse_config(text)) == text);
    const std::string manifest = "{\"config_toml\": " + nlohmann::json(text).dump() + "}";
    CHECK(harness::to_toml(harness::parse_config(manifest)) == text);
  }
  SUBCASE("errors") {
    const std::string base = kSmoke;
    auto with = [&](const std::string& from, const std::string& to) {
      std::string s = base;
      s.replace(s.find(from), from.size(), to);
      return s;
    };
    CHECK_THROWS_AS(harness::parse_config(base + "[cohort2]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(harness::parse_config(with("n_regions = 6", "n_regions = 6\ncolour = 3")), ConfigError);
    CHECK_THROWS_AS(harness::parse_config(with("\"lesion\",", "\"lesions\",")), ConfigError);
    CHECK_THROWS_AS(harness::parse_config(with("mean_intensity_region5\"]\n[cohort]", "mean_intensity_region9\"]\n[cohort]")),
                    ConfigError);
    CHECK_THROWS_AS(harness::parse_config(with("n_perm = 10", "n_perm = \"ten\"")), ConfigError);
    CHECK_THROWS_AS(harness::parse_config(with("\"GradCAM\"", "\"Saliency\"")), ConfigError);
    CHECK_THROWS_AS(harness::parse_config(with("values = [1, 2]", "values = []")), ConfigError);
    CHECK_THROWS_AS(harness::parse_config("[run\nid="), ConfigError);
    CHECK_THROWS_AS(harness::load_config("/nonexistent/x.toml"), ConfigError);
  }
}

TEST_CASE("artificial disease labels match a brute-force labelling") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0, 1);
  for (int tied = 0; tied < 2; ++tied) {
    const std::size_t N = 100000;
    std::vector<double> c1(N), c2(N);
    for (std::size_t i = 0; i < N; ++i) {
      c1[i] = n(rng);
      c2[i] = 0.3 * c1[i] + n(rng);
      if (tied) c1[i] = std::round(c1[i] * 4) / 4, c2[i] = std::round(c2[i] * 4) / 4;
    }
    const auto got = harness::artificial_disease_labels(c1, c2, 0.6, 0.4);
    const auto want = oracle::disease_labels(c1, c2, 0.6, 0.4);
    std::size_t mismatches = 0, patients = 0, excluded = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const int g = std::isnan(got.labels[i]) ? -1 : static_cast<int>(got.labels[i]);
      mismatches += g != want[i];
      patients += want[i] == 1;
      excluded += want[i] == -1;
    }
    CHECK(mismatches == 0);
    CHECK(got.n_patients == patients);
    CHECK(got.excluded.size() == excluded);
    CHECK(excluded > 0);
  }
  const std::vector<double> flat(10, 1.0);
  CHECK_THROWS_AS(harness::artificial_disease_labels(flat, flat), NumericError);
  CHECK_THROWS_AS(harness::artificial_disease_labels(flat, std::vector<double>(3, 1.0)), ShapeError);
}

TEST_CASE("row-wise min-max scaling") {
  const auto s = harness::minmax_rows({{1.0, 3.0}, {2.0, 2.0}});
  CHECK(s.values == std::vector<std::vector<double>>{{0.0, 1.0}, {0.0, 0.0}});
  CHECK(s.flat == std::vector<bool>{false, true});
  const auto t = harness::minmax_rows({{5.0, -1.0, 2.0}});
  CHECK(t.values[0] == std::vector<double>{1.0, 0.0, 0.5});
}

TEST_CASE("slice rendering") {
  const auto dir = gtx::testing::temp_dir("render");
  vol::Volume h({6, 5, 4}, {1, 1, 1});
  h.at(2, 2, 3) = 1.0;
  vol::RegionMask m(h.dims(), h.spacing());
  for (std::size_t x = 0; x < 4; ++x) m.set(h.index(x, 1, 1));
  harness::render_heatmap(h, &m, dir / "a");
  harness::render_heatmap(h, nullptr, dir / "b");
  CHECK(fs::file_size(dir / "a.png") > 0);
  const auto pgm = slurp(dir / "b.pgm");
  CHECK(pgm.rfind("P", 0) == 0);
  CHECK_THROWS_AS(harness::render_heatmap(h, nullptr, dir / "c", 9), ConfigError);
}

TEST_CASE("end-to-end pipeline on a tiny cohort") {
  const auto cfg = harness::parse_config(kSmoke);
  const auto root = gtx::testing::temp_dir("pipeline");
  const auto paths = harness::run_paths(cfg, root / "a");
  CHECK(paths.root == root / "a" / "tiny");

  CHECK_THROWS_AS(harness::train_models(cfg, paths), IoError);
  harness::pipeline(cfg, paths);
  for (const char* f : {"manifest.json", "scores/rma_mean.csv", "scores/tpr.csv", "scores/fpr.csv",
                        "scores/overlap_mean.csv", "scores/localization.csv", "scores/training.csv",
                        "scores/provenance.csv", "report/group_rma.csv", "report/rma_minmax.csv"})
    CHECK_MESSAGE(fs::exists(paths.root / f), f);

  const auto tasks = harness::read_tasks(paths.tasks());
  CHECK(tasks.size() == 5);

  SUBCASE("evaluate reproduces the explain scores") {
    std::vector<std::string> before;
    for (const auto& t : tasks)
      for (auto s : cfg.seeds) before.push_back(slurp(harness::score_file(paths, t.name, s)));
    const auto rescored = harness::evaluate(cfg, paths);
    CHECK_FALSE(rescored.empty());
    std::size_t i = 0;
    for (const auto& t : tasks)
      for (auto s : cfg.seeds) CHECK(slurp(harness::score_file(paths, t.name, s)) == before[i++]);
  }

  SUBCASE("single-task groups equal the task means") {
    const auto g = csv::Table::read(paths.report() / "group_rma.csv");
    const auto r = csv::Table::read(paths.scores() / "rma_mean.csv");
    const csv::Row* one = nullptr;
    for (const auto& row : g.rows())
      if (row[0] == "one") one = &row;
    REQUIRE(one != nullptr);
    CHECK((*one)[1] == "1");
    for (const auto& row : r.rows())
      if (row[0] == "lesion_load")
        for (std::size_t c = 1; c < r.header().size(); ++c) CHECK((*one)[g.column(r.header()[c])] == row[c]);
  }

  SUBCASE("a re-run gives byte-identical scores") {
    const auto again = harness::run_paths(cfg, root / "b");
    harness::pipeline(cfg, again);
    const auto files = score_csvs(paths.scores());
    CHECK(files == score_csvs(again.scores()));
    for (const auto& f : files) CHECK_MESSAGE(slurp(paths.scores() / f) == slurp(again.scores() / f), f.string());
    CHECK(slurp(paths.report() / "group_rma.csv") == slurp(again.report() / "group_rma.csv"));
  }
}
