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


// Acceptance run: one PASS/FAIL line per criterion. Arguments select a subset
// (e.g. "AC-1 AC-8"); the exit code is non-zero when any selected criterion
// fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attribution/attribution.hpp"
#include "cidp/masking.hpp"
#include "core/csv.hpp"
#include "core/parallel.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "net/network.hpp"
#include "oracles.hpp"
#include "stats/permuted_ols.hpp"
#include "test_util.hpp"

using namespace gtx;
namespace fs = std::filesystem;
using gtx::testing::random_volume;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path kOut = fs::path(GTXAI_ACCEPTANCE_OUT);
const fs::path kDesk = fs::path(GTXAI_CONFIG_DIR) / "desk.toml";

net::Network bias_free_resnet(std::uint64_t seed) {
  auto spec = net::tiny_resnet({8, 8, 8}, net::Task::Regression, {4, 6, 6});
  for (auto& l : spec.layers) l.bias = false;
  auto n = net::init(spec, seed);
  gtx::testing::randomize_batchnorm(n, seed + 1, true);
  return n;
}

double max_diff(const vol::Volume& a, const vol::Volume& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome ac1() {
  const auto t0 = Clock::now();
  using net::LayerType;
  net::NetSpec s;
  s.input = {8, 8, 8};
  s.layers.push_back({LayerType::Conv, 1, 3, 3, 2, false});
  s.layers.push_back({LayerType::BatchNorm, 3, 3});
  s.layers.push_back({LayerType::ReLU});
  s.layers.push_back({LayerType::ResBlock, 3, 3, 3, 1});
  s.layers.push_back({LayerType::ResBlock, 3, 4, 3, 2});
  s.layers.push_back({LayerType::GlobalAvgPool});
  s.layers.push_back({LayerType::Dense, 4, 1, 1, 1, true});
  auto n = net::init(s, 101);
  gtx::testing::randomize_batchnorm(n, 102, false);
  const auto input = net::stack(std::vector<vol::Volume>{random_volume({8, 8, 8}, 103), random_volume({8, 8, 8}, 104)});
  const double h = 1e-3;
  auto eval = [&](const net::Network& m, const net::Tensor& t, std::vector<char>& pattern) {
    net::Cache c;
    const auto y = net::forward(m, t, net::Mode::Eval, &c);
    pattern.clear();
    for (std::size_t i = 0; i < m.nodes().size(); ++i)
      if (m.nodes()[i].kind == net::NodeKind::ReLU)
        for (double v : c.out[i].v) pattern.push_back(v > 0);
    return 0.7 * y.v[0] - 1.3 * y.v[1];
  };
  net::Cache cache;
  net::forward(n, input, net::Mode::Eval, &cache);
  net::Tensor d(2, 1, {1, 1, 1});
  d.v = {0.7, -1.3};
  const auto g = net::backward(n, cache, d);
  double worst = 0;
  std::size_t checked = 0, kinks = 0;
  std::vector<char> pp, pm;
  auto compare = [&](double analytic, double lp, double lm) {
    if (pp != pm) {
      ++kinks;
      return;
    }
    ++checked;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6}));
  };
  for (std::size_t k = 0; k < n.params().size(); ++k) {
    auto p = n, m = n;
    p.params()[k] += h;
    m.params()[k] -= h;
    const double lp = eval(p, input, pp), lm = eval(m, input, pm);
    compare(g.params[k], lp, lm);
  }
  for (std::size_t i = 0; i < input.v.size(); ++i) {
    auto p = input, m = input;
    p.v[i] += h;
    m.v[i] -= h;
    const double lp = eval(n, p, pp), lm = eval(n, m, pm);
    compare(g.input.v[i], lp, lm);
  }
  const double t = seconds_since(t0);
  return {worst < 1e-6 && t < 60.0 && kinks * 50 < checked,
          fmt("max_rel_err=%.3g checked=%zu kink_skipped=%zu time=%.1fs", worst, checked, kinks, t)};
}

Outcome ac2() {
  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto n = bias_free_resnet(200 + 2 * s);
    const auto x = random_volume({8, 8, 8}, 300 + s);
    const double y = gtx::testing::scalar_out(n, x);
    const auto r = attr::lrp(n, x, attr::LRPComposite::uniform({attr::Rule::Epsilon, 1e-9}));
    worst = std::max(worst, std::abs(r.sum() - y) / std::abs(y));
  }
  return {worst < 1e-3, fmt("max_rel_conservation_err=%.3g over 20 inputs", worst)};
}

Outcome ac3() {
  double zero = 0, plus = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto n = net::fold_batchnorm(bias_free_resnet(400 + 2 * s));
    const auto x = random_volume({8, 8, 8}, 500 + s);
    const auto ixg = attr::explain(n, x, attr::parse_method("InputXGradient")).map;
    zero = std::max(zero, max_diff(ixg, attr::lrp(n, x, attr::LRPComposite::uniform({attr::Rule::Zero}))));
    plus = std::max(plus, max_diff(attr::excitation_backprop(n, x),
                                   attr::lrp(n, x, attr::LRPComposite::uniform({attr::Rule::ZPlus}))));
  }
  return {zero < 1e-5 && plus < 1e-6, fmt("ixg_vs_lrp_zero=%.3g excitation_vs_zplus=%.3g", zero, plus)};
}

Outcome ac4() {
  auto n = net::init(net::tiny_resnet({8, 8, 8}, net::Task::Regression, {4, 6, 6}), 600);
  gtx::testing::randomize_batchnorm(n, 601, false);
  const auto f = net::fold_batchnorm(n);
  double worst = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_volume({8, 8, 8}, 700 + s);
    const double a = gtx::testing::scalar_out(n, x), b = gtx::testing::scalar_out(f, x);
    worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-12));
  }
  const auto left = f.count(net::NodeKind::BatchNorm);
  return {worst < 1e-5 && left == 0 && n.count(net::NodeKind::BatchNorm) > 0,
          fmt("max_rel_diff=%.3g bn_before=%zu bn_after=%zu", worst, n.count(net::NodeKind::BatchNorm), left)};
}

Outcome ac5() {
  double worst = 0, ledger = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto n = net::init(net::tiny_resnet({8, 8, 8}, net::Task::Regression, {4, 6, 6}), 800 + s);
    gtx::testing::randomize_batchnorm(n, 850 + s, false);
    const auto x = random_volume({8, 8, 8}, 900 + s), b = random_volume({8, 8, 8}, 950 + s, 0.5);
    const auto r = attr::deeplift_rescale(n, x, b);
    const double delta = gtx::testing::scalar_out(n, x) - gtx::testing::scalar_out(n, b);
    worst = std::max(worst, std::abs(r.map.sum() + r.ledger - delta));
    ledger = std::max(ledger, std::abs(r.ledger));
  }
  return {worst < 1e-8, fmt("max_abs_err=%.3g max_|ledger|=%.3g over 20 nets", worst, ledger)};
}

harness::ExperimentConfig ac6_config() {
  harness::ExperimentConfig c;
  c.run_id = "ac6";
  c.stages = {harness::Stage::Localized};
  c.cohort.n_subjects = 512;
  c.cohort.dims = {16, 16, 16};
  c.cohort.spacing_mm = {6.0, 6.0, 6.0};
  c.cohort.n_regions = 6;
  c.correction.grid = {0, 1, 2, 3, 4, 5};
  c.targets.clear();
  for (const auto& d : synth::idp_descriptors(harness::cohort_spec(c.cohort)))
    if (d.kind == synth::IdpKind::MeanIntensity) c.targets.push_back(d.name);
  c.report.groups.clear();
  return c;
}

Outcome ac6() {
  const auto t0 = Clock::now();
  const auto cfg = ac6_config();
  const auto paths = harness::run_paths(cfg, kOut);
  harness::generate(cfg, paths);
  harness::correct(cfg, paths);
  const double t = seconds_since(t0);
  const auto table = csv::Table::read(paths.scores() / "localization.csv");
  const auto c_task = table.column("task"), c_k = table.column("k"), c_score = table.column("score"),
             c_sel = table.column("selected");
  std::size_t good = 0;
  std::string per;
  for (const auto& target : cfg.targets) {
    double k0 = NAN, sel = NAN;
    std::string k_sel;
    for (const auto& r : table.rows()) {
      if (r[c_task] != target) continue;
      if (r[c_k] == "0") k0 = std::stod(r[c_score]);
      if (r[c_sel] == "1") sel = std::stod(r[c_score]), k_sel = r[c_k];
    }
    const bool ok = k0 < 0.5 && sel >= 0.9;
    good += ok;
    per += fmt(" %s:k0=%.2f,k%s=%.2f", target.c_str() + 15, k0, k_sel.c_str(), sel);
  }
  return {good >= 5 && t < 600.0, fmt("targets_ok=%zu/6 time=%.0fs", good, t) + per};
}

Outcome ac8() {
  const auto hand = oracle::handcrafted_mismatches(500, 31);
  const auto scale = oracle::rma_scale_invariance(1000, 32);
  const auto mono = oracle::rank_monotone_invariance(1000, 33);
  return {hand == 0 && scale.failures == 0 && mono.failures == 0,
          fmt("oracle_mismatches=%zu/500 scale_failures=%zu/%zu monotone_failures=%zu/%zu", hand, scale.failures,
              scale.cases, mono.failures, mono.cases)};
}

Outcome ac9() {
  auto rng = make_stream(41, 0);
  std::normal_distribution<double> n(0, 1);
  const std::size_t N = 100000;
  std::size_t mismatches = 0, excluded = 0, patients = 0;
  for (int rep = 0; rep < 2; ++rep) {
    std::vector<double> c1(N), c2(N);
    for (std::size_t i = 0; i < N; ++i) {
      c1[i] = n(rng);
      c2[i] = 0.4 * c1[i] + n(rng);
      if (rep == 1) c1[i] = std::round(c1[i] * 5) / 5, c2[i] = std::round(c2[i] * 5) / 5;
    }
    const auto got = harness::artificial_disease_labels(c1, c2, 0.6, 0.4);
    const auto want = oracle::disease_labels(c1, c2, 0.6, 0.4);
    for (std::size_t i = 0; i < N; ++i) {
      const int g = std::isnan(got.labels[i]) ? -1 : static_cast<int>(got.labels[i]);
      mismatches += g != want[i];
      excluded += want[i] == -1;
      patients += want[i] == 1;
    }
  }
  return {mismatches == 0, fmt("mismatches=%zu n=2x%zu (continuous, tied) excluded=%zu patients=%zu", mismatches, N,
                               excluded, patients)};
}

double pearson_t(const std::vector<double>& x, const std::vector<double>& y) {
  const double r = gtx::testing::pearson(x, y);
  const double n = static_cast<double>(x.size());
  return r * std::sqrt((n - 2.0) / (1.0 - r * r));
}

std::vector<vol::Volume> as_voxels(const std::vector<std::vector<double>>& per_voxel) {
  std::vector<vol::Volume> out;
  for (std::size_t s = 0; s < per_voxel.front().size(); ++s) {
    vol::Volume v({per_voxel.size(), 1, 1}, {1, 1, 1});
    for (std::size_t k = 0; k < per_voxel.size(); ++k) v[k] = per_voxel[k][s];
    out.push_back(v);
  }
  return out;
}

Outcome ac10() {
  auto rng = make_stream(51, 0);
  std::normal_distribution<double> n(0, 1);
  double t_err = 0;
  {
    stats::Design d;
    for (int i = 0; i < 50; ++i) d.contrast.push_back(n(rng));
    std::vector<std::vector<double>> ys(20, std::vector<double>(50));
    for (std::size_t k = 0; k < ys.size(); ++k)
      for (std::size_t i = 0; i < 50; ++i) ys[k][i] = 0.1 * static_cast<double>(k) * d.contrast[i] + n(rng);
    const auto s = stats::permuted_ols(d, as_voxels(ys), 20, 1);
    for (std::size_t k = 0; k < ys.size(); ++k) t_err = std::max(t_err, std::abs(s.t_values[k] - pearson_t(d.contrast, ys[k])));
  }
  std::size_t p_bad = 0;
  for (int rep = 0; rep < 10; ++rep) {
    stats::Design d;
    for (int i = 0; i < 5; ++i) d.contrast.push_back(n(rng));
    std::vector<std::vector<double>> ys(4, std::vector<double>(5));
    for (auto& y : ys)
      for (std::size_t i = 0; i < 5; ++i) y[i] = 0.8 * d.contrast[i] + n(rng);
    std::vector<stats::Permutation> perms;
    stats::Permutation p{0, 1, 2, 3, 4};
    while (std::next_permutation(p.begin(), p.end()) && perms.size() < 24) perms.push_back(p);
    const auto s = stats::permuted_ols(d, stats::VoxelData(as_voxels(ys)), perms);
    std::vector<double> null_max;
    for (const auto& q : perms) {
      std::vector<double> x(5);
      for (std::size_t i = 0; i < 5; ++i) x[i] = d.contrast[q[i]];
      double m = 0;
      for (const auto& y : ys) m = std::max(m, std::abs(pearson_t(x, y)));
      null_max.push_back(m);
    }
    for (std::size_t k = 0; k < ys.size(); ++k) {
      const double t = std::abs(pearson_t(d.contrast, ys[k]));
      double ge = 0;
      for (double m : null_max) ge += m >= t * (1 - 1e-12);
      p_bad += std::abs(s.fwe_p[k] - (1 + ge) / 25.0) > 1e-12;
    }
  }
  return {t_err < 1e-10 && p_bad == 0, fmt("max_t_err=%.3g fwe_mismatches=%zu/40 (n=5, 24 perms)", t_err, p_bad)};
}

// Shared state of the desk-scale criteria.
struct DeskRuns {
  harness::ExperimentConfig cfg;
  harness::RunPaths a, b;
  double seconds_a = 0, seconds_b = 0;
  bool ran = false;
};

DeskRuns& desk() {
  static DeskRuns d;
  if (!d.ran) {
    d.cfg = harness::load_config(kDesk);
    d.a = harness::run_paths(d.cfg, kOut / "desk_a");
    d.b = harness::run_paths(d.cfg, kOut / "desk_b");
    fs::remove_all(d.a.root);
    fs::remove_all(d.b.root);
    auto t0 = Clock::now();
    harness::pipeline(d.cfg, d.a);
    d.seconds_a = seconds_since(t0);
    std::printf("  desk pipeline run 1 finished in %.0f s\n", d.seconds_a);
    std::fflush(stdout);
    t0 = Clock::now();
    harness::pipeline(d.cfg, d.b);
    d.seconds_b = seconds_since(t0);
    std::printf("  desk pipeline run 2 finished in %.0f s\n", d.seconds_b);
    d.ran = true;
  }
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome ac7() {
  auto& d = desk();
  const auto cohort = synth::load_cohort(d.a.main_cohort());
  const auto tasks = harness::read_tasks(d.a.tasks());
  const auto& name = d.cfg.targets.front();
  const auto task = std::find_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.name == name; });
  if (task == tasks.end()) return {false, "task " + name + " missing from the desk run"};
  std::size_t good = 0;
  std::string per;
  for (std::uint64_t seed : d.cfg.seeds) {
    auto tc = d.cfg.train;
    tc.seed = seed;
    const auto r = cidp::masking_experiment(cohort, task->target, task->gt_regions, d.cfg.metrics.rma_dilation_mm, tc,
                                            d.cfg.widths);
    good += r.r2_full >= 0.5 && r.r2_masked <= 0.1;
    per += fmt(" seed%llu:full=%.3f,masked=%.3f", static_cast<unsigned long long>(seed), r.r2_full, r.r2_masked);
  }
  return {good >= 2, fmt("target=%s seeds_ok=%zu/%zu", name.c_str(), good, d.cfg.seeds.size()) + per};
}

Outcome ac11() {
  auto& d = desk();
  const auto t = csv::Table::read(d.a.scores() / "rma_mean.csv");
  std::map<std::string, double> mean;
  std::size_t n_targets = 0;
  for (const auto& row : t.rows()) {
    if (std::find(d.cfg.targets.begin(), d.cfg.targets.end(), row[0]) == d.cfg.targets.end()) continue;
    ++n_targets;
    for (std::size_t c = 1; c < t.header().size(); ++c) mean[t.header()[c]] += std::stod(row[c]);
  }
  for (auto& [k, v] : mean) v /= static_cast<double>(n_targets);
  const double sg = mean["SmoothGrad"];
  bool ok = n_targets >= 4 && mean.count("GradCAM") && sg >= mean["GradCAM"];
  std::string detail = fmt("targets=%zu seeds=%zu SmoothGrad=%.4f GradCAM=%.4f", n_targets, d.cfg.seeds.size(), sg,
                           mean["GradCAM"]);
  for (const char* c : {"LRP_EpsilonAlpha2Beta1", "LRP_EpsilonAlpha2Beta1Flat", "LRP_EpsilonPlus", "LRP_EpsilonPlusFlat"}) {
    ok = ok && mean.count(c) && sg >= mean[c];
    detail += fmt(" %s=%.4f", c + 4, mean[c]);
  }
  return {ok, detail};
}

Outcome ac12() {
  auto& d = desk();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(d.a.scores()))
    if (e.path().extension() == ".csv") files.push_back(e.path().filename());
  std::sort(files.begin(), files.end());
  std::size_t differ = 0, missing = 0;
  for (const auto& f : files) {
    if (!fs::exists(d.b.scores() / f)) ++missing;
    else differ += slurp(d.a.scores() / f) != slurp(d.b.scores() / f);
  }
  const double limit = 1800.0;
  return {differ == 0 && missing == 0 && !files.empty() && d.seconds_a < limit && d.seconds_b < limit,
          fmt("score_csvs=%zu differing=%zu missing=%zu run1=%.0fs run2=%.0fs workers=%zu", files.size(), differ,
              missing, d.seconds_a, d.seconds_b, worker_count())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"AC-1", ac1}, {"AC-2", ac2}, {"AC-3", ac3},  {"AC-4", ac4},   {"AC-5", ac5},   {"AC-6", ac6},
      {"AC-7", ac7}, {"AC-8", ac8}, {"AC-9", ac9},  {"AC-10", ac10}, {"AC-11", ac11}, {"AC-12", ac12}};
  std::set<std::string> pick(argv + 1, argv + argc);
  fs::create_directories(kOut);
  std::size_t failed = 0;
  for (const auto& [name, fn] : all) {
    if (!pick.empty() && !pick.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%-6s %s  %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
