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
#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gtxai/gtxai.h"

namespace {

constexpr std::pair<const char*, const char*> kCommands[] = {
    {"generate", "Synthesise the cohorts"},
    {"correct", "Build corrected targets and task definitions"},
    {"train", "Train one model per task and seed"},
    {"explain", "Compute and score heatmaps"},
    {"evaluate", "Re-score stored heatmaps"},
    {"report", "Aggregate tables and renders"},
    {"pipeline", "Run every step and write the run manifest"},
    {"render", "Render heatmap slices"}};

struct Options {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out = "out";
  std::vector<std::string> stages;
  std::vector<std::string> methods;
  std::string heatmap, mask;
  long slice = -1;
};

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

int fail(gtx_status st) {
  std::cerr << "gtxai: " << gtx_last_error() << "\n";
  return static_cast<int>(st);
}

int run(const std::string& command, const Options& o) {
  if (command == "render" && !o.heatmap.empty()) {
    const auto st = gtx_render(o.heatmap.c_str(), o.mask.empty() ? nullptr : o.mask.c_str(), o.out.c_str(), o.slice);
    return st == GTX_OK ? 0 : fail(st);
  }
  if (o.config.empty()) {
    std::cerr << "gtxai: " << command << " needs a config file\n";
    return GTX_ERR_CONFIG;
  }
  gtx_config* raw = nullptr;
  if (auto st = gtx_config_load(o.config.c_str(), &raw); st != GTX_OK) return fail(st);
  std::unique_ptr<gtx_config, decltype(&gtx_config_free)> cfg(raw, gtx_config_free);
  if (!o.seeds.empty())
    if (auto st = gtx_config_set_seeds(cfg.get(), o.seeds.data(), o.seeds.size()); st != GTX_OK) return fail(st);
  if (!o.stages.empty())
    if (auto st = gtx_config_set_stages(cfg.get(), join(o.stages).c_str()); st != GTX_OK) return fail(st);
  if (!o.methods.empty())
    if (auto st = gtx_config_set_methods(cfg.get(), join(o.methods).c_str()); st != GTX_OK) return fail(st);
  if (auto st = gtx_run(cfg.get(), command.c_str(), o.out.c_str()); st != GTX_OK) return fail(st);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ground-truth benchmarks for volumetric attribution methods"};
  app.set_version_flag("--version", gtx_version());
  app.require_subcommand(1);
  Options o;
  for (const auto& [name, help] : kCommands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", o.config, "Experiment config (TOML) or run manifest");
    sub->add_option("--seed", o.seeds, "Replicate seeds, replacing the config list")->delimiter(',');
    sub->add_option("--out", o.out, "Output root; runs go to <out>/<run id>")->capture_default_str();
    sub->add_option("--stage", o.stages, "Stages to run")->delimiter(',');
    sub->add_option("--method", o.methods, "Attribution methods")->delimiter(',');
    if (std::string(name) == "render") {
      sub->add_option("--heatmap", o.heatmap, "Render a single heatmap volume to <out>.png/.pgm");
      sub->add_option("--mask", o.mask, "Mask outline for --heatmap");
      sub->add_option("--slice", o.slice, "Axial slice; default picks one");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : GTX_ERR_CONFIG;
  }
  return run(app.get_subcommands().front()->get_name(), o);
}
