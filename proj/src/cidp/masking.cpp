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
#include "cidp/masking.hpp"

#include "core/error.hpp"

namespace gtx::cidp {

namespace {

double test_r2(const net::TrainResult& r, const net::Dataset& ds) {
  auto pred = net::predict(r.net, ds, r.split.test);
  for (auto& v : pred) v = v * r.target_sd + r.target_mean;
  std::vector<double> truth;
  for (std::size_t i : r.split.test) truth.push_back(ds.targets[i]);
  return net::r_squared(truth, pred);
}

}  // namespace

MaskingResult masking_experiment(const synth::Cohort& cohort, std::span<const double> target,
                                 const std::vector<int>& region_ids, double dilation_mm, const net::TrainConfig& cfg,
                                 const std::vector<std::size_t>& widths) {
  if (target.size() != cohort.subjects.size()) throw ShapeError("masking_experiment: target length differs from cohort");
  if (region_ids.empty()) throw ConfigError("masking_experiment: no regions to mask");
  const auto& d = cohort.spec.dims;
  const net::Shape3 shape{d.nz, d.ny, d.nx};
  const auto spec = net::tiny_resnet(shape, net::Task::Regression, widths);
  const auto split = net::make_split(cohort.subjects.size(), cfg);

  std::vector<vol::Volume> masked;
  masked.reserve(cohort.subjects.size());
  for (const auto& s : cohort.subjects) {
    vol::RegionMask m(d, cohort.spec.spacing_mm);
    for (int id : region_ids) m = m | s.region_mask(id);
    masked.push_back(vol::mask_zero(s.image, vol::dilate(m, dilation_mm)));
  }

  net::Dataset full, cut;
  full.targets = cut.targets = std::vector<double>(target.begin(), target.end());
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    full.inputs.push_back(&cohort.subjects[i].image);
    cut.inputs.push_back(&masked[i]);
  }
  MaskingResult out;
  const auto rf = net::train(net::init(spec, cfg.seed), full, cfg, split);
  out.r2_full = test_r2(rf, full);
  const auto rm = net::train(net::init(spec, cfg.seed), cut, cfg, split);
  out.r2_masked = test_r2(rm, cut);
  return out;
}

}  // namespace gtx::cidp
