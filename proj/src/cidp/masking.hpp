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

// Masking validation: a target whose signal is confined to a region becomes
// unpredictable once that region is removed from every input image.

#include <span>
#include <vector>

#include "net/train.hpp"
#include "synth/cohort.hpp"

namespace gtx::cidp {

struct MaskingResult {
  double r2_full = 0.0;
  double r2_masked = 0.0;
};

// Trains one network on full images and one on images with the realised
// masks of the given regions (dilated by dilation_mm) set to zero; both use
// the same initialisation and split. R^2 is measured on the test split.
MaskingResult masking_experiment(const synth::Cohort& cohort, std::span<const double> target,
                                 const std::vector<int>& region_ids, double dilation_mm, const net::TrainConfig& cfg,
                                 const std::vector<std::size_t>& widths = {8, 16, 16});

}  // namespace gtx::cidp
