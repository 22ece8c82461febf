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

// Attribution methods on a trained network. LRP, DeepLift and excitation
// backprop run on the batchnorm-folded network (folding happens internally).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/volume.hpp"
#include "net/network.hpp"

namespace gtx::attr {

enum class Rule { Zero, Epsilon, AlphaBeta, ZPlus, Flat };

struct RuleSpec {
  Rule rule = Rule::Epsilon;
  double eps = 1e-6;
  double alpha = 2.0, beta = 1.0;

  void validate() const;
};

struct LRPComposite {
  std::string name = "custom";
  RuleSpec first, middle, last;
  double junction_eps = 1e-6;  // stabilizer for residual-sum relevance splitting

  // EpsilonAlpha2Beta1, EpsilonAlpha2Beta1Flat, EpsilonPlus, EpsilonPlusFlat.
  static LRPComposite preset(const std::string& name, double eps = 1e-6);
  // Same rule everywhere; junctions use the rule's own stabilizer (none for Zero).
  static LRPComposite uniform(RuleSpec r);
};

enum class MethodKind {
  Gradient,
  InputXGradient,
  SmoothGrad,
  GuidedBackprop,
  ExcitationBackprop,
  GradCAM,
  GuidedGradCAM,
  DeepLift,
  LRP
};

struct Baseline {
  enum class Kind { Zero, TrainingMean, Custom } kind = Kind::Zero;
  vol::Volume volume;  // TrainingMean and Custom
};

struct Method {
  MethodKind kind = MethodKind::Gradient;
  double noise_level = 0.1;  // SmoothGrad
  std::size_t n_samples = 20;
  std::uint64_t seed = 0;
  std::string tap;  // GradCAM family; empty = last block
  Baseline baseline;
  LRPComposite composite;

  // Stable display name, e.g. "SmoothGrad", "GradCAM_block3", "LRP_EpsilonPlus".
  std::string name() const;
  std::string params_json() const;
  void validate() const;
};

// Parses names such as "Gradient", "SmoothGrad", "GradCAM", "GradCAM:block2",
// "GuidedGradCAM", "DeepLift", "LRP_EpsilonPlusFlat", "ExcitationBackprop".
Method parse_method(const std::string& name);
std::vector<std::string> all_method_names();

struct Heatmap {
  vol::Volume map;
  std::string method;
  std::string params;
  std::size_t target = 0;
  std::string net_hash;
  std::uint64_t seed = 0;
  double ledger = 0.0;  // DeepLift: contribution not carried by the multipliers
  double output = 0.0;  // target output at the explained input
};

Heatmap explain(const net::Network& net, const vol::Volume& x, const Method& m, std::size_t target = 0);

vol::Volume gradient(const net::Network& net, const vol::Volume& x, std::size_t target,
                     net::ReluMode mode = net::ReluMode::Standard);
vol::Volume smoothgrad(const net::Network& net, const vol::Volume& x, double noise_level, std::size_t n,
                       std::uint64_t seed, std::size_t target = 0);
vol::Volume gradcam(const net::Network& net, const vol::Volume& x, const std::string& tap, std::size_t target = 0);
// Tap-resolution map before upsampling.
vol::Volume gradcam_raw(const net::Network& net, const vol::Volume& x, const std::string& tap, std::size_t target = 0);

struct DeepLiftResult {
  vol::Volume map;
  double ledger = 0.0;
  double delta = 0.0;  // f(x) - f(baseline)
};
DeepLiftResult deeplift_rescale(const net::Network& net, const vol::Volume& x, const vol::Volume& baseline,
                                std::size_t target = 0);

// Layer-wise relevance propagation; net must be folded (or is folded here).
vol::Volume lrp(const net::Network& net, const vol::Volume& x, const LRPComposite& c, std::size_t target = 0);
// Independent edge-by-edge implementation of the z+ rule on every layer.
vol::Volume excitation_backprop(const net::Network& net, const vol::Volume& x, std::size_t target = 0);

// Volume in VLAB (f32 payload) plus <path>.json provenance sidecar.
void write_heatmap(const Heatmap& h, const std::filesystem::path& p);
Heatmap read_heatmap(const std::filesystem::path& p);

}  // namespace gtx::attr
