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

#include <cstddef>
#include <span>
#include <vector>

#include "core/volume.hpp"

namespace gtx::net {

struct Shape3 {
  std::size_t d = 1, h = 1, w = 1;

  std::size_t count() const { return d * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

// Batch of multi-channel feature maps, laid out [n][c][d][h][w].
struct Tensor {
  std::size_t n = 0, c = 0;
  Shape3 s;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, Shape3 s_, double fill = 0.0)
      : n(n_), c(c_), s(s_), v(n_ * c_ * s_.count(), fill) {}

  std::size_t per_sample() const { return c * s.count(); }
  double* sample(std::size_t i) { return v.data() + i * per_sample(); }
  const double* sample(std::size_t i) const { return v.data() + i * per_sample(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && s == o.s; }
};

// Volumes (all the same dims) stacked as a single-channel batch. Volume
// z/y/x map to tensor d/h/w.
Tensor stack(std::span<const vol::Volume> volumes);
Tensor stack_one(const vol::Volume& v);
vol::Volume unstack(const Tensor& t, std::size_t sample, const vol::Spacing& spacing);

}  // namespace gtx::net
