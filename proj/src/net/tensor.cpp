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
#include "net/tensor.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace gtx::net {

Tensor stack(std::span<const vol::Volume> volumes) {
  if (volumes.empty()) throw ShapeError("stack: empty batch");
  const auto& d = volumes[0].dims();
  Tensor t(volumes.size(), 1, {d.nz, d.ny, d.nx});
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    vol::require_same_dims(d, volumes[i].dims(), "stack");
    std::copy(volumes[i].values().begin(), volumes[i].values().end(), t.sample(i));
  }
  return t;
}

Tensor stack_one(const vol::Volume& v) { return stack(std::span<const vol::Volume>(&v, 1)); }

vol::Volume unstack(const Tensor& t, std::size_t sample, const vol::Spacing& spacing) {
  if (t.c != 1) throw ShapeError("unstack: tensor has more than one channel");
  const double* p = t.sample(sample);
  return vol::Volume({t.s.w, t.s.h, t.s.d}, spacing, std::vector<double>(p, p + t.s.count()));
}

}  // namespace gtx::net
