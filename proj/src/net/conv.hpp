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

// Dense 2D/3D convolution kernels on one sample, built on im2col + GEMM.
// Weights are [out][in][kz][k][k]; zero padding k/2 (none along z in 2D).

#include <cstddef>
#include <vector>

#include "net/tensor.hpp"

namespace gtx::net {

struct ConvGeom {
  std::size_t cin = 1, cout = 1, k = 3, kz = 3, stride = 1, pad = 1, padz = 1;
  Shape3 in, out;

  std::size_t kernel_volume() const { return kz * k * k; }
  std::size_t weight_count() const { return cout * cin * kernel_volume(); }
};

ConvGeom make_geom(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, Shape3 in);

// y = conv(x, w) + b; b may be null.
void conv_forward(const double* x, const ConvGeom& g, const double* w, const double* b, double* y);
// dx += conv_transpose(dy, w)
void conv_backward_data(const double* dy, const ConvGeom& g, const double* w, double* dx);
// dw += dy (*) x; db += sum(dy) when db is not null.
void conv_backward_weight(const double* x, const double* dy, const ConvGeom& g, double* dw, double* db);

}  // namespace gtx::net
