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
#include "net/conv.hpp"

#include <algorithm>
#include <array>
#include <vector>

#include <Eigen/Dense>

#include "core/error.hpp"

namespace gtx::net {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using AlignedBuf = std::vector<double, Eigen::aligned_allocator<double>>;

// Operands are staged in aligned per-thread buffers so results do not depend
// on heap addresses.
AlignedBuf& scratch(std::size_t slot) {
  thread_local std::array<AlignedBuf, 4> bufs;
  return bufs[slot];
}

double* staged(std::size_t slot, const double* p, std::size_t n) {
  auto& b = scratch(slot);
  b.assign(p, p + n);
  return b.data();
}

double* workspace(std::size_t slot, std::size_t n) {
  auto& b = scratch(slot);
  b.resize(n);
  return b.data();
}

// Output position range [lo, hi) whose input coordinate o*stride - pad + t
// stays inside [0, n).
inline void valid_range(std::size_t n_in, std::size_t n_out, std::size_t stride, std::size_t pad, std::size_t t,
                        std::size_t& lo, std::size_t& hi) {
  const long off = static_cast<long>(t) - static_cast<long>(pad);
  const long s = static_cast<long>(stride);
  long a = off >= 0 ? 0 : (-off + s - 1) / s;
  long b = (static_cast<long>(n_in) - 1 - off);
  b = b < 0 ? 0 : b / s + 1;
  if (b > static_cast<long>(n_out)) b = static_cast<long>(n_out);
  if (a > b) a = b;
  lo = static_cast<std::size_t>(a);
  hi = static_cast<std::size_t>(b);
}

void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t P = g.out.count();
  const std::size_t in_sp = g.in.count();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t dz = 0; dz < g.kz; ++dz)
      for (std::size_t dy = 0; dy < g.k; ++dy)
        for (std::size_t dx = 0; dx < g.k; ++dx, ++row) {
          double* c = col + row * P;
          std::fill(c, c + P, 0.0);
          std::size_t z0, z1, y0, y1, x0, x1;
          valid_range(g.in.d, g.out.d, g.stride, g.padz, dz, z0, z1);
          valid_range(g.in.h, g.out.h, g.stride, g.pad, dy, y0, y1);
          valid_range(g.in.w, g.out.w, g.stride, g.pad, dx, x0, x1);
          const double* xc = x + ci * in_sp;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const std::size_t iz = oz * g.stride + dz - g.padz;
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const std::size_t iy = oy * g.stride + dy - g.pad;
              const double* src = xc + (iz * g.in.h + iy) * g.in.w;
              double* dst = c + (oz * g.out.h + oy) * g.out.w;
              for (std::size_t ox = x0; ox < x1; ++ox) dst[ox] = src[ox * g.stride + dx - g.pad];
            }
          }
        }
}

void col2im(const double* col, const ConvGeom& g, double* dx_out) {
  const std::size_t P = g.out.count();
  const std::size_t in_sp = g.in.count();
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t dz = 0; dz < g.kz; ++dz)
      for (std::size_t dy = 0; dy < g.k; ++dy)
        for (std::size_t dx = 0; dx < g.k; ++dx, ++row) {
          const double* c = col + row * P;
          std::size_t z0, z1, y0, y1, x0, x1;
          valid_range(g.in.d, g.out.d, g.stride, g.padz, dz, z0, z1);
          valid_range(g.in.h, g.out.h, g.stride, g.pad, dy, y0, y1);
          valid_range(g.in.w, g.out.w, g.stride, g.pad, dx, x0, x1);
          double* xc = dx_out + ci * in_sp;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const std::size_t iz = oz * g.stride + dz - g.padz;
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const std::size_t iy = oy * g.stride + dy - g.pad;
              double* dst = xc + (iz * g.in.h + iy) * g.in.w;
              const double* src = c + (oz * g.out.h + oy) * g.out.w;
              for (std::size_t ox = x0; ox < x1; ++ox) dst[ox * g.stride + dx - g.pad] += src[ox];
            }
          }
        }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.kz == 1 && g.stride == 1; }

}  // namespace

ConvGeom make_geom(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, Shape3 in) {
  if (k % 2 == 0) throw ConfigError("conv kernel size must be odd");
  if (stride < 1) throw ConfigError("conv stride must be >= 1");
  ConvGeom g;
  g.cin = cin;
  g.cout = cout;
  g.k = k;
  g.stride = stride;
  g.pad = k / 2;
  g.in = in;
  const bool flat = in.d == 1;
  g.kz = flat ? 1 : k;
  g.padz = flat ? 0 : k / 2;
  auto out_len = [&](std::size_t n, std::size_t kk, std::size_t p) { return (n + 2 * p - kk) / stride + 1; };
  g.out = {out_len(in.d, g.kz, g.padz), out_len(in.h, k, g.pad), out_len(in.w, k, g.pad)};
  return g;
}

void conv_forward(const double* x, const ConvGeom& g, const double* w, const double* b, double* y) {
  const auto P = static_cast<Eigen::Index>(g.out.count());
  const auto K = static_cast<Eigen::Index>(g.cin * g.kernel_volume());
  const auto C = static_cast<Eigen::Index>(g.cout);
  Eigen::Map<const RowMat> W(staged(0, w, static_cast<std::size_t>(C * K)), C, K);
  double* col = nullptr;
  if (is_pointwise(g)) {
    col = staged(1, x, static_cast<std::size_t>(K * P));
  } else {
    col = workspace(1, static_cast<std::size_t>(K * P));
    im2col(x, g, col);
  }
  Eigen::Map<RowMat> Y(workspace(2, static_cast<std::size_t>(C * P)), C, P);
  Y.noalias() = W * Eigen::Map<const RowMat>(col, K, P);
  if (b)
    for (std::size_t o = 0; o < g.cout; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += b[o];
  std::copy_n(Y.data(), C * P, y);
}

void conv_backward_data(const double* dy, const ConvGeom& g, const double* w, double* dx) {
  const auto P = static_cast<Eigen::Index>(g.out.count());
  const auto K = static_cast<Eigen::Index>(g.cin * g.kernel_volume());
  const auto C = static_cast<Eigen::Index>(g.cout);
  Eigen::Map<const RowMat> W(staged(0, w, static_cast<std::size_t>(C * K)), C, K);
  Eigen::Map<const RowMat> DY(staged(2, dy, static_cast<std::size_t>(C * P)), C, P);
  double* col = workspace(1, static_cast<std::size_t>(K * P));
  Eigen::Map<RowMat>(col, K, P).noalias() = W.transpose() * DY;
  if (is_pointwise(g)) {
    for (Eigen::Index i = 0; i < K * P; ++i) dx[i] += col[i];
    return;
  }
  col2im(col, g, dx);
}

void conv_backward_weight(const double* x, const double* dy, const ConvGeom& g, double* dw, double* db) {
  const auto P = static_cast<Eigen::Index>(g.out.count());
  const auto K = static_cast<Eigen::Index>(g.cin * g.kernel_volume());
  const auto C = static_cast<Eigen::Index>(g.cout);
  Eigen::Map<const RowMat> DY(staged(2, dy, static_cast<std::size_t>(C * P)), C, P);
  double* col = nullptr;
  if (is_pointwise(g)) {
    col = staged(1, x, static_cast<std::size_t>(K * P));
  } else {
    col = workspace(1, static_cast<std::size_t>(K * P));
    im2col(x, g, col);
  }
  Eigen::Map<RowMat> T(workspace(3, static_cast<std::size_t>(C * K)), C, K);
  T.noalias() = DY * Eigen::Map<const RowMat>(col, K, P).transpose();
  for (Eigen::Index i = 0; i < C * K; ++i) dw[i] += T.data()[i];
  if (db)
    for (std::size_t o = 0; o < g.cout; ++o) db[o] += DY.row(static_cast<Eigen::Index>(o)).sum();
}

}  // namespace gtx::net
