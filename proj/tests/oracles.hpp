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

// Brute-force reference implementations and randomized property runners
// shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "core/rng.hpp"
#include "core/volume.hpp"
#include "metrics/metrics.hpp"

namespace gtx::oracle {

// Pairwise-distance dilation.
inline vol::RegionMask dilate(const vol::RegionMask& m, double r) {
  const auto& d = m.dims();
  const auto& s = m.spacing();
  vol::RegionMask out(d, s);
  std::vector<std::array<double, 3>> pts;
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x)
        if (m[(z * d.ny + y) * d.nx + x]) pts.push_back({x * s[0], y * s[1], z * s[2]});
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x)
        for (const auto& p : pts) {
          const double dx = x * s[0] - p[0], dy = y * s[1] - p[1], dz = z * s[2] - p[2];
          if (dx * dx + dy * dy + dz * dz <= r * r * (1 + 1e-12)) {
            out.set((z * d.ny + y) * d.nx + x);
            break;
          }
        }
  return out;
}

// Nearest-rank percentile by full sort.
inline double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  std::size_t rank = 1;
  while (static_cast<double>(rank) < p / 100.0 * static_cast<double>(v.size())) ++rank;
  return v[std::min(rank, v.size()) - 1];
}

inline double rma(const vol::Volume& h, const vol::RegionMask& gt, double r) {
  const auto d = oracle::dilate(gt, r);
  double in = 0, all = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    all += h[i];
    if (d[i]) in += h[i];
  }
  return in / all;
}

inline bool fpr_flag(const vol::Volume& h, const vol::RegionMask& gt, double r) {
  const auto d = oracle::dilate(gt, r);
  std::vector<double> inside;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (d[i]) inside.push_back(h[i]);
  const double thr = percentile(inside, 99.0);
  for (std::size_t i = 0; i < h.size(); ++i)
    if (!d[i] && h[i] > thr) return true;
  return false;
}

// Region ids ordered by 99th-percentile score, ties by id, without merging.
inline std::vector<int> ranking(const vol::Volume& h, const vol::Atlas& a) {
  std::vector<std::pair<double, int>> rows;
  for (const auto& [id, info] : a.regions()) {
    std::vector<double> v;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (a.label(i) == id) v.push_back(h[i]);
    if (!v.empty()) rows.push_back({-percentile(v, 99.0), id});
  }
  std::sort(rows.begin(), rows.end());
  std::vector<int> out;
  for (const auto& r : rows) out.push_back(r.second);
  return out;
}

// Voronoi atlas of n_regions cells inside a centred ball; no laterality.
inline vol::Atlas random_atlas(vol::Dims d, std::size_t n_regions, std::mt19937_64& rng) {
  vol::Atlas a(d, {1, 1, 1});
  std::uniform_real_distribution<double> ux(0, d.nx - 1.0), uy(0, d.ny - 1.0), uz(0, d.nz - 1.0);
  std::vector<std::array<double, 3>> c(n_regions);
  for (auto& p : c) p = {ux(rng), uy(rng), uz(rng)};
  for (std::size_t r = 0; r < n_regions; ++r) a.add_region(static_cast<int>(r + 1), {"r" + std::to_string(r + 1)});
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        std::size_t best = 0;
        double bd = 1e300;
        for (std::size_t r = 0; r < n_regions; ++r) {
          const double dd = std::pow(x - c[r][0], 2) + std::pow(y - c[r][1], 2) + std::pow(z - c[r][2], 2);
          if (dd < bd) bd = dd, best = r;
        }
        a.set_label((z * d.ny + y) * d.nx + x, static_cast<std::int32_t>(best + 1));
      }
  return a;
}

struct PropertyReport {
  std::size_t cases = 0;
  std::size_t failures = 0;
};

// rma(c * h) == rma(h) for random positive maps, masks, dilations and c > 0.
inline PropertyReport rma_scale_invariance(std::size_t n, std::uint64_t seed) {
  auto rng = make_stream(seed, 1);
  std::uniform_real_distribution<double> u(0, 1), lc(-6, 6);
  std::uniform_int_distribution<int> dil(0, 3);
  PropertyReport rep;
  for (std::size_t c = 0; c < n; ++c) {
    vol::Volume h({7, 6, 5}, {1, 1, 1});
    vol::RegionMask m(h.dims(), h.spacing());
    for (std::size_t i = 0; i < h.size(); ++i) {
      h[i] = u(rng) < 0.3 ? 0.0 : u(rng);
      m.set(i, u(rng) < 0.1);
    }
    m.set(c % h.size());
    h[(c * 7) % h.size()] = 1.0;
    const double k = std::pow(10.0, lc(rng));
    vol::Volume hk = h;
    for (auto& v : hk.values()) v *= k;
    const double r = dil(rng);
    const auto a = metrics::rma(h, m, r), b = metrics::rma(hk, m, r);
    ++rep.cases;
    if (a.degenerate || b.degenerate || std::abs(a.value - b.value) > 1e-12) ++rep.failures;
  }
  return rep;
}

// Region ranking, tpr_hit and overlap_topk are unchanged by strictly monotone
// transforms of the heatmap values.
inline PropertyReport rank_monotone_invariance(std::size_t n, std::uint64_t seed) {
  auto rng = make_stream(seed, 2);
  std::uniform_real_distribution<double> u(0, 1);
  PropertyReport rep;
  const auto atlas = [&] {
    auto r = make_stream(seed, 3);
    return random_atlas({8, 8, 6}, 7, r);
  }();
  const std::set<int> ref{1, 4, 6};
  for (std::size_t c = 0; c < n; ++c) {
    vol::Volume h(atlas.dims(), atlas.spacing());
    for (auto& v : h.values()) v = u(rng) < 0.2 ? 0.0 : u(rng);
    const int kind = static_cast<int>(c % 3);
    vol::Volume t = h;
    for (auto& v : t.values()) v = kind == 0 ? std::exp(3 * v) : kind == 1 ? v * v * v + 2 * v : std::log1p(v) * 5 - 1;
    const auto a = metrics::region_scores(h, atlas), b = metrics::region_scores(t, atlas);
    bool ok = a.size() == b.size();
    for (std::size_t i = 0; ok && i < a.size(); ++i) ok = a[i].region_id == b[i].region_id && a[i].rank == b[i].rank;
    for (int target = 1; ok && target <= 7; ++target)
      ok = metrics::tpr_hit(a, target) == metrics::tpr_hit(b, target);
    ok = ok && metrics::overlap_topk(a, ref) == metrics::overlap_topk(b, ref);
    ok = ok && ranking(h, atlas) == ranking(t, atlas);
    std::vector<int> ids;
    for (const auto& r : a) ids.push_back(r.region_id);
    ok = ok && ids == ranking(h, atlas);
    ++rep.cases;
    if (!ok) ++rep.failures;
  }
  return rep;
}

// Handcrafted maps on random atlases checked against the brute-force
// oracles; returns the number of mismatches.
inline std::size_t handcrafted_mismatches(std::size_t n, std::uint64_t seed) {
  auto rng = make_stream(seed, 4);
  std::uniform_real_distribution<double> u(0, 1);
  std::size_t bad = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const auto atlas = random_atlas({9, 8, 7}, 6, rng);
    const int target = static_cast<int>(c % 6) + 1;
    const auto gt = atlas.mask(target);
    vol::Volume h(atlas.dims(), atlas.spacing());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = u(rng) < 0.5 ? 0.0 : std::floor(u(rng) * 8);
    h[c % h.size()] += 1.0;
    const double r = static_cast<double>(c % 3);
    const auto got = metrics::rma(h, gt, r);
    if (got.degenerate || got.value != rma(h, gt, r)) ++bad;
    const double fd = 1.0 + static_cast<double>(c % 2);
    if (metrics::fpr_flag(h, gt, fd).flag != fpr_flag(h, gt, fd)) ++bad;
    const auto rows = metrics::region_scores(h, atlas);
    const auto order = ranking(h, atlas);
    const auto pos = std::find(order.begin(), order.end(), target) - order.begin();
    if (metrics::tpr_hit(rows, target, 3) != (pos < 3)) ++bad;
    const std::set<int> ref{order[1], order[4], 1 + static_cast<int>((c + 2) % 6)};
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) hits += ref.count(order[i]);
    if (metrics::overlap_topk(rows, ref) != static_cast<double>(hits) / static_cast<double>(ref.size())) ++bad;
  }
  return bad;
}

// Labels by explicit threshold comparison: 1 patient, 0 control, -1 excluded.
inline std::vector<int> disease_labels(const std::vector<double>& c1, const std::vector<double>& c2, double hi,
                                       double lo) {
  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto s1 = sorted(c1), s2 = sorted(c2);
  auto at = [](const std::vector<double>& s, double q) {
    std::size_t rank = 1;
    while (static_cast<double>(rank) < q * static_cast<double>(s.size())) ++rank;
    return s[rank - 1];
  };
  const double hi1 = at(s1, hi), lo1 = at(s1, lo), hi2 = at(s2, hi), lo2 = at(s2, lo);
  std::vector<int> out(c1.size());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    const bool band1 = c1[i] > lo1 && c1[i] < hi1;
    const bool band2 = c2[i] > lo2 && c2[i] < hi2;
    if (band1 || band2) out[i] = -1;
    else out[i] = (c1[i] > hi1 && c2[i] <= lo2) ? 1 : 0;
  }
  return out;
}

}  // namespace gtx::oracle
