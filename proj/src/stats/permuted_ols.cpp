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

#include "stats/permuted_ols.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

namespace gtx::stats {

void Design::validate() const {
  const std::size_t n = contrast.size();
  for (const auto& c : confounds)
    if (c.size() != n) throw ShapeError("design: confound column length differs from contrast");
  if (n < 3 + confounds.size())
    throw ConfigError("design: need at least 3 + n_confounds subjects, have " + std::to_string(n));
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(contrast)) throw NumericError("design: non-finite contrast value");
  for (const auto& c : confounds)
    if (!finite(c)) throw NumericError("design: non-finite confound value");
}

std::size_t StatMap::n_significant(double alpha) const {
  std::size_t n = 0;
  for (double p : fwe_p.data())
    if (p <= alpha) ++n;
  return n;
}

VoxelData::VoxelData(std::span<const vol::Volume> subjects) {
  if (subjects.empty()) throw ShapeError("permuted_ols: no subject volumes");
  dims_ = subjects[0].dims();
  spacing_ = subjects[0].spacing();
  const auto nv = static_cast<Eigen::Index>(dims_.count());
  y_.resize(nv, static_cast<Eigen::Index>(subjects.size()));
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    vol::require_same_dims(dims_, subjects[s].dims(), "permuted_ols subject volume");
    y_.col(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::VectorXd>(subjects[s].data().data(), nv);
  }
}

std::vector<Permutation> draw_permutations(std::size_t n_subjects, std::size_t n_perm, std::uint64_t seed) {
  auto rng = make_stream(seed, 0x7065726dULL);
  std::vector<Permutation> perms(n_perm);
  for (auto& p : perms) {
    p.resize(n_subjects);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n_subjects; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(p[i - 1], p[pick(rng)]);
    }
  }
  return perms;
}

namespace {

// Orthonormal basis of [1, confounds].
Eigen::MatrixXd nuisance_basis(const Design& d) {
  const auto n = static_cast<Eigen::Index>(d.n_subjects());
  const auto p = static_cast<Eigen::Index>(1 + d.confounds.size());
  Eigen::MatrixXd z(n, p);
  z.col(0).setOnes();
  for (std::size_t c = 0; c < d.confounds.size(); ++c)
    z.col(static_cast<Eigen::Index>(c + 1)) = Eigen::Map<const Eigen::VectorXd>(d.confounds[c].data(), n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  return q;
}

}  // namespace

StatMap permuted_ols(const Design& design, const VoxelData& data, std::span<const Permutation> perms,
                     std::uint64_t seed) {
  design.validate();
  const std::size_t n = design.n_subjects();
  if (data.n_subjects() != n) throw ShapeError("permuted_ols: design and data subject counts differ");
  for (const auto& p : perms)
    if (p.size() != n) throw ShapeError("permuted_ols: permutation length differs from subject count");

  const Eigen::MatrixXd q = nuisance_basis(design);
  const auto p_cols = q.cols();
  const double dof = static_cast<double>(n) - static_cast<double>(p_cols) - 1.0;

  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(design.contrast.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd xt = x - q * (q.transpose() * x);
  const double xnorm2 = x.squaredNorm();
  if (xt.squaredNorm() <= 1e-12 * std::max(xnorm2, 1e-300))
    throw NumericError("permuted_ols: contrast is degenerate after orthogonalisation against confounds");

  const Eigen::MatrixXd& y = data.matrix();
  const Eigen::Index nv = y.rows();
  Eigen::MatrixXd yt = y - (y * q) * q.transpose();

  // Zero-variance voxels (constant across subjects, or fully explained by
  // confounds) get t = 0.
  Eigen::VectorXd ss = yt.rowwise().squaredNorm();
  std::vector<char> flat(static_cast<std::size_t>(nv), 0);
  for (Eigen::Index v = 0; v < nv; ++v) {
    const double mean = y.row(v).mean();
    const double centred = (y.row(v).array() - mean).square().sum();
    const double scale = y.row(v).squaredNorm();
    if (centred <= 1e-20 * scale || ss(v) <= 1e-20 * std::max(centred, 1e-300)) flat[static_cast<std::size_t>(v)] = 1;
  }

  auto t_stats = [&](const Eigen::MatrixXd& r, Eigen::MatrixXd& t) {
    Eigen::MatrixXd b = yt * r;  // nv x P
    t.resize(nv, r.cols());
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      const double rr = r.col(j).squaredNorm();
      for (Eigen::Index v = 0; v < nv; ++v) {
        if (flat[static_cast<std::size_t>(v)]) {
          t(v, j) = 0.0;
          continue;
        }
        const double bv = b(v, j);
        double rss = ss(v) - bv * bv / rr;
        rss = std::max(rss, ss(v) * 1e-30);
        t(v, j) = bv / std::sqrt(rr * rss / dof);
      }
    }
  };

  Eigen::MatrixXd t_obs;
  t_stats(xt, t_obs);

  std::vector<double> max_abs(perms.size(), 0.0);
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < perms.size(); start += kChunk) {
    const std::size_t m = std::min(kChunk, perms.size() - start);
    Eigen::MatrixXd r(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t i = 0; i < n; ++i)
        r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xt(static_cast<Eigen::Index>(perms[start + j][i]));
    r -= q * (q.transpose() * r);
    Eigen::MatrixXd t;
    t_stats(r, t);
    for (std::size_t j = 0; j < m; ++j) max_abs[start + j] = t.col(static_cast<Eigen::Index>(j)).cwiseAbs().maxCoeff();
  }
  std::sort(max_abs.begin(), max_abs.end());

  StatMap out;
  out.t_values = vol::Volume(data.dims(), data.spacing());
  out.fwe_p = vol::Volume(data.dims(), data.spacing());
  out.n_perm = perms.size();
  out.seed = seed;
  const double denom = 1.0 + static_cast<double>(perms.size());
  for (Eigen::Index v = 0; v < nv; ++v) {
    const double t = t_obs(v, 0);
    out.t_values[static_cast<std::size_t>(v)] = t;
    const double a = std::abs(t);
    const auto ge = static_cast<double>(max_abs.end() - std::lower_bound(max_abs.begin(), max_abs.end(), a));
    out.fwe_p[static_cast<std::size_t>(v)] = (1.0 + ge) / denom;
  }
  return out;
}

StatMap permuted_ols(const Design& design, const VoxelData& data, std::size_t n_perm, std::uint64_t seed) {
  if (n_perm < 1) throw ConfigError("permuted_ols: n_perm must be >= 1");
  auto perms = draw_permutations(design.n_subjects(), n_perm, seed);
  return permuted_ols(design, data, perms, seed);
}

StatMap permuted_ols(const Design& design, std::span<const vol::Volume> subjects, std::size_t n_perm,
                     std::uint64_t seed) {
  return permuted_ols(design, VoxelData(subjects), n_perm, seed);
}

vol::Volume effect_size_map(std::span<const vol::Volume> group_a, std::span<const vol::Volume> group_b,
                            const StatMap& sig, double alpha) {
  if (group_a.size() < 2 || group_b.size() < 2)
    throw NumericError("effect_size_map: each group needs at least two subjects");
  const auto& dims = sig.fwe_p.dims();
  for (const auto& v : group_a) vol::require_same_dims(dims, v.dims(), "effect_size_map group a");
  for (const auto& v : group_b) vol::require_same_dims(dims, v.dims(), "effect_size_map group b");
  vol::Volume d(dims, sig.fwe_p.spacing());
  const double na = static_cast<double>(group_a.size());
  const double nb = static_cast<double>(group_b.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (sig.fwe_p[i] > alpha) continue;
    double ma = 0, mb = 0;
    for (const auto& v : group_a) ma += v[i];
    for (const auto& v : group_b) mb += v[i];
    ma /= na;
    mb /= nb;
    double sa = 0, sb = 0;
    for (const auto& v : group_a) sa += (v[i] - ma) * (v[i] - ma);
    for (const auto& v : group_b) sb += (v[i] - mb) * (v[i] - mb);
    const double pooled = std::sqrt((sa + sb) / (na + nb - 2.0));
    d[i] = pooled > 0.0 ? (ma - mb) / pooled : 0.0;
  }
  return d;
}

void write_summary(const std::filesystem::path& p, const StatMap& s, double alpha) {
  csv::Table t({"n_perm", "seed", "n_sig_voxels", "alpha"});
  t.add({std::to_string(s.n_perm), std::to_string(s.seed), std::to_string(s.n_significant(alpha)), csv::fmt(alpha)});
  t.write(p);
}

}  // namespace gtx::stats
