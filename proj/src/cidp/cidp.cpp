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

#include "cidp/cidp.hpp"

#include <algorithm>
#include <cmath>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace gtx::cidp {

CorrectionSet build_correction_set(const synth::PhenotypeTable& table, const synth::IdpDescriptor& target) {
  CorrectionSet s;
  s.excluded_family = target.family_id;
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < table.idps.size(); ++c)
    if (table.idps[c].family_id != target.family_id) keep.push_back(c);
  if (keep.size() < 2)
    throw ConfigError("correction set for '" + target.name + "' has " + std::to_string(keep.size()) +
                      " columns after excluding its family; need at least 2");
  const auto n = static_cast<Eigen::Index>(table.n_subjects());
  s.values.resize(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    s.columns.push_back(table.idps[keep[j]]);
    for (Eigen::Index i = 0; i < n; ++i)
      s.values(i, static_cast<Eigen::Index>(j)) = table.values[keep[j]][static_cast<std::size_t>(i)];
  }
  return s;
}

Eigen::MatrixXd PCAModel::project(const Eigen::MatrixXd& x) const {
  if (x.cols() != means.size()) throw ShapeError("pca project: column count differs from model");
  Eigen::MatrixXd z = (x.rowwise() - means.transpose()).array().rowwise() / sds.transpose().array();
  return z * components.transpose();
}

PCAModel fit_pca(const CorrectionSet& set) {
  const Eigen::Index n = set.values.rows(), m = set.values.cols();
  if (n < 2) throw NumericError("fit_pca: need at least two subjects");
  PCAModel p;
  p.means = set.values.colwise().mean().transpose();
  Eigen::MatrixXd centred = set.values.rowwise() - p.means.transpose();
  p.sds = (centred.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < m; ++j)
    if (!(p.sds(j) > 1e-12 * std::max(1.0, std::abs(p.means(j)))))
      throw NumericError("fit_pca: column '" + set.columns[static_cast<std::size_t>(j)].name + "' is constant");
  Eigen::MatrixXd z = centred.array().rowwise() / p.sds.transpose().array();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  const Eigen::Index k = v.cols();
  p.components = v.transpose();
  p.eigenvalues = svd.singularValues().array().square() / static_cast<double>(n - 1);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    double best = -1;
    for (Eigen::Index j = 0; j < m; ++j)
      if (std::abs(p.components(c, j)) > best + 1e-15) {
        best = std::abs(p.components(c, j));
        arg = j;
      }
    if (p.components(c, arg) < 0) p.components.row(c) *= -1.0;
  }
  p.scores = z * p.components.transpose();
  return p;
}

CIDP residualize(std::span<const double> target, const PCAModel& model, std::size_t k) {
  if (k > model.n_components())
    throw ConfigError("residualize: k = " + std::to_string(k) + " exceeds " + std::to_string(model.n_components()) +
                      " components");
  const auto n = static_cast<Eigen::Index>(target.size());
  if (n != model.scores.rows()) throw ShapeError("residualize: target length differs from PCA training rows");
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(n - 1));
  if (!(sd > 0)) throw NumericError("residualize: target is constant");
  y = (y.array() - mean) / sd;
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(k + 1));
  x.col(0).setOnes();
  if (k) x.rightCols(static_cast<Eigen::Index>(k)) = model.scores.leftCols(static_cast<Eigen::Index>(k));
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd r = y - x * beta;
  CIDP c;
  c.values.assign(r.data(), r.data() + n);
  c.k_used = k;
  return c;
}

Localization localization_score(const stats::StatMap& stat, const vol::RegionMask& mask, double alpha,
                                double dilation_mm) {
  vol::require_same_dims(stat.fwe_p.dims(), mask.dims(), "localization_score");
  const auto region = vol::dilate(mask, dilation_mm);
  Localization l;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (stat.fwe_p[i] > alpha) continue;
    ++l.n_significant;
    if (region[i]) ++l.n_inside;
  }
  if (l.n_significant == 0) {
    l.no_significant = true;
    l.score = 1.0;
  } else {
    l.score = static_cast<double>(l.n_inside) / static_cast<double>(l.n_significant);
  }
  return l;
}

SelectKResult select_k(std::span<const double> target, const PCAModel& model, const stats::VoxelData& volumes,
                       const vol::RegionMask& mask, const SelectKConfig& cfg) {
  if (cfg.grid.empty()) throw ConfigError("select_k: empty grid");
  SelectKResult out;
  const auto perms = stats::draw_permutations(target.size(), cfg.n_perm, cfg.seed);
  for (std::size_t k : cfg.grid) {
    const auto c = residualize(target, model, k);
    stats::Design d{c.values, {}};
    const auto stat = stats::permuted_ols(d, volumes, perms, cfg.seed);
    out.sweep.push_back({k, localization_score(stat, mask, cfg.alpha, cfg.dilation_mm)});
  }
  const bool all_flagged =
      std::all_of(out.sweep.begin(), out.sweep.end(), [](const KSweepEntry& e) { return e.loc.no_significant; });
  double best = 0;
  for (const auto& e : out.sweep)
    if (all_flagged || !e.loc.no_significant) best = std::max(best, e.loc.score);
  out.k = out.sweep.back().k;
  std::size_t chosen = cfg.grid.size();
  for (std::size_t i = 0; i < out.sweep.size(); ++i) {
    const auto& e = out.sweep[i];
    if (!all_flagged && e.loc.no_significant) continue;
    if (e.loc.score >= cfg.tolerance * best && (chosen == cfg.grid.size() || e.k < out.sweep[chosen].k)) chosen = i;
  }
  out.k = out.sweep[chosen].k;
  return out;
}

std::vector<std::size_t> k_grid(std::size_t max_k, std::size_t step) {
  if (step == 0) throw ConfigError("k grid step must be >= 1");
  std::vector<std::size_t> g;
  for (std::size_t k = 0; k <= max_k; k += step) g.push_back(k);
  return g;
}

namespace {

void write_vector(const std::filesystem::path& p, const char* name, const Eigen::VectorXd& v) {
  csv::Table t({"index", name});
  for (Eigen::Index i = 0; i < v.size(); ++i) t.add({std::to_string(i), csv::fmt(v(i))});
  t.write(p);
}

Eigen::VectorXd read_vector(const std::filesystem::path& p) {
  const auto t = csv::Table::read(p);
  Eigen::VectorXd v(static_cast<Eigen::Index>(t.rows().size()));
  for (std::size_t i = 0; i < t.rows().size(); ++i) v(static_cast<Eigen::Index>(i)) = std::stod(t.rows()[i][1]);
  return v;
}

}  // namespace

void write_pca(const PCAModel& m, const std::filesystem::path& dir, const std::string& prefix) {
  write_vector(dir / (prefix + "_means.csv"), "mean", m.means);
  write_vector(dir / (prefix + "_sds.csv"), "sd", m.sds);
  write_vector(dir / (prefix + "_eigenvalues.csv"), "eigenvalue", m.eigenvalues);
  csv::Row header{"component"};
  for (Eigen::Index j = 0; j < m.components.cols(); ++j) header.push_back("c" + std::to_string(j));
  csv::Table t(header);
  for (Eigen::Index c = 0; c < m.components.rows(); ++c) {
    csv::Row r{std::to_string(c)};
    for (Eigen::Index j = 0; j < m.components.cols(); ++j) r.push_back(csv::fmt(m.components(c, j)));
    t.add(std::move(r));
  }
  t.write(dir / (prefix + "_components.csv"));
}

PCAModel read_pca(const std::filesystem::path& dir, const std::string& prefix) {
  PCAModel m;
  m.means = read_vector(dir / (prefix + "_means.csv"));
  m.sds = read_vector(dir / (prefix + "_sds.csv"));
  m.eigenvalues = read_vector(dir / (prefix + "_eigenvalues.csv"));
  const auto t = csv::Table::read(dir / (prefix + "_components.csv"));
  const auto cols = static_cast<Eigen::Index>(t.header().size() - 1);
  m.components.resize(static_cast<Eigen::Index>(t.rows().size()), cols);
  for (std::size_t c = 0; c < t.rows().size(); ++c)
    for (Eigen::Index j = 0; j < cols; ++j)
      m.components(static_cast<Eigen::Index>(c), j) = std::stod(t.rows()[c][static_cast<std::size_t>(j + 1)]);
  return m;
}

std::string cidp_column_name(const std::string& idp, std::size_t k) { return idp + "_cidp_k" + std::to_string(k); }

}  // namespace gtx::cidp
