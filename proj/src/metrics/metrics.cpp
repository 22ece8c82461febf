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
#include "metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace gtx::metrics {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string to_string(Rectify r) { return r == Rectify::Abs ? "abs" : "positive_part"; }

Rectify rectify_from_string(const std::string& s) {
  if (s == "abs") return Rectify::Abs;
  if (s == "positive_part") return Rectify::PositivePart;
  throw ConfigError("unknown rectify mode '" + s + "'");
}

void PostprocessConfig::validate() const {
  auto pct = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 100.0)) throw ConfigError(std::string("postprocess: ") + what + " must be in [0, 100]");
  };
  pct(scale_percentile, "scale_percentile");
  pct(cutoff_percentile, "cutoff_percentile");
  if (!(fwhm_mm >= 0.0)) throw ConfigError("postprocess: fwhm_mm must be >= 0");
}

Processed postprocess(const vol::Volume& h, const PostprocessConfig& cfg) {
  cfg.validate();
  if (!h.all_finite()) throw NumericError("postprocess: heatmap has non-finite values");
  Processed out;
  vol::Volume m = h;
  for (auto& v : m.values()) v = cfg.rectify == Rectify::Abs ? std::abs(v) : std::max(v, 0.0);
  if (cfg.fwhm_mm > 0.0) m = vol::gaussian_smooth(m, cfg.fwhm_mm);
  const double scale = vol::percentile(m, cfg.scale_percentile);
  if (scale > 0.0) {
    for (auto& v : m.values()) v /= scale;
  } else {
    out.degenerate = true;
  }
  const double cut = vol::percentile(m, cfg.cutoff_percentile);
  for (auto& v : m.values()) {
    if (v < cut) v = 0.0;
    v = std::min(v, 1.0);
  }
  out.map = std::move(m);
  return out;
}

RmaResult rma(const vol::Volume& h, const vol::RegionMask& gt, double dilation_mm) {
  vol::require_same_dims(h.dims(), gt.dims(), "rma");
  const auto d = vol::dilate(gt, dilation_mm);
  double inside = 0, total = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    total += h[i];
    if (d[i]) inside += h[i];
  }
  if (!(total > 0.0)) return {kNaN, true};
  return {inside / total, false};
}

std::vector<RegionScoreRow> region_scores(const vol::Volume& h, const vol::Atlas& atlas, double pct) {
  vol::require_same_dims(h.dims(), atlas.dims(), "region_scores");
  std::map<int, std::vector<double>> values;
  for (const auto& [id, info] : atlas.regions()) values[id];
  for (std::size_t i = 0; i < h.size(); ++i) {
    const int id = atlas.label(i);
    if (id == 0) continue;
    auto it = values.find(id);
    if (it != values.end()) it->second.push_back(h[i]);
  }
  std::map<int, RegionScoreRow> groups;  // key: representative id
  std::map<int, int> family_rep;         // bilateral family -> representative id
  for (const auto& [id, info] : atlas.regions()) {
    const auto& v = values[id];
    if (v.empty()) {
      std::fprintf(stderr, "warning: region %d (%s) has an empty mask, skipped\n", id, info.name.c_str());
      continue;
    }
    const double s = vol::percentile(v, pct);
    int key = id;
    std::string name = info.name;
    if (info.laterality != vol::Laterality::None) {
      auto [it, fresh] = family_rep.try_emplace(info.family_id, id);
      key = it->second;
      if (name.size() > 2 && (name.ends_with("_L") || name.ends_with("_R"))) name.resize(name.size() - 2);
    }
    auto [git, fresh] = groups.try_emplace(key);
    auto& row = git->second;
    if (fresh) {
      row.region_id = key;
      row.name = name;
      row.score = s;
    } else {
      row.score = std::max(row.score, s);
    }
    row.members.push_back(id);
  }
  std::vector<RegionScoreRow> rows;
  for (auto& [k, r] : groups) rows.push_back(std::move(r));
  std::stable_sort(rows.begin(), rows.end(), [](const RegionScoreRow& a, const RegionScoreRow& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.region_id < b.region_id;
  });
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
  return rows;
}

namespace {
const RegionScoreRow* find_row(const std::vector<RegionScoreRow>& scores, int region) {
  for (const auto& r : scores)
    if (std::find(r.members.begin(), r.members.end(), region) != r.members.end()) return &r;
  return nullptr;
}
}  // namespace

bool tpr_hit(const std::vector<RegionScoreRow>& scores, int target_region, std::size_t top_k) {
  const auto* r = find_row(scores, target_region);
  if (!r) throw ConfigError("tpr_hit: unknown region " + std::to_string(target_region));
  return r->rank <= top_k;
}

vol::RegionMask fpr_candidates(const vol::RegionMask& gt, double dilation_mm) {
  const auto d = vol::dilate(gt, dilation_mm);
  vol::RegionMask out(d.dims(), d.spacing());
  for (std::size_t i = 0; i < d.size(); ++i) out.set(i, !d[i]);
  return out;
}

FprResult fpr_flag(const vol::Volume& h, const vol::RegionMask& gt, double dilation_mm) {
  vol::require_same_dims(h.dims(), gt.dims(), "fpr_flag");
  const auto d = vol::dilate(gt, dilation_mm);
  if (d.empty()) throw ConfigError("fpr_flag: dilated mask is empty");
  FprResult r;
  if (std::all_of(h.values().begin(), h.values().end(), [](double v) { return v == 0.0; })) {
    r.degenerate = true;
    return r;
  }
  r.threshold = vol::percentile(h, 99.0, &d);
  for (std::size_t i = 0; i < h.size(); ++i)
    if (!d[i] && h[i] > r.threshold) {
      r.flag = true;
      break;
    }
  return r;
}

double overlap_topk(const std::vector<RegionScoreRow>& scores, const std::set<int>& reference, std::size_t k) {
  if (k == 0) k = reference.size();
  if (k == 0) throw ConfigError("overlap_topk: empty reference set");
  if (k > scores.size()) throw ConfigError("overlap_topk: k exceeds the number of regions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (int m : scores[i].members)
      if (reference.count(m)) {
        ++hits;
        break;
      }
  return static_cast<double>(hits) / static_cast<double>(k);
}

std::vector<Aggregate> aggregate(const std::vector<SubjectScore>& rows) {
  std::map<std::pair<std::string, std::string>, std::vector<const SubjectScore*>> groups;
  for (const auto& r : rows) groups[{r.task, r.method}].push_back(&r);
  std::vector<Aggregate> out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](const SubjectScore* a, const SubjectScore* b) { return a->subject_id < b->subject_id; });
    Aggregate a;
    a.task = key.first;
    a.method = key.second;
    auto stat = [&](double SubjectScore::*field, double& mean, double& sd) {
      double s = 0, s2 = 0;
      std::size_t n = 0;
      for (const auto* r : members) {
        if (r->degenerate || std::isnan(r->*field)) continue;
        s += r->*field;
        ++n;
      }
      if (n == 0) {
        mean = sd = kNaN;
        return;
      }
      mean = s / static_cast<double>(n);
      for (const auto* r : members) {
        if (r->degenerate || std::isnan(r->*field)) continue;
        s2 += (r->*field - mean) * (r->*field - mean);
      }
      sd = std::sqrt(s2 / static_cast<double>(n));
    };
    for (const auto* r : members) (r->degenerate ? a.n_degenerate : a.n)++;
    stat(&SubjectScore::rma, a.rma_mean, a.rma_sd);
    stat(&SubjectScore::tpr_hit, a.tpr, a.tpr_sd);
    stat(&SubjectScore::fpr_flag, a.fpr, a.fpr_sd);
    stat(&SubjectScore::overlap, a.overlap_mean, a.overlap_sd);
    out.push_back(a);
  }
  return out;
}

void write_scores(const std::filesystem::path& p, const std::vector<SubjectScore>& rows) {
  csv::Table t({"task", "method", "subject_id", "rma", "tpr_hit", "fpr_flag", "overlap", "degenerate_flag"});
  for (const auto& r : rows)
    t.add({r.task, r.method, r.subject_id, csv::fmt(r.rma), csv::fmt(r.tpr_hit), csv::fmt(r.fpr_flag),
           csv::fmt(r.overlap), r.degenerate ? "1" : "0"});
  t.write(p);
}

std::vector<SubjectScore> read_scores(const std::filesystem::path& p) {
  const auto t = csv::Table::read(p);
  const std::size_t c_task = t.column("task"), c_method = t.column("method"), c_id = t.column("subject_id"),
                    c_rma = t.column("rma"), c_tpr = t.column("tpr_hit"), c_fpr = t.column("fpr_flag"),
                    c_ov = t.column("overlap"), c_deg = t.column("degenerate_flag");
  auto num = [](const std::string& s) { return s == "nan" ? kNaN : std::stod(s); };
  std::vector<SubjectScore> out;
  for (const auto& r : t.rows())
    out.push_back({r[c_task], r[c_method], r[c_id], num(r[c_rma]), num(r[c_tpr]), num(r[c_fpr]), num(r[c_ov]),
                   r[c_deg] == "1"});
  return out;
}

void write_aggregate_table(const std::filesystem::path& p, const std::vector<Aggregate>& aggs, Stat stat) {
  std::vector<std::string> tasks, methods;
  std::map<std::pair<std::string, std::string>, double> cell;
  for (const auto& a : aggs) {
    if (std::find(tasks.begin(), tasks.end(), a.task) == tasks.end()) tasks.push_back(a.task);
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
    double v = 0;
    switch (stat) {
      case Stat::RmaMean: v = a.rma_mean; break;
      case Stat::RmaSd: v = a.rma_sd; break;
      case Stat::Tpr: v = a.tpr; break;
      case Stat::TprSd: v = a.tpr_sd; break;
      case Stat::Fpr: v = a.fpr; break;
      case Stat::FprSd: v = a.fpr_sd; break;
      case Stat::OverlapMean: v = a.overlap_mean; break;
      case Stat::OverlapSd: v = a.overlap_sd; break;
      case Stat::NDegenerate: v = static_cast<double>(a.n_degenerate); break;
    }
    cell[{a.task, a.method}] = v;
  }
  csv::Row header{"task"};
  header.insert(header.end(), methods.begin(), methods.end());
  csv::Table t(header);
  for (const auto& task : tasks) {
    csv::Row r{task};
    for (const auto& m : methods) {
      auto it = cell.find({task, m});
      r.push_back(it == cell.end() ? "nan" : csv::fmt(it->second));
    }
    t.add(std::move(r));
  }
  t.write(p);
}

}  // namespace gtx::metrics
