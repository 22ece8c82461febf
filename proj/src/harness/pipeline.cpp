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
#include "harness/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>
#include <set>

#include "attribution/attribution.hpp"
#include "cidp/cidp.hpp"
#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/hash.hpp"
#include "core/io.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "net/train.hpp"
#include "stats/permuted_ols.hpp"
#include "synth/cohort.hpp"

namespace gtx::harness {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string seed_tag(std::uint64_t s) { return "seed" + std::to_string(s); }

double num(const std::string& s) { return s == "nan" ? kNaN : std::stod(s); }

void require(const fs::path& p, const char* step) {
  if (!fs::exists(p)) throw IoError("missing '" + p.string() + "'; run '" + step + "' first");
}

std::string file_hash(const fs::path& p) {
  Fnv1a h;
  h.update(io::read_text(p));
  return hex64(h.digest());
}

std::string tree_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::exists(dir))
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.update(f.generic_string());
    h.update(io::read_text(dir / f));
  }
  return hex64(h.digest());
}

// Columns measured by the generator, excluding derived ones appended later.
synth::PhenotypeTable base_table(const synth::Cohort& c) {
  std::set<std::string> names;
  for (const auto& d : synth::idp_descriptors(c.spec)) names.insert(d.name);
  synth::PhenotypeTable t;
  t.subject_ids = c.phenotypes.subject_ids;
  for (std::size_t i = 0; i < c.phenotypes.idps.size(); ++i)
    if (names.count(c.phenotypes.idps[i].name)) {
      t.idps.push_back(c.phenotypes.idps[i]);
      t.values.push_back(c.phenotypes.values[i]);
    }
  return t;
}

const synth::IdpDescriptor& find_idp(const synth::PhenotypeTable& t, const std::string& name) {
  return t.idps[t.column(name)];
}

int region_id_by_name(const synth::CohortSpec& spec, const std::string& name) {
  for (const auto& r : spec.regions)
    if (r.name == name) return r.id;
  throw ConfigError("unknown region '" + name + "'");
}

bool selected(const ExperimentConfig& cfg, const TaskDef& t) { return cfg.has_stage(t.stage); }

class CohortCache {
 public:
  explicit CohortCache(const RunPaths& p) : paths_(p) {}
  const synth::Cohort& get(const std::string& which) {
    auto it = cache_.find(which);
    if (it != cache_.end()) return it->second;
    const auto dir = which == "lesion" ? paths_.lesion_cohort() : paths_.main_cohort();
    require(dir / "manifest.json", "generate");
    return cache_.emplace(which, synth::load_cohort(dir)).first->second;
  }

 private:
  RunPaths paths_;
  std::map<std::string, synth::Cohort> cache_;
};

std::vector<TaskDef> selected_tasks(const ExperimentConfig& cfg, const RunPaths& paths) {
  require(paths.tasks(), "correct");
  std::vector<TaskDef> out;
  for (auto& t : read_tasks(paths.tasks()))
    if (selected(cfg, t)) out.push_back(std::move(t));
  if (out.empty()) throw IoError("no tasks for the selected stages; run 'correct' first");
  return out;
}

fs::path checkpoint_file(const RunPaths& p, const std::string& task, std::uint64_t seed) {
  return p.checkpoints() / (task + "_" + seed_tag(seed) + ".gtxc");
}

fs::path split_file(const RunPaths& p, const std::string& task, std::uint64_t seed) {
  return p.checkpoints() / (task + "_" + seed_tag(seed) + "_split.csv");
}

fs::path heatmap_file(const RunPaths& p, const std::string& task, std::uint64_t seed, const std::string& method,
                      const std::string& subject) {
  return p.heatmaps() / task / seed_tag(seed) / method / (subject + ".vlab");
}

struct ModelSplit {
  std::vector<std::size_t> train, val, test;  // cohort subject indices
};

ModelSplit read_split(const RunPaths& p, const std::string& task, std::uint64_t seed, const synth::Cohort& c) {
  const auto f = split_file(p, task, seed);
  require(f, "train");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < c.subjects.size(); ++i) index[c.subjects[i].id] = i;
  const auto t = csv::Table::read(f);
  ModelSplit s;
  for (const auto& r : t.rows()) {
    const auto it = index.find(r[0]);
    if (it == index.end()) throw IoError(f.string() + ": unknown subject " + r[0]);
    (r[1] == "train" ? s.train : r[1] == "val" ? s.val : s.test).push_back(it->second);
  }
  return s;
}

// Test subjects explained for a model: patients only for classification,
// subjects with lesions for the lesion task.
std::vector<std::size_t> explained_subjects(const ExperimentConfig& cfg, const TaskDef& t, const ModelSplit& s,
                                            const synth::Cohort& c) {
  std::vector<std::size_t> out;
  for (std::size_t i : s.test) {
    if (out.size() >= cfg.metrics.n_explain) break;
    if (t.classification && t.target[i] != 1.0) continue;
    if (t.lesion_gt && (!c.subjects[i].lesions || c.subjects[i].lesions->empty())) continue;
    out.push_back(i);
  }
  return out;
}

vol::RegionMask ground_truth(const TaskDef& t, const synth::Subject& s) {
  if (t.lesion_gt) return *s.lesions;
  vol::RegionMask m(s.image.dims(), s.image.spacing());
  for (int id : t.gt_regions) m = m | s.region_mask(id);
  return m;
}

metrics::SubjectScore score(const ExperimentConfig& cfg, const TaskDef& t, const synth::Subject& s,
                            const std::string& method, const vol::Volume& h) {
  metrics::SubjectScore r{t.name, method, s.id, kNaN, kNaN, kNaN, kNaN, false};
  const auto p = metrics::postprocess(h, cfg.postprocess);
  r.degenerate = p.degenerate;
  if (t.stage == Stage::Plausibility) {
    const auto rows = metrics::region_scores(p.map, s.labels);
    r.overlap = metrics::overlap_topk(rows, std::set<int>(t.reference.begin(), t.reference.end()));
    return r;
  }
  const auto gt = ground_truth(t, s);
  const auto a = metrics::rma(p.map, gt, t.rma_dilation_mm);
  r.rma = a.value;
  r.degenerate = r.degenerate || a.degenerate;
  const auto f = metrics::fpr_flag(p.map, gt, cfg.metrics.fpr_dilation_mm);
  r.fpr_flag = f.flag ? 1.0 : 0.0;
  r.degenerate = r.degenerate || f.degenerate;
  if (!t.lesion_gt) {
    const auto rows = metrics::region_scores(p.map, s.labels);
    bool hit = true;
    for (int id : t.gt_regions) hit = hit && metrics::tpr_hit(rows, id, cfg.metrics.top_k);
    r.tpr_hit = hit ? 1.0 : 0.0;
  }
  return r;
}

vol::Volume training_mean(const synth::Cohort& c, const std::vector<std::size_t>& idx) {
  vol::Volume m(c.spec.dims, c.spec.spacing_mm);
  for (std::size_t i : idx)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += c.subjects[i].image[k];
  for (auto& v : m.values()) v /= static_cast<double>(std::max<std::size_t>(idx.size(), 1));
  return m;
}

std::uint64_t method_seed(std::uint64_t seed, std::size_t subject) { return splitmix64(seed ^ (0x9e37ULL * (subject + 1))); }

enum class Source { Compute, Stored };

std::vector<metrics::SubjectScore> score_models(const ExperimentConfig& cfg, const RunPaths& paths, Source src) {
  CohortCache cohorts(paths);
  const auto tasks = selected_tasks(cfg, paths);
  const auto methods = resolve_methods(cfg);
  std::vector<metrics::SubjectScore> all;
  csv::Table prov({"task", "seed", "checkpoint_hash", "n_explained"});
  for (const auto& t : tasks) {
    const auto& c = cohorts.get(t.cohort);
    for (auto seed : cfg.seeds) {
      const auto ck_path = checkpoint_file(paths, t.name, seed);
      require(ck_path, "train");
      const auto ck = net::load_checkpoint(ck_path);
      const auto split = read_split(paths, t.name, seed, c);
      const auto subjects = explained_subjects(cfg, t, split, c);
      const vol::Volume base = training_mean(c, split.train);
      std::vector<metrics::SubjectScore> rows;
      for (const auto& m0 : methods) {
        const auto name = m0.name();
        fs::create_directories(heatmap_file(paths, t.name, seed, name, "x").parent_path());
        std::vector<metrics::SubjectScore> part(subjects.size());
        parallel_for(subjects.size(), [&](std::size_t j) {
          const auto& s = c.subjects[subjects[j]];
          const auto path = heatmap_file(paths, t.name, seed, name, s.id);
          vol::Volume map;
          if (src == Source::Compute) {
            auto m = m0;
            m.seed = method_seed(seed, subjects[j]);
            if (m.kind == attr::MethodKind::DeepLift && m.baseline.kind == attr::Baseline::Kind::TrainingMean)
              m.baseline.volume = base;
            auto h = attr::explain(ck.net, s.image, m, 0);
            for (auto& v : h.map.values()) v = io::quantize(v, io::DType::F32);
            attr::write_heatmap(h, path);
            map = std::move(h.map);
          } else {
            require(path, "explain");
            map = attr::read_heatmap(path).map;
          }
          part[j] = score(cfg, t, s, name, map);
        });
        rows.insert(rows.end(), part.begin(), part.end());
      }
      fs::create_directories(paths.scores());
      metrics::write_scores(score_file(paths, t.name, seed), rows);
      prov.add({t.name, std::to_string(seed), ck.net.hash(), std::to_string(subjects.size())});
      all.insert(all.end(), rows.begin(), rows.end());
    }
  }
  prov.write(paths.scores() / "provenance.csv");
  return all;
}

std::vector<metrics::SubjectScore> all_scores(const RunPaths& paths) {
  std::vector<fs::path> files;
  if (fs::exists(paths.scores()))
    for (const auto& e : fs::directory_iterator(paths.scores())) {
      const auto n = e.path().filename().string();
      if (n.starts_with("scores_") && n.ends_with(".csv")) files.push_back(e.path());
    }
  std::sort(files.begin(), files.end());
  std::vector<metrics::SubjectScore> rows;
  for (const auto& f : files) {
    auto r = metrics::read_scores(f);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

void write_aggregates(const RunPaths& paths) {
  const auto aggs = metrics::aggregate(all_scores(paths));
  using S = metrics::Stat;
  const std::vector<std::pair<const char*, S>> tables{{"rma_mean", S::RmaMean},         {"rma_sd", S::RmaSd},
                                                      {"tpr", S::Tpr},                  {"tpr_sd", S::TprSd},
                                                      {"fpr", S::Fpr},                  {"fpr_sd", S::FprSd},
                                                      {"overlap_mean", S::OverlapMean}, {"overlap_sd", S::OverlapSd},
                                                      {"n_degenerate", S::NDegenerate}};
  for (const auto& [name, stat] : tables)
    metrics::write_aggregate_table(paths.scores() / (std::string(name) + ".csv"), aggs, stat);
}

}  // namespace

RunPaths run_paths(const ExperimentConfig& cfg, const fs::path& out_root) { return {out_root / cfg.run_id}; }

fs::path score_file(const RunPaths& paths, const std::string& task, std::uint64_t seed) {
  return paths.scores() / ("scores_" + task + "_" + seed_tag(seed) + ".csv");
}

DiseaseLabels artificial_disease_labels(std::span<const double> c1, std::span<const double> c2, double hi, double lo) {
  if (c1.size() != c2.size()) throw ShapeError("artificial_disease_labels: inputs differ in length");
  if (c1.empty()) throw NumericError("artificial_disease_labels: no subjects");
  const double hi1 = vol::percentile(c1, 100.0 * hi), lo1 = vol::percentile(c1, 100.0 * lo);
  const double hi2 = vol::percentile(c2, 100.0 * hi), lo2 = vol::percentile(c2, 100.0 * lo);
  DiseaseLabels out;
  out.labels.assign(c1.size(), kNaN);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    const bool band1 = c1[i] > lo1 && c1[i] < hi1;
    const bool band2 = c2[i] > lo2 && c2[i] < hi2;
    if (band1 || band2) {
      out.excluded.push_back(i);
      continue;
    }
    const bool patient = c1[i] > hi1 && c2[i] <= lo2;
    out.labels[i] = patient ? 1.0 : 0.0;
    ++(patient ? out.n_patients : out.n_controls);
  }
  if (out.n_patients == 0) throw NumericError("artificial_disease_labels: no patients after filtering");
  if (out.n_controls == 0) throw NumericError("artificial_disease_labels: no controls after filtering");
  return out;
}

void write_tasks(const std::vector<TaskDef>& tasks, const fs::path& dir, const std::vector<std::string>& ids) {
  fs::create_directories(dir);
  for (const auto& t : tasks) {
    if (t.target.size() != ids.size()) throw ShapeError("write_tasks: target length differs from subject list");
    ordered_json j{{"name", t.name},
                   {"stage", to_string(t.stage)},
                   {"cohort", t.cohort},
                   {"classification", t.classification},
                   {"gt_regions", t.gt_regions},
                   {"lesion_gt", t.lesion_gt},
                   {"reference", t.reference},
                   {"rma_dilation_mm", t.rma_dilation_mm},
                   {"k_used", t.k_used}};
    io::write_text(dir / (t.name + ".json"), j.dump(2) + "\n");
    csv::Table tab({"subject_id", "target"});
    for (std::size_t i = 0; i < ids.size(); ++i) tab.add({ids[i], csv::fmt(t.target[i])});
    tab.write(dir / (t.name + ".csv"));
  }
}

std::vector<TaskDef> read_tasks(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<TaskDef> out;
  for (const auto& f : files) {
    const auto j = nlohmann::json::parse(io::read_text(f));
    TaskDef t;
    t.name = j.at("name").get<std::string>();
    t.stage = stage_from_string(j.at("stage").get<std::string>());
    t.cohort = j.at("cohort").get<std::string>();
    t.classification = j.at("classification").get<bool>();
    t.gt_regions = j.at("gt_regions").get<std::vector<int>>();
    t.lesion_gt = j.at("lesion_gt").get<bool>();
    t.reference = j.at("reference").get<std::vector<int>>();
    t.rma_dilation_mm = j.at("rma_dilation_mm").get<double>();
    t.k_used = j.at("k_used").get<std::size_t>();
    const auto tab = csv::Table::read(fs::path(f).replace_extension(".csv"));
    for (const auto& r : tab.rows()) t.target.push_back(num(r[1]));
    out.push_back(std::move(t));
  }
  return out;
}

void generate(const ExperimentConfig& cfg, const RunPaths& paths) {
  const auto spec = cohort_spec(cfg.cohort);
  const bool need_main = cfg.has_stage(Stage::Localized) || cfg.has_stage(Stage::ArtificialDisease) ||
                         cfg.has_stage(Stage::Plausibility);
  if (need_main) {
    fs::remove_all(paths.main_cohort());
    synth::save_cohort(synth::generate_cohort(spec), paths.main_cohort());
  }
  if (cfg.has_stage(Stage::Lesion)) {
    auto lp = synth::default_lesion_params(spec);
    lp.rate = cfg.lesion.rate;
    lp.radius_min_mm = cfg.lesion.radius_min_mm;
    lp.radius_max_mm = cfg.lesion.radius_max_mm;
    lp.intensity_boost = cfg.lesion.intensity_boost;
    fs::remove_all(paths.lesion_cohort());
    synth::save_cohort(synth::generate_lesion_task(spec, lp), paths.lesion_cohort());
  }
}

void correct(const ExperimentConfig& cfg, const RunPaths& paths) {
  std::vector<TaskDef> tasks;
  std::vector<std::string> ids;
  const bool need_cidp = cfg.has_stage(Stage::Localized) || cfg.has_stage(Stage::ArtificialDisease);
  const bool need_main = need_cidp || cfg.has_stage(Stage::Plausibility);
  CohortCache cohorts(paths);
  fs::create_directories(paths.scores());
  if (need_main) {
    auto cohort = cohorts.get("main");
    ids = cohort.phenotypes.subject_ids;
    std::map<std::string, cidp::CIDP> cidps;
    if (need_cidp) {
      std::vector<std::string> names;
      if (cfg.has_stage(Stage::Localized)) names = cfg.targets;
      if (cfg.has_stage(Stage::ArtificialDisease))
        for (const auto& p : cfg.disease.pairs) {
          names.push_back(p.first);
          names.push_back(p.second);
        }
      const auto base = base_table(cohort);
      std::vector<vol::Volume> images;
      images.reserve(cohort.subjects.size());
      for (const auto& s : cohort.subjects) images.push_back(s.image);
      const stats::VoxelData voxels(images);
      csv::Table loc({"task", "k", "score", "n_significant", "n_inside", "no_significant", "selected"});
      fs::create_directories(paths.cohort() / "pca");
      for (const auto& name : names) {
        if (cidps.count(name)) continue;
        const auto& desc = find_idp(base, name);
        const auto set = cidp::build_correction_set(base, desc);
        const auto pca = cidp::fit_pca(set);
        cidp::write_pca(pca, paths.cohort() / "pca", name);
        cidp::SelectKConfig sk;
        sk.grid = cfg.correction.grid;
        sk.n_perm = cfg.correction.n_perm;
        sk.alpha = cfg.correction.alpha;
        sk.dilation_mm = cfg.correction.dilation_mm;
        sk.tolerance = cfg.correction.tolerance;
        sk.seed = cfg.cohort.seed;
        for (auto k : sk.grid)
          if (k > pca.n_components())
            throw ConfigError("correction.grid value " + std::to_string(k) + " exceeds the " +
                              std::to_string(pca.n_components()) + " components available for " + name);
        const auto& values = base.column_values(name);
        const auto sel = cidp::select_k(values, pca, voxels, cohort.atlas.mask(desc.region_id), sk);
        auto c = cidp::residualize(values, pca, sel.k);
        c.target = desc;
        for (const auto& e : sel.sweep) {
          if (e.k == sel.k) c.localization = e.loc.score;
          loc.add({name, std::to_string(e.k), csv::fmt(e.loc.score), std::to_string(e.loc.n_significant),
                   std::to_string(e.loc.n_inside), e.loc.no_significant ? "1" : "0", e.k == sel.k ? "1" : "0"});
        }
        auto d = desc;
        d.name = cidp::cidp_column_name(name, sel.k);
        cohort.phenotypes.add_column(d, c.values);
        cidps.emplace(name, std::move(c));
      }
      loc.write(paths.scores() / "localization.csv");
      synth::write_phenotypes(cohort.phenotypes, paths.main_cohort() / "phenotypes.csv");
    }
    if (cfg.has_stage(Stage::Localized))
      for (const auto& name : cfg.targets) {
        const auto& c = cidps.at(name);
        TaskDef t;
        t.name = name;
        t.stage = Stage::Localized;
        t.target = c.values;
        t.gt_regions = {c.target.region_id};
        t.rma_dilation_mm = cfg.metrics.rma_dilation_mm;
        t.k_used = c.k_used;
        tasks.push_back(std::move(t));
      }
    if (cfg.has_stage(Stage::ArtificialDisease))
      for (std::size_t i = 0; i < cfg.disease.pairs.size(); ++i) {
        const auto& p = cfg.disease.pairs[i];
        const auto& a = cidps.at(p.first);
        const auto& b = cidps.at(p.second);
        const auto lab = artificial_disease_labels(a.values, b.values, cfg.disease.hi, cfg.disease.lo);
        TaskDef t;
        t.name = "artificial_disease_" + std::to_string(i + 1);
        t.stage = Stage::ArtificialDisease;
        t.classification = true;
        t.target = lab.labels;
        t.gt_regions = {a.target.region_id, b.target.region_id};
        t.rma_dilation_mm = cfg.metrics.rma_dilation_mm;
        tasks.push_back(std::move(t));
      }
    if (cfg.has_stage(Stage::Plausibility)) {
      std::vector<int> regions;
      for (const auto& r : cfg.plausibility.regions) regions.push_back(region_id_by_name(cohort.spec, r));
      auto w = cfg.plausibility.weights;
      if (w.empty()) w.assign(regions.size(), 1.0);
      const auto age = synth::generate_age_task(cohort, regions, w, cfg.plausibility.noise_sd);
      TaskDef t;
      t.name = "age_like";
      t.stage = Stage::Plausibility;
      t.target = age.age_like;
      t.reference = age.reference_regions;
      tasks.push_back(std::move(t));
    }
  }
  if (cfg.has_stage(Stage::Lesion)) {
    const auto& lesion = cohorts.get("lesion");
    if (ids.empty()) ids = lesion.phenotypes.subject_ids;
    if (ids != lesion.phenotypes.subject_ids) throw IoError("cohort subject lists differ");
    TaskDef t;
    t.name = "lesion_load";
    t.stage = Stage::Lesion;
    t.cohort = "lesion";
    t.target = lesion.phenotypes.column_values("lesion_load");
    t.lesion_gt = true;
    t.rma_dilation_mm = cfg.metrics.lesion_dilation_mm;
    tasks.push_back(std::move(t));
  }
  write_tasks(tasks, paths.tasks(), ids);
}

void train_models(const ExperimentConfig& cfg, const RunPaths& paths) {
  CohortCache cohorts(paths);
  fs::create_directories(paths.checkpoints());
  for (const auto& t : selected_tasks(cfg, paths)) {
    const auto& c = cohorts.get(t.cohort);
    std::vector<std::size_t> included;
    for (std::size_t i = 0; i < t.target.size(); ++i)
      if (std::isfinite(t.target[i])) included.push_back(i);
    net::Dataset ds;
    for (std::size_t i : included) {
      ds.inputs.push_back(&c.subjects[i].image);
      ds.targets.push_back(t.target[i]);
    }
    const auto& d = c.spec.dims;
    const auto spec = net::tiny_resnet({d.nz, d.ny, d.nx}, t.classification ? net::Task::Classification : net::Task::Regression,
                                       cfg.widths);
    for (auto seed : cfg.seeds) {
      auto tc = cfg.train;
      tc.seed = seed;
      tc.loss = t.classification ? net::Loss::BCE : net::Loss::MSE;
      const auto split = net::make_split(included.size(), tc);
      auto res = net::train(net::init(spec, seed), ds, tc, split);
      net::save_checkpoint(res.net, seed, tc.steps, checkpoint_file(paths, t.name, seed));
      net::write_history(res.history, paths.checkpoints() / (t.name + "_" + seed_tag(seed) + "_history.csv"));
      csv::Table sp({"subject_id", "part"});
      auto emit = [&](const std::vector<std::size_t>& idx, const char* part) {
        for (std::size_t k : idx) sp.add({c.subjects[included[k]].id, part});
      };
      emit(split.train, "train");
      emit(split.val, "val");
      emit(split.test, "test");
      sp.write(split_file(paths, t.name, seed));

      auto pred = net::predict(res.net, ds, split.test);
      std::vector<double> truth;
      for (std::size_t k : split.test) truth.push_back(ds.targets[k]);
      ordered_json j{{"task", t.name}, {"seed", seed}, {"checkpoint_hash", res.net.hash()},
                     {"n_train", split.train.size()}, {"n_val", split.val.size()}, {"n_test", split.test.size()}};
      if (t.classification) {
        double pos = 0;
        for (double v : truth) pos += v;
        const double rate = truth.empty() ? 0.0 : pos / static_cast<double>(truth.size());
        j["test_accuracy"] = net::accuracy(truth, pred);
        j["majority_baseline"] = std::max(rate, 1.0 - rate);
      } else {
        for (auto& v : pred) v = v * res.target_sd + res.target_mean;
        j["test_r2"] = net::r_squared(truth, pred);
      }
      io::write_text(paths.checkpoints() / (t.name + "_" + seed_tag(seed) + ".json"), j.dump(2) + "\n");
    }
  }
  csv::Table tab({"task", "seed", "metric", "value", "baseline", "checkpoint_hash"});
  std::vector<fs::path> side;
  for (const auto& e : fs::directory_iterator(paths.checkpoints()))
    if (e.path().extension() == ".json") side.push_back(e.path());
  std::sort(side.begin(), side.end());
  for (const auto& f : side) {
    const auto j = nlohmann::json::parse(io::read_text(f));
    const bool cls = j.contains("test_accuracy");
    tab.add({j["task"].get<std::string>(), std::to_string(j["seed"].get<std::uint64_t>()), cls ? "accuracy" : "r2",
             csv::fmt(j[cls ? "test_accuracy" : "test_r2"].get<double>()),
             cls ? csv::fmt(j["majority_baseline"].get<double>()) : "nan", j["checkpoint_hash"].get<std::string>()});
  }
  fs::create_directories(paths.scores());
  tab.write(paths.scores() / "training.csv");
}

std::vector<metrics::SubjectScore> explain(const ExperimentConfig& cfg, const RunPaths& paths) {
  auto rows = score_models(cfg, paths, Source::Compute);
  write_aggregates(paths);
  return rows;
}

std::vector<metrics::SubjectScore> evaluate(const ExperimentConfig& cfg, const RunPaths& paths) {
  auto rows = score_models(cfg, paths, Source::Stored);
  write_aggregates(paths);
  return rows;
}

ScaledMatrix minmax_rows(const std::vector<std::vector<double>>& m) {
  ScaledMatrix out;
  for (const auto& row : m) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : row)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    std::vector<double> s(row.size(), 0.0);
    const bool flat = !(hi > lo);
    if (!flat)
      for (std::size_t i = 0; i < row.size(); ++i) s[i] = std::isfinite(row[i]) ? (row[i] - lo) / (hi - lo) : kNaN;
    out.values.push_back(std::move(s));
    out.flat.push_back(flat);
  }
  return out;
}

void render_heatmap(const vol::Volume& h, const vol::RegionMask* mask, const fs::path& out,
                    std::optional<std::size_t> slice) {
  const auto& d = h.dims();
  std::size_t z = 0;
  if (slice) {
    if (*slice >= d.nz) throw ConfigError("render: slice " + std::to_string(*slice) + " outside the volume");
    z = *slice;
  } else if (mask && !mask->empty()) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < d.nz; ++k) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < d.nx * d.ny; ++i) n += (*mask)[k * d.nx * d.ny + i];
      if (n > best) best = n, z = k;
    }
  } else {
    const auto it = std::max_element(h.values().begin(), h.values().end());
    z = static_cast<std::size_t>(it - h.values().begin()) / (d.nx * d.ny);
  }
  const double hi = h.max() > 0 ? h.max() : 1.0;
  auto img = io::slice_image(h, z, std::min(0.0, h.min()), hi);
  if (mask) io::overlay_outline(img, *mask, z, {255, 40, 40});
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_png(fs::path(out.string() + ".png"), img);
  io::write_pgm(fs::path(out.string() + ".pgm"), img);
}

void render(const ExperimentConfig& cfg, const RunPaths& paths) {
  CohortCache cohorts(paths);
  const auto methods = resolve_methods(cfg);
  const auto seed = cfg.seeds.front();
  for (const auto& t : selected_tasks(cfg, paths)) {
    const auto& c = cohorts.get(t.cohort);
    const auto split = read_split(paths, t.name, seed, c);
    const auto subjects = explained_subjects(cfg, t, split, c);
    if (subjects.empty()) continue;
    vol::RegionMask group(c.spec.dims, c.spec.spacing_mm);
    if (t.lesion_gt) {
      for (std::size_t i : subjects) group = group | *c.subjects[i].lesions;
    } else {
      for (int id : t.stage == Stage::Plausibility ? t.reference : t.gt_regions) group = group | c.atlas.mask(id);
    }
    for (const auto& m : methods) {
      const auto name = m.name();
      vol::Volume mean(c.spec.dims, c.spec.spacing_mm);
      for (std::size_t k = 0; k < subjects.size(); ++k) {
        const auto& s = c.subjects[subjects[k]];
        const auto path = heatmap_file(paths, t.name, seed, name, s.id);
        require(path, "explain");
        const auto p = metrics::postprocess(attr::read_heatmap(path).map, cfg.postprocess).map;
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i] / static_cast<double>(subjects.size());
        if (k == 0) {
          const auto gt = t.stage == Stage::Plausibility ? group : ground_truth(t, s);
          render_heatmap(p, &gt, paths.report() / "renders" / t.name / (name + "_" + s.id));
        }
      }
      render_heatmap(mean, &group, paths.report() / "renders" / t.name / (name + "_mean"));
    }
  }
}

void report(const ExperimentConfig& cfg, const RunPaths& paths) {
  const auto rows = all_scores(paths);
  if (rows.empty()) throw IoError("no score files under '" + paths.scores().string() + "'; run 'explain' first");
  const auto aggs = metrics::aggregate(rows);
  std::vector<std::string> tasks, methods;
  std::map<std::pair<std::string, std::string>, double> rma;
  for (const auto& a : aggs) {
    if (std::find(tasks.begin(), tasks.end(), a.task) == tasks.end()) tasks.push_back(a.task);
    if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
    rma[{a.task, a.method}] = a.rma_mean;
  }
  fs::create_directories(paths.report());

  csv::Row gh{"group", "n_tasks"};
  gh.insert(gh.end(), methods.begin(), methods.end());
  csv::Table groups(gh);
  for (const auto& g : cfg.report.groups) {
    for (const auto& t : g.tasks)
      if (std::find(tasks.begin(), tasks.end(), t) == tasks.end())
        throw ConfigError("report: group '" + g.name + "' names unknown task '" + t + "'");
    csv::Row r{g.name, std::to_string(g.tasks.size())};
    for (const auto& m : methods) {
      double s = 0;
      std::size_t n = 0;
      for (const auto& t : g.tasks) {
        const double v = rma.at({t, m});
        if (std::isfinite(v)) s += v, ++n;
      }
      r.push_back(csv::fmt(n ? s / static_cast<double>(n) : kNaN));
    }
    groups.add(std::move(r));
  }
  groups.write(paths.report() / "group_rma.csv");

  std::vector<std::string> scored;
  std::vector<std::vector<double>> matrix;
  for (const auto& t : tasks) {
    std::vector<double> row;
    bool any = false;
    for (const auto& m : methods) {
      const auto it = rma.find({t, m});
      row.push_back(it == rma.end() ? kNaN : it->second);
      any = any || std::isfinite(row.back());
    }
    if (!any) continue;
    scored.push_back(t);
    matrix.push_back(std::move(row));
  }
  const auto scaled = minmax_rows(matrix);
  csv::Row mh{"task"};
  mh.insert(mh.end(), methods.begin(), methods.end());
  mh.push_back("flat_row");
  csv::Table mm(mh);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    csv::Row r{scored[i]};
    for (double v : scaled.values[i]) r.push_back(csv::fmt(v));
    r.push_back(scaled.flat[i] ? "1" : "0");
    mm.add(std::move(r));
  }
  mm.write(paths.report() / "rma_minmax.csv");
  render(cfg, paths);
}

void pipeline(const ExperimentConfig& cfg, const RunPaths& paths) {
  generate(cfg, paths);
  correct(cfg, paths);
  train_models(cfg, paths);
  explain(cfg, paths);
  report(cfg, paths);

  ordered_json hashes;
  hashes["cohort"] = tree_hash(paths.cohort());
  ordered_json ck = ordered_json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(paths.checkpoints()))
    if (e.path().extension() == ".gtxc") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) ck[f.filename().string()] = file_hash(f);
  hashes["checkpoints"] = ck;
  hashes["heatmaps"] = tree_hash(paths.heatmaps());
  ordered_json sc = ordered_json::object();
  files.clear();
  for (const auto& e : fs::directory_iterator(paths.scores()))
    if (e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) sc[f.filename().string()] = file_hash(f);
  hashes["scores"] = sc;

  ordered_json m;
  m["tool"] = "gtxai";
  m["version"] = kToolVersion;
  m["run_id"] = cfg.run_id;
  std::vector<std::string> stages;
  for (auto s : cfg.stages) stages.push_back(to_string(s));
  m["stages"] = stages;
  m["seeds"] = cfg.seeds;
  m["config"] = nlohmann::json::parse(to_json(cfg));
  m["config_toml"] = to_toml(cfg);
  m["hashes"] = hashes;
  io::write_text(paths.manifest(), m.dump(2) + "\n");
}

}  // namespace gtx::harness
