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
#include "harness/config.hpp"

#include <json.hpp>
#include <set>
#include <sstream>
#include <toml.hpp>

#include "core/error.hpp"
#include "core/io.hpp"

namespace gtx::harness {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Localized: return "localized";
    case Stage::ArtificialDisease: return "artificial_disease";
    case Stage::Lesion: return "lesion";
    case Stage::Plausibility: return "plausibility";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  if (s == "localized") return Stage::Localized;
  if (s == "artificial_disease") return Stage::ArtificialDisease;
  if (s == "lesion") return Stage::Lesion;
  if (s == "plausibility") return Stage::Plausibility;
  throw ConfigError("unknown stage '" + s + "'");
}

bool ExperimentConfig::has_stage(Stage s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }

synth::CohortSpec cohort_spec(const CohortConfig& c) {
  auto s = synth::default_spec(c.dims, c.spacing_mm, c.n_regions, c.n_subjects, c.seed, c.bilateral_pairs);
  if (c.noise_sd) s.noise_sd = *c.noise_sd;
  for (auto& r : s.regions) {
    if (c.tau) r.tau = *c.tau;
    if (c.rho) r.rho = *c.rho;
  }
  return s;
}

namespace {

// Reads typed keys from one table and rejects keys nobody asked for.
class Section {
 public:
  Section(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

  bool present() const { return t_ != nullptr; }

  const toml::node* node(const std::string& key) {
    used_.insert(key);
    return t_ ? t_->get(key) : nullptr;
  }

  double number(const std::string& key, double def) {
    const auto* n = node(key);
    if (!n) return def;
    if (auto v = n->value<double>()) return *v;
    fail(key, "a number");
  }

  std::size_t count(const std::string& key, std::size_t def) {
    const auto* n = node(key);
    if (!n) return def;
    auto v = n->value<std::int64_t>();
    if (!v || *v < 0) fail(key, "a non-negative integer");
    return static_cast<std::size_t>(*v);
  }

  bool flag(const std::string& key, bool def) {
    const auto* n = node(key);
    if (!n) return def;
    if (auto v = n->value<bool>()) return *v;
    fail(key, "a boolean");
  }

  std::string text(const std::string& key, const std::string& def) {
    const auto* n = node(key);
    if (!n) return def;
    if (auto v = n->value<std::string>()) return *v;
    fail(key, "a string");
  }

  template <class T>
  std::vector<T> list(const std::string& key, std::vector<T> def) {
    const auto* n = node(key);
    if (!n) return def;
    const auto* a = n->as_array();
    if (!a) fail(key, "an array");
    std::vector<T> out;
    for (const auto& e : *a) out.push_back(element<T>(key, e));
    return out;
  }

  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_)
      if (!used_.count(std::string(k.str()))) throw ConfigError("config: unknown key '" + std::string(k.str()) + "' in [" + name_ + "]");
  }

  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError("config: [" + name_ + "] " + key + " must be " + what);
  }

 private:
  template <class T>
  T element(const std::string& key, const toml::node& e) const {
    if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = e.value<std::string>()) return *v;
      fail(key, "an array of strings");
    } else if constexpr (std::is_same_v<T, double>) {
      if (auto v = e.value<double>()) return *v;
      fail(key, "an array of numbers");
    } else {
      auto v = e.value<std::int64_t>();
      if (!v || *v < 0) fail(key, "an array of non-negative integers");
      return static_cast<T>(*v);
    }
  }

  const toml::table* t_;
  std::string name_;
  std::set<std::string> used_;
};

vol::Dims dims_from(const std::vector<std::size_t>& v, const char* what) {
  if (v.size() != 3) throw ConfigError(std::string("config: ") + what + " needs three entries");
  return {v[0], v[1], v[2]};
}

ExperimentConfig from_table(const toml::table& root) {
  static const std::set<std::string> kSections{"run",   "stage",  "cohort",      "correction", "disease",
                                               "lesion", "plausibility", "train", "methods",    "postprocess",
                                               "metrics", "report",      "seeds"};
  for (const auto& [k, v] : root) {
    if (!kSections.count(std::string(k.str()))) throw ConfigError("config: unknown section [" + std::string(k.str()) + "]");
    if (!v.is_table()) throw ConfigError("config: '" + std::string(k.str()) + "' must be a section");
  }
  auto section = [&](const char* name) { return Section(root[name].as_table(), name); };
  ExperimentConfig c;

  auto run = section("run");
  c.run_id = run.text("id", c.run_id);
  run.finish();

  auto stage = section("stage");
  if (stage.node("name")) {
    c.stages = {stage_from_string(stage.text("name", ""))};
  }
  if (stage.node("names")) {
    c.stages.clear();
    for (const auto& s : stage.list<std::string>("names", {})) c.stages.push_back(stage_from_string(s));
  }
  c.targets = stage.list<std::string>("targets", c.targets);
  stage.finish();

  auto co = section("cohort");
  c.cohort.n_subjects = co.count("n_subjects", c.cohort.n_subjects);
  if (co.node("dims")) c.cohort.dims = dims_from(co.list<std::size_t>("dims", {}), "cohort.dims");
  if (co.node("spacing_mm")) {
    const auto s = co.list<double>("spacing_mm", {});
    if (s.size() != 3) throw ConfigError("config: cohort.spacing_mm needs three entries");
    c.cohort.spacing_mm = {s[0], s[1], s[2]};
  }
  c.cohort.n_regions = co.count("n_regions", c.cohort.n_regions);
  c.cohort.bilateral_pairs = co.flag("bilateral_pairs", c.cohort.bilateral_pairs);
  c.cohort.seed = co.count("seed", c.cohort.seed);
  if (co.node("noise_sd")) c.cohort.noise_sd = co.number("noise_sd", 0);
  if (co.node("tau")) c.cohort.tau = co.number("tau", 0);
  if (co.node("rho")) c.cohort.rho = co.number("rho", 0);
  co.finish();

  auto cr = section("correction");
  c.correction.grid = cr.list<std::size_t>("grid", c.correction.grid);
  c.correction.n_perm = cr.count("n_perm", c.correction.n_perm);
  c.correction.alpha = cr.number("alpha", c.correction.alpha);
  c.correction.dilation_mm = cr.number("dilation_mm", c.correction.dilation_mm);
  c.correction.tolerance = cr.number("tolerance", c.correction.tolerance);
  cr.finish();

  auto di = section("disease");
  if (const auto* n = di.node("pairs")) {
    const auto* a = n->as_array();
    if (!a) di.fail("pairs", "an array of [first, second] name pairs");
    for (const auto& e : *a) {
      const auto* p = e.as_array();
      if (!p || p->size() != 2 || !(*p)[0].is_string() || !(*p)[1].is_string())
        di.fail("pairs", "an array of [first, second] name pairs");
      c.disease.pairs.push_back({*(*p)[0].value<std::string>(), *(*p)[1].value<std::string>()});
    }
  }
  c.disease.hi = di.number("hi", c.disease.hi);
  c.disease.lo = di.number("lo", c.disease.lo);
  di.finish();

  auto le = section("lesion");
  c.lesion.rate = le.number("rate", c.lesion.rate);
  c.lesion.radius_min_mm = le.number("radius_min_mm", c.lesion.radius_min_mm);
  c.lesion.radius_max_mm = le.number("radius_max_mm", c.lesion.radius_max_mm);
  c.lesion.intensity_boost = le.number("intensity_boost", c.lesion.intensity_boost);
  le.finish();

  auto pl = section("plausibility");
  c.plausibility.regions = pl.list<std::string>("regions", c.plausibility.regions);
  c.plausibility.weights = pl.list<double>("weights", c.plausibility.weights);
  c.plausibility.noise_sd = pl.number("noise_sd", c.plausibility.noise_sd);
  pl.finish();

  auto tr = section("train");
  auto& t = c.train;
  t.steps = tr.count("steps", t.steps);
  t.batch_size = tr.count("batch_size", t.batch_size);
  t.max_lr = tr.number("max_lr", t.max_lr);
  t.warmup_fraction = tr.number("warmup_fraction", t.warmup_fraction);
  t.final_ratio = tr.number("final_ratio", t.final_ratio);
  t.start_ratio = tr.number("start_ratio", t.start_ratio);
  t.weight_decay = tr.number("weight_decay", t.weight_decay);
  t.train_fraction = tr.number("train_fraction", t.train_fraction);
  t.val_fraction = tr.number("val_fraction", t.val_fraction);
  t.test_fraction = tr.number("test_fraction", t.test_fraction);
  t.log_every = tr.count("log_every", t.log_every);
  c.widths = tr.list<std::size_t>("widths", c.widths);
  tr.finish();

  auto me = section("methods");
  c.methods.names = me.list<std::string>("names", c.methods.names);
  c.methods.smoothgrad_noise = me.number("smoothgrad_noise", c.methods.smoothgrad_noise);
  c.methods.smoothgrad_n = me.count("smoothgrad_n", c.methods.smoothgrad_n);
  c.methods.deeplift_baseline = me.text("deeplift_baseline", c.methods.deeplift_baseline);
  c.methods.lrp_eps = me.number("lrp_eps", c.methods.lrp_eps);
  me.finish();

  auto pp = section("postprocess");
  c.postprocess.rectify = metrics::rectify_from_string(pp.text("rectify", metrics::to_string(c.postprocess.rectify)));
  c.postprocess.fwhm_mm = pp.number("fwhm_mm", c.postprocess.fwhm_mm);
  c.postprocess.scale_percentile = pp.number("scale_percentile", c.postprocess.scale_percentile);
  c.postprocess.cutoff_percentile = pp.number("cutoff_percentile", c.postprocess.cutoff_percentile);
  pp.finish();

  auto mt = section("metrics");
  c.metrics.rma_dilation_mm = mt.number("rma_dilation_mm", c.metrics.rma_dilation_mm);
  c.metrics.lesion_dilation_mm = mt.number("lesion_dilation_mm", c.metrics.lesion_dilation_mm);
  c.metrics.fpr_dilation_mm = mt.number("fpr_dilation_mm", c.metrics.fpr_dilation_mm);
  c.metrics.top_k = mt.count("top_k", c.metrics.top_k);
  c.metrics.n_explain = mt.count("n_explain", c.metrics.n_explain);
  mt.finish();

  auto rp = section("report");
  if (const auto* n = rp.node("groups")) {
    const auto* g = n->as_table();
    if (!g) rp.fail("groups", "a table of name = [tasks]");
    for (const auto& [k, v] : *g) {
      ReportGroup grp{std::string(k.str()), {}};
      const auto* a = v.as_array();
      if (!a) rp.fail("groups." + grp.name, "an array of task names");
      for (const auto& e : *a) {
        if (!e.is_string()) rp.fail("groups." + grp.name, "an array of task names");
        grp.tasks.push_back(*e.value<std::string>());
      }
      c.report.groups.push_back(std::move(grp));
    }
  }
  rp.finish();

  auto se = section("seeds");
  c.seeds = se.list<std::uint64_t>("values", c.seeds);
  se.finish();

  c.validate();
  return c;
}

toml::table to_table(const ExperimentConfig& c) {
  auto arr = [](const auto& v) {
    toml::array a;
    for (const auto& e : v) {
      if constexpr (std::is_same_v<std::decay_t<decltype(e)>, std::string>) a.push_back(e);
      else if constexpr (std::is_floating_point_v<std::decay_t<decltype(e)>>) a.push_back(static_cast<double>(e));
      else a.push_back(static_cast<std::int64_t>(e));
    }
    return a;
  };
  auto i64 = [](auto v) { return static_cast<std::int64_t>(v); };
  toml::table root;
  root.insert("run", toml::table{{"id", c.run_id}});
  std::vector<std::string> stages;
  for (auto s : c.stages) stages.push_back(to_string(s));
  toml::table stage{{"names", arr(stages)}};
  stage.insert("targets", arr(c.targets));
  root.insert("stage", stage);
  toml::table co{{"n_subjects", i64(c.cohort.n_subjects)},
                 {"dims", arr(std::vector<std::size_t>{c.cohort.dims.nx, c.cohort.dims.ny, c.cohort.dims.nz})},
                 {"spacing_mm", arr(std::vector<double>(c.cohort.spacing_mm.begin(), c.cohort.spacing_mm.end()))},
                 {"n_regions", i64(c.cohort.n_regions)},
                 {"bilateral_pairs", c.cohort.bilateral_pairs},
                 {"seed", i64(c.cohort.seed)}};
  if (c.cohort.noise_sd) co.insert("noise_sd", *c.cohort.noise_sd);
  if (c.cohort.tau) co.insert("tau", *c.cohort.tau);
  if (c.cohort.rho) co.insert("rho", *c.cohort.rho);
  root.insert("cohort", co);
  root.insert("correction", toml::table{{"grid", arr(c.correction.grid)},
                                        {"n_perm", i64(c.correction.n_perm)},
                                        {"alpha", c.correction.alpha},
                                        {"dilation_mm", c.correction.dilation_mm},
                                        {"tolerance", c.correction.tolerance}});
  toml::array pairs;
  for (const auto& p : c.disease.pairs) pairs.push_back(toml::array{p.first, p.second});
  root.insert("disease", toml::table{{"pairs", pairs}, {"hi", c.disease.hi}, {"lo", c.disease.lo}});
  root.insert("lesion", toml::table{{"rate", c.lesion.rate},
                                    {"radius_min_mm", c.lesion.radius_min_mm},
                                    {"radius_max_mm", c.lesion.radius_max_mm},
                                    {"intensity_boost", c.lesion.intensity_boost}});
  root.insert("plausibility", toml::table{{"regions", arr(c.plausibility.regions)},
                                          {"weights", arr(c.plausibility.weights)},
                                          {"noise_sd", c.plausibility.noise_sd}});
  const auto& t = c.train;
  root.insert("train", toml::table{{"steps", i64(t.steps)},
                                   {"batch_size", i64(t.batch_size)},
                                   {"max_lr", t.max_lr},
                                   {"warmup_fraction", t.warmup_fraction},
                                   {"final_ratio", t.final_ratio},
                                   {"start_ratio", t.start_ratio},
                                   {"weight_decay", t.weight_decay},
                                   {"train_fraction", t.train_fraction},
                                   {"val_fraction", t.val_fraction},
                                   {"test_fraction", t.test_fraction},
                                   {"log_every", i64(t.log_every)},
                                   {"widths", arr(c.widths)}});
  root.insert("methods", toml::table{{"names", arr(c.methods.names)},
                                     {"smoothgrad_noise", c.methods.smoothgrad_noise},
                                     {"smoothgrad_n", i64(c.methods.smoothgrad_n)},
                                     {"deeplift_baseline", c.methods.deeplift_baseline},
                                     {"lrp_eps", c.methods.lrp_eps}});
  root.insert("postprocess", toml::table{{"rectify", metrics::to_string(c.postprocess.rectify)},
                                         {"fwhm_mm", c.postprocess.fwhm_mm},
                                         {"scale_percentile", c.postprocess.scale_percentile},
                                         {"cutoff_percentile", c.postprocess.cutoff_percentile}});
  root.insert("metrics", toml::table{{"rma_dilation_mm", c.metrics.rma_dilation_mm},
                                     {"lesion_dilation_mm", c.metrics.lesion_dilation_mm},
                                     {"fpr_dilation_mm", c.metrics.fpr_dilation_mm},
                                     {"top_k", i64(c.metrics.top_k)},
                                     {"n_explain", i64(c.metrics.n_explain)}});
  toml::table groups;
  for (const auto& g : c.report.groups) groups.insert(g.name, arr(g.tasks));
  root.insert("report", toml::table{{"groups", groups}});
  root.insert("seeds", toml::table{{"values", arr(c.seeds)}});
  return root;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (run_id.empty() || run_id.find('/') != std::string::npos) throw ConfigError("config: run.id must be a plain name");
  if (stages.empty()) throw ConfigError("config: no stage selected");
  if (seeds.empty()) throw ConfigError("config: seeds.values is empty");
  const auto spec = cohort_spec(cohort);
  spec.validate();
  train.validate();
  postprocess.validate();
  if (widths.size() != 3) throw ConfigError("config: train.widths needs three entries");
  if (metrics.top_k < 1) throw ConfigError("config: metrics.top_k must be >= 1");
  if (metrics.n_explain < 1) throw ConfigError("config: metrics.n_explain must be >= 1");
  if (correction.grid.empty()) throw ConfigError("config: correction.grid is empty");
  if (!(correction.alpha > 0 && correction.alpha < 1)) throw ConfigError("config: correction.alpha must be in (0, 1)");

  const auto idps = synth::idp_descriptors(spec);
  auto find_idp = [&](const std::string& name) -> const synth::IdpDescriptor& {
    for (const auto& d : idps)
      if (d.name == name) return d;
    throw ConfigError("config: unknown phenotype '" + name + "'");
  };
  if (has_stage(Stage::Localized) && targets.empty()) throw ConfigError("config: localized stage needs stage.targets");
  for (const auto& t : targets) find_idp(t);
  if (has_stage(Stage::ArtificialDisease)) {
    if (disease.pairs.empty()) throw ConfigError("config: artificial_disease stage needs disease.pairs");
    if (!(disease.lo > 0 && disease.lo <= disease.hi && disease.hi < 1))
      throw ConfigError("config: disease thresholds need 0 < lo <= hi < 1");
    for (const auto& p : disease.pairs)
      if (find_idp(p.first).family_id == find_idp(p.second).family_id)
        throw ConfigError("config: disease pair '" + p.first + "', '" + p.second + "' shares a region family");
  }
  if (has_stage(Stage::Plausibility)) {
    if (plausibility.regions.size() < 2) throw ConfigError("config: plausibility.regions needs at least two regions");
    if (!plausibility.weights.empty() && plausibility.weights.size() != plausibility.regions.size())
      throw ConfigError("config: plausibility.weights must match plausibility.regions");
    for (const auto& r : plausibility.regions) {
      bool found = false;
      for (const auto& b : spec.regions) found = found || b.name == r;
      if (!found) throw ConfigError("config: unknown region '" + r + "'");
    }
  }
  if (methods.names.empty()) throw ConfigError("config: methods.names is empty");
  if (methods.deeplift_baseline != "zero" && methods.deeplift_baseline != "training_mean")
    throw ConfigError("config: methods.deeplift_baseline must be zero or training_mean");
  resolve_methods(*this);
}

std::vector<attr::Method> resolve_methods(const ExperimentConfig& c) {
  std::vector<attr::Method> out;
  for (const auto& name : c.methods.names) {
    auto m = attr::parse_method(name);
    m.noise_level = c.methods.smoothgrad_noise;
    m.n_samples = c.methods.smoothgrad_n;
    if (m.kind == attr::MethodKind::DeepLift)
      m.baseline.kind = c.methods.deeplift_baseline == "zero" ? attr::Baseline::Kind::Zero : attr::Baseline::Kind::TrainingMean;
    if (m.kind == attr::MethodKind::LRP) m.composite = attr::LRPComposite::preset(m.composite.name, c.methods.lrp_eps);
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: invalid manifest json: ") + e.what());
    }
    if (!j.contains("config_toml") || !j["config_toml"].is_string())
      throw ConfigError("config: manifest has no config_toml entry");
    return parse_config(j["config_toml"].get<std::string>());
  }
  try {
    return from_table(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
}

ExperimentConfig load_config(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw ConfigError("config file not found: " + p.string());
  return parse_config(io::read_text(p));
}

std::string to_toml(const ExperimentConfig& c) {
  std::ostringstream os;
  os << toml::toml_formatter(to_table(c)) << "\n";
  return os.str();
}

std::string to_json(const ExperimentConfig& c) {
  std::ostringstream os;
  os << toml::json_formatter(to_table(c));
  return os.str();
}

}  // namespace gtx::harness
