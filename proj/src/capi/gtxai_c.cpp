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
#include "gtxai/gtxai.h"

#include <cstring>
#include <sstream>
#include <string>

#include "attribution/attribution.hpp"
#include "core/error.hpp"
#include "core/io.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "net/train.hpp"

struct gtx_config {
  gtx::harness::ExperimentConfig cfg;
};

struct gtx_volume {
  gtx::vol::Volume v;
};

struct gtx_network {
  gtx::net::Network net;
};

namespace {

thread_local std::string g_last_error;

template <class F>
gtx_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return GTX_OK;
  } catch (const gtx::ConfigError& e) {
    g_last_error = e.what();
    return GTX_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GTX_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return GTX_ERR_RUNTIME;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw gtx::ConfigError(std::string("null argument: ") + what);
}

std::vector<std::string> split_list(const char* s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  if (out.empty()) throw gtx::ConfigError("empty list");
  return out;
}

}  // namespace

extern "C" {

const char* gtx_version(void) { return gtx::harness::kToolVersion; }

const char* gtx_last_error(void) { return g_last_error.c_str(); }

gtx_status gtx_config_default(gtx_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new gtx_config{};
  });
}

gtx_status gtx_config_load(const char* path, gtx_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gtx_config{gtx::harness::load_config(path)};
  });
}

gtx_status gtx_config_parse(const char* text, gtx_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new gtx_config{gtx::harness::parse_config(text)};
  });
}

void gtx_config_free(gtx_config* cfg) { delete cfg; }

gtx_status gtx_config_set_seeds(gtx_config* cfg, const uint64_t* seeds, size_t n) {
  return guarded([&] {
    need(cfg, "cfg");
    need(seeds, "seeds");
    if (n == 0) throw gtx::ConfigError("at least one seed is required");
    cfg->cfg.seeds.assign(seeds, seeds + n);
  });
}

gtx_status gtx_config_set_stages(gtx_config* cfg, const char* stages) {
  return guarded([&] {
    need(cfg, "cfg");
    need(stages, "stages");
    std::vector<gtx::harness::Stage> s;
    for (const auto& name : split_list(stages)) s.push_back(gtx::harness::stage_from_string(name));
    cfg->cfg.stages = std::move(s);
  });
}

gtx_status gtx_config_set_methods(gtx_config* cfg, const char* methods) {
  return guarded([&] {
    need(cfg, "cfg");
    need(methods, "methods");
    auto names = split_list(methods);
    for (const auto& n : names) gtx::attr::parse_method(n);
    cfg->cfg.methods.names = std::move(names);
  });
}

gtx_status gtx_config_validate(const gtx_config* cfg) {
  return guarded([&] {
    need(cfg, "cfg");
    cfg->cfg.validate();
  });
}

gtx_status gtx_config_to_toml(const gtx_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    need(cfg, "cfg");
    const auto s = gtx::harness::to_toml(cfg->cfg);
    if (needed) *needed = s.size() + 1;
    if (buf && cap > s.size()) std::memcpy(buf, s.c_str(), s.size() + 1);
  });
}

gtx_status gtx_run(const gtx_config* cfg, const char* command, const char* out_root) {
  return guarded([&] {
    need(cfg, "cfg");
    need(command, "command");
    need(out_root, "out_root");
    namespace h = gtx::harness;
    const auto& c = cfg->cfg;
    c.validate();
    const auto paths = h::run_paths(c, out_root);
    const std::string cmd = command;
    if (cmd == "generate")
      h::generate(c, paths);
    else if (cmd == "correct")
      h::correct(c, paths);
    else if (cmd == "train")
      h::train_models(c, paths);
    else if (cmd == "explain")
      h::explain(c, paths);
    else if (cmd == "evaluate")
      h::evaluate(c, paths);
    else if (cmd == "report")
      h::report(c, paths);
    else if (cmd == "render")
      h::render(c, paths);
    else if (cmd == "pipeline")
      h::pipeline(c, paths);
    else
      throw gtx::ConfigError("unknown command '" + cmd + "'");
  });
}

gtx_status gtx_volume_create(size_t nx, size_t ny, size_t nz, double spacing_mm, const double* values,
                             gtx_volume** out) {
  return guarded([&] {
    need(out, "out");
    if (nx == 0 || ny == 0 || nz == 0) throw gtx::ConfigError("volume dimensions must be positive");
    if (!(spacing_mm > 0)) throw gtx::ConfigError("volume spacing must be positive");
    gtx::vol::Volume v({nx, ny, nz}, {spacing_mm, spacing_mm, spacing_mm});
    if (values) std::copy(values, values + v.size(), v.values().begin());
    *out = new gtx_volume{std::move(v)};
  });
}

gtx_status gtx_volume_read(const char* path, gtx_volume** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new gtx_volume{gtx::io::read_volume(path)};
  });
}

gtx_status gtx_volume_write(const gtx_volume* v, const char* path) {
  return guarded([&] {
    need(v, "volume");
    need(path, "path");
    gtx::io::write_volume(path, v->v);
  });
}

void gtx_volume_free(gtx_volume* v) { delete v; }

gtx_status gtx_volume_dims(const gtx_volume* v, size_t dims[3]) {
  return guarded([&] {
    need(v, "volume");
    need(dims, "dims");
    dims[0] = v->v.dims().nx;
    dims[1] = v->v.dims().ny;
    dims[2] = v->v.dims().nz;
  });
}

gtx_status gtx_volume_copy_data(const gtx_volume* v, double* buf, size_t n) {
  return guarded([&] {
    need(v, "volume");
    need(buf, "buf");
    if (n < v->v.size()) throw gtx::ConfigError("buffer smaller than the volume");
    std::copy(v->v.values().begin(), v->v.values().end(), buf);
  });
}

gtx_status gtx_network_load(const char* checkpoint, gtx_network** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = new gtx_network{gtx::net::load_checkpoint(checkpoint).net};
  });
}

void gtx_network_free(gtx_network* net) { delete net; }

gtx_status gtx_network_hash(const gtx_network* net, char buf[17]) {
  return guarded([&] {
    need(net, "network");
    need(buf, "buf");
    const auto h = net->net.hash();
    std::memcpy(buf, h.c_str(), std::min<size_t>(h.size(), 16) + 1);
    buf[16] = '\0';
  });
}

gtx_status gtx_network_predict(const gtx_network* net, const gtx_volume* x, double* out) {
  return guarded([&] {
    need(net, "network");
    need(x, "volume");
    need(out, "out");
    gtx::net::Dataset ds;
    ds.inputs.push_back(&x->v);
    ds.targets.push_back(0.0);
    const std::size_t idx = 0;
    *out = gtx::net::predict(net->net, ds, {&idx, 1}).at(0);
  });
}

gtx_status gtx_explain(const gtx_network* net, const gtx_volume* x, const char* method, uint64_t seed,
                       gtx_volume** out) {
  return guarded([&] {
    need(net, "network");
    need(x, "volume");
    need(method, "method");
    need(out, "out");
    auto m = gtx::attr::parse_method(method);
    m.seed = seed;
    *out = new gtx_volume{gtx::attr::explain(net->net, x->v, m).map};
  });
}

gtx_status gtx_render(const char* heatmap_path, const char* mask_path, const char* out_prefix, long slice) {
  return guarded([&] {
    need(heatmap_path, "heatmap_path");
    need(out_prefix, "out_prefix");
    const auto h = gtx::io::read_volume(heatmap_path);
    std::optional<gtx::vol::RegionMask> mask;
    if (mask_path) mask = gtx::io::read_mask(mask_path);
    std::optional<std::size_t> z;
    if (slice >= 0) z = static_cast<std::size_t>(slice);
    gtx::harness::render_heatmap(h, mask ? &*mask : nullptr, out_prefix, z);
  });
}

}  // extern "C"
