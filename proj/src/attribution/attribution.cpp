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
#include "attribution/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <json.hpp>
#include <random>

#include "core/error.hpp"
#include "core/io.hpp"
#include "core/rng.hpp"

namespace gtx::attr {

using net::Node;
using net::NodeKind;
using net::Tensor;

void RuleSpec::validate() const {
  if (rule == Rule::Epsilon && !(eps > 0)) throw ConfigError("lrp: epsilon must be positive");
  if (rule == Rule::AlphaBeta && std::abs(alpha - beta - 1.0) > 1e-12)
    throw ConfigError("lrp: alpha - beta must equal 1");
}

LRPComposite LRPComposite::preset(const std::string& name, double eps) {
  const RuleSpec epsilon{Rule::Epsilon, eps};
  const RuleSpec a2b1{Rule::AlphaBeta, eps, 2.0, 1.0};
  const RuleSpec zplus{Rule::ZPlus, eps};
  const RuleSpec flat{Rule::Flat, eps};
  LRPComposite c;
  c.name = name;
  if (name == "EpsilonAlpha2Beta1") {
    c.first = a2b1, c.middle = a2b1, c.last = epsilon;
  } else if (name == "EpsilonAlpha2Beta1Flat") {
    c.first = flat, c.middle = a2b1, c.last = epsilon;
  } else if (name == "EpsilonPlus") {
    c.first = zplus, c.middle = zplus, c.last = epsilon;
  } else if (name == "EpsilonPlusFlat") {
    c.first = flat, c.middle = zplus, c.last = epsilon;
  } else {
    throw ConfigError("unknown LRP composite '" + name + "'");
  }
  return c;
}

LRPComposite LRPComposite::uniform(RuleSpec r) {
  LRPComposite c;
  c.first = c.middle = c.last = r;
  if (r.rule == Rule::Zero) c.junction_eps = 0.0;
  else if (r.rule == Rule::Epsilon) c.junction_eps = r.eps;
  return c;
}

namespace {

const char* kind_name(MethodKind k) {
  switch (k) {
    case MethodKind::Gradient: return "Gradient";
    case MethodKind::InputXGradient: return "InputXGradient";
    case MethodKind::SmoothGrad: return "SmoothGrad";
    case MethodKind::GuidedBackprop: return "GuidedBackprop";
    case MethodKind::ExcitationBackprop: return "ExcitationBackprop";
    case MethodKind::GradCAM: return "GradCAM";
    case MethodKind::GuidedGradCAM: return "GuidedGradCAM";
    case MethodKind::DeepLift: return "DeepLift";
    case MethodKind::LRP: return "LRP";
  }
  return "?";
}

const char* rule_name(Rule r) {
  switch (r) {
    case Rule::Zero: return "zero";
    case Rule::Epsilon: return "epsilon";
    case Rule::AlphaBeta: return "alphabeta";
    case Rule::ZPlus: return "zplus";
    case Rule::Flat: return "flat";
  }
  return "?";
}

}  // namespace

std::string Method::name() const {
  std::string n = kind_name(kind);
  if ((kind == MethodKind::GradCAM || kind == MethodKind::GuidedGradCAM) && !tap.empty()) n += "_" + tap;
  if (kind == MethodKind::LRP) n += "_" + composite.name;
  return n;
}

std::string Method::params_json() const {
  nlohmann::ordered_json j;
  j["method"] = name();
  switch (kind) {
    case MethodKind::SmoothGrad:
      j["noise_level"] = noise_level;
      j["n_samples"] = n_samples;
      j["seed"] = seed;
      break;
    case MethodKind::GradCAM:
    case MethodKind::GuidedGradCAM:
      j["tap"] = tap.empty() ? "last" : tap;
      break;
    case MethodKind::DeepLift:
      j["baseline"] = baseline.kind == Baseline::Kind::Zero           ? "zero"
                      : baseline.kind == Baseline::Kind::TrainingMean ? "training_mean"
                                                                      : "custom";
      break;
    case MethodKind::LRP: {
      auto rule = [](const RuleSpec& r) {
        nlohmann::ordered_json o{{"rule", rule_name(r.rule)}};
        if (r.rule == Rule::Epsilon) o["eps"] = r.eps;
        if (r.rule == Rule::AlphaBeta) {
          o["alpha"] = r.alpha;
          o["beta"] = r.beta;
        }
        return o;
      };
      j["first"] = rule(composite.first);
      j["middle"] = rule(composite.middle);
      j["last"] = rule(composite.last);
      j["junction_eps"] = composite.junction_eps;
      break;
    }
    default: break;
  }
  return j.dump();
}

void Method::validate() const {
  if (kind == MethodKind::SmoothGrad) {
    if (!(noise_level >= 0)) throw ConfigError("smoothgrad: noise_level must be >= 0");
    if (n_samples < 1) throw ConfigError("smoothgrad: n must be >= 1");
  }
  if (kind == MethodKind::LRP) {
    composite.first.validate();
    composite.middle.validate();
    composite.last.validate();
  }
}

Method parse_method(const std::string& text) {
  Method m;
  auto split_tap = [&](const std::string& base) -> bool {
    if (text == base) return true;
    if (text.rfind(base + ":", 0) == 0 || text.rfind(base + "_", 0) == 0) {
      m.tap = text.substr(base.size() + 1);
      return true;
    }
    return false;
  };
  if (text == "Gradient") m.kind = MethodKind::Gradient;
  else if (text == "InputXGradient") m.kind = MethodKind::InputXGradient;
  else if (text == "SmoothGrad") m.kind = MethodKind::SmoothGrad;
  else if (text == "GuidedBackprop") m.kind = MethodKind::GuidedBackprop;
  else if (text == "ExcitationBackprop") m.kind = MethodKind::ExcitationBackprop;
  else if (text == "DeepLift") m.kind = MethodKind::DeepLift;
  else if (split_tap("GuidedGradCAM")) m.kind = MethodKind::GuidedGradCAM;
  else if (split_tap("GradCAM")) m.kind = MethodKind::GradCAM;
  else if (text.rfind("LRP_", 0) == 0) {
    m.kind = MethodKind::LRP;
    m.composite = LRPComposite::preset(text.substr(4));
  } else {
    throw ConfigError("unknown attribution method '" + text + "'");
  }
  return m;
}

std::vector<std::string> all_method_names() {
  return {"Gradient",      "InputXGradient",        "SmoothGrad",
          "GuidedBackprop", "ExcitationBackprop",   "GradCAM",
          "GuidedGradCAM", "DeepLift",              "LRP_EpsilonAlpha2Beta1",
          "LRP_EpsilonAlpha2Beta1Flat", "LRP_EpsilonPlus", "LRP_EpsilonPlusFlat"};
}

namespace {

Tensor one_hot(const net::Network& net, std::size_t n, std::size_t target, const Tensor* scale = nullptr) {
  if (target >= net.output_size()) throw ConfigError("explain: target index out of range");
  Tensor t(n, net.output_size(), {1, 1, 1});
  for (std::size_t s = 0; s < n; ++s) t.sample(s)[target] = scale ? scale->sample(s)[target] : 1.0;
  return t;
}

vol::Volume to_volume(const Tensor& t, const vol::Volume& like) {
  return vol::Volume(like.dims(), like.spacing(), std::vector<double>(t.sample(0), t.sample(0) + t.per_sample()));
}

void check_input(const net::Network& net, const vol::Volume& x) {
  const auto& in = net.spec().input;
  if (x.dims().nx != in.w || x.dims().ny != in.h || x.dims().nz != in.d)
    throw ShapeError("explain: input dims do not match the network input");
}

net::Network folded(const net::Network& net) { return net.folded() ? net : net::fold_batchnorm(net); }

std::string resolve_tap(const net::Network& net, const std::string& tap) {
  const auto taps = net.taps();
  if (tap.empty()) {
    if (taps.empty()) throw ConfigError("gradcam: network has no taps");
    return taps.back();
  }
  if (net.tap_node(tap) < 0) throw ConfigError("gradcam: unknown tap '" + tap + "'");
  return tap;
}

}  // namespace

vol::Volume gradient(const net::Network& net, const vol::Volume& x, std::size_t target, net::ReluMode mode) {
  check_input(net, x);
  net::Cache c;
  net::forward(net, net::stack_one(x), net::Mode::Eval, &c);
  net::BackwardOptions opt;
  opt.relu = mode;
  opt.param_grads = false;
  const auto g = net::backward(net, c, one_hot(net, 1, target), opt);
  return to_volume(g.input, x);
}

vol::Volume smoothgrad(const net::Network& net, const vol::Volume& x, double noise_level, std::size_t n,
                       std::uint64_t seed, std::size_t target) {
  if (n < 1) throw ConfigError("smoothgrad: n must be >= 1");
  if (!(noise_level >= 0)) throw ConfigError("smoothgrad: noise_level must be >= 0");
  const double sigma = noise_level * (x.max() - x.min());
  vol::Volume acc(x.dims(), x.spacing());
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = make_stream(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    vol::Volume noisy = x;
    for (auto& v : noisy.values()) v += sigma * normal(rng);
    const auto g = gradient(net, noisy, target);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
  }
  for (auto& v : acc.values()) v /= static_cast<double>(n);
  return acc;
}

vol::Volume gradcam_raw(const net::Network& net, const vol::Volume& x, const std::string& tap_name, std::size_t target) {
  check_input(net, x);
  const int tap = net.tap_node(resolve_tap(net, tap_name));
  net::Cache c;
  net::forward(net, net::stack_one(x), net::Mode::Eval, &c);
  net::BackwardOptions opt;
  opt.param_grads = false;
  opt.keep_node_grads = true;
  const auto g = net::backward(net, c, one_hot(net, 1, target), opt);
  const Tensor& a = c.out[static_cast<std::size_t>(tap)];
  const Tensor& da = g.node_grads[static_cast<std::size_t>(tap)];
  const std::size_t sp = a.s.count();
  vol::Volume map({a.s.w, a.s.h, a.s.d}, x.spacing());
  for (std::size_t ch = 0; ch < a.c; ++ch) {
    double alpha = 0;
    for (std::size_t k = 0; k < sp; ++k) alpha += da.sample(0)[ch * sp + k];
    alpha /= static_cast<double>(sp);
    for (std::size_t k = 0; k < sp; ++k) map[k] += alpha * a.sample(0)[ch * sp + k];
  }
  for (auto& v : map.values()) v = std::max(v, 0.0);
  return map;
}

vol::Volume gradcam(const net::Network& net, const vol::Volume& x, const std::string& tap, std::size_t target) {
  auto raw = gradcam_raw(net, x, tap, target);
  auto up = vol::upsample(raw, x.dims());
  return vol::Volume(x.dims(), x.spacing(), std::move(up.values()));
}

DeepLiftResult deeplift_rescale(const net::Network& net_in, const vol::Volume& x, const vol::Volume& baseline,
                                std::size_t target) {
  check_input(net_in, x);
  vol::require_same_dims(x.dims(), baseline.dims(), "deeplift baseline");
  const auto net = folded(net_in);
  net::Cache cx, cb;
  const Tensor yx = net::forward(net, net::stack_one(x), net::Mode::Eval, &cx);
  const Tensor yb = net::forward(net, net::stack_one(baseline), net::Mode::Eval, &cb);
  net::BackwardOptions opt;
  opt.relu = net::ReluMode::DeepLiftRescale;
  opt.reference = &cb;
  opt.param_grads = false;
  const auto g = net::backward(net, cx, one_hot(net, 1, target), opt);
  DeepLiftResult r;
  r.map = vol::Volume(x.dims(), x.spacing());
  for (std::size_t k = 0; k < x.size(); ++k) r.map[k] = (x[k] - baseline[k]) * g.input.v[k];
  r.ledger = g.ledger;
  r.delta = yx.sample(0)[target] - yb.sample(0)[target];
  return r;
}

namespace {

// A linear map z = W a (+ b) on one sample, exposed through forward and
// transposed products so every rule can be written once.
struct LinearOp {
  std::size_t in_size = 0, out_size = 0;
  std::vector<double> w, ones;  // ones: structural connectivity for the flat rule
  std::vector<double> b;        // empty when bias-free
  std::function<void(const double*, const double*, double*)> fwd;   // z = W a
  std::function<void(const double*, const double*, double*)> bwdT;  // out += W^T s
};

LinearOp make_op(const net::Network& net, const Node& nd, const Tensor& in) {
  LinearOp op;
  const auto& P = net.params();
  op.in_size = in.per_sample();
  if (nd.b_len) op.b.assign(P.begin() + static_cast<long>(nd.b_off), P.begin() + static_cast<long>(nd.b_off + nd.b_len));
  if (nd.kind == NodeKind::Conv) {
    const auto g = nd.geom;
    op.out_size = g.cout * g.out.count();
    op.w.assign(P.begin() + static_cast<long>(nd.w_off), P.begin() + static_cast<long>(nd.w_off + nd.w_len));
    op.ones.assign(op.w.size(), 1.0);
    op.fwd = [g](const double* a, const double* w, double* z) { net::conv_forward(a, g, w, nullptr, z); };
    op.bwdT = [g](const double* s, const double* w, double* out) { net::conv_backward_data(s, g, w, out); };
    if (!op.b.empty()) {
      std::vector<double> full(op.out_size);
      for (std::size_t c = 0; c < g.cout; ++c)
        std::fill_n(full.begin() + static_cast<long>(c * g.out.count()), g.out.count(), op.b[c]);
      op.b = std::move(full);
    }
    return op;
  }
  // Dense and GAP share the explicit matrix form.
  std::size_t rows, cols;
  if (nd.kind == NodeKind::Dense) {
    rows = nd.out_features;
    cols = nd.in_features;
    op.w.assign(P.begin() + static_cast<long>(nd.w_off), P.begin() + static_cast<long>(nd.w_off + nd.w_len));
    op.ones.assign(op.w.size(), 1.0);
  } else {
    const std::size_t sp = in.s.count();
    rows = in.c;
    cols = in.c * sp;
    op.w.assign(rows * cols, 0.0);
    op.ones.assign(rows * cols, 0.0);
    for (std::size_t c = 0; c < rows; ++c)
      for (std::size_t k = 0; k < sp; ++k) {
        op.w[c * cols + c * sp + k] = 1.0 / static_cast<double>(sp);
        op.ones[c * cols + c * sp + k] = 1.0;
      }
  }
  op.out_size = rows;
  op.fwd = [rows, cols](const double* a, const double* w, double* z) {
    for (std::size_t o = 0; o < rows; ++o) {
      double s = 0;
      for (std::size_t k = 0; k < cols; ++k) s += w[o * cols + k] * a[k];
      z[o] = s;
    }
  };
  op.bwdT = [rows, cols](const double* s, const double* w, double* out) {
    for (std::size_t o = 0; o < rows; ++o)
      for (std::size_t k = 0; k < cols; ++k) out[k] += w[o * cols + k] * s[o];
  };
  return op;
}

// Relevance of the inputs of a linear map under one rule.
std::vector<double> apply_rule(const LinearOp& op, const RuleSpec& rule, const double* a, const double* r_out) {
  const std::size_t ni = op.in_size, no = op.out_size;
  std::vector<double> r_in(ni, 0.0);
  auto bias = [&](std::size_t j) { return op.b.empty() ? 0.0 : op.b[j]; };
  switch (rule.rule) {
    case Rule::Zero:
    case Rule::Epsilon: {
      std::vector<double> z(no), s(no), c(ni, 0.0);
      op.fwd(a, op.w.data(), z.data());
      for (std::size_t j = 0; j < no; ++j) {
        const double zj = z[j] + bias(j);
        if (rule.rule == Rule::Zero) s[j] = zj == 0.0 ? 0.0 : r_out[j] / zj;
        else s[j] = r_out[j] / (zj + (zj >= 0.0 ? rule.eps : -rule.eps));
      }
      op.bwdT(s.data(), op.w.data(), c.data());
      for (std::size_t i = 0; i < ni; ++i) r_in[i] = a[i] * c[i];
      break;
    }
    case Rule::AlphaBeta:
    case Rule::ZPlus: {
      const double alpha = rule.rule == Rule::ZPlus ? 1.0 : rule.alpha;
      const double beta = rule.rule == Rule::ZPlus ? 0.0 : rule.beta;
      std::vector<double> ap(ni), an(ni), wp(op.w.size()), wn(op.w.size());
      for (std::size_t i = 0; i < ni; ++i) {
        ap[i] = std::max(a[i], 0.0);
        an[i] = std::min(a[i], 0.0);
      }
      for (std::size_t k = 0; k < op.w.size(); ++k) {
        wp[k] = std::max(op.w[k], 0.0);
        wn[k] = std::min(op.w[k], 0.0);
      }
      std::vector<double> t1(no), t2(no), zp(no), zn(no);
      op.fwd(ap.data(), wp.data(), t1.data());
      op.fwd(an.data(), wn.data(), t2.data());
      for (std::size_t j = 0; j < no; ++j) zp[j] = t1[j] + t2[j] + std::max(bias(j), 0.0);
      op.fwd(ap.data(), wn.data(), t1.data());
      op.fwd(an.data(), wp.data(), t2.data());
      for (std::size_t j = 0; j < no; ++j) zn[j] = t1[j] + t2[j] + std::min(bias(j), 0.0);
      std::vector<double> sp(no), sn(no);
      for (std::size_t j = 0; j < no; ++j) {
        sp[j] = zp[j] > 0.0 ? r_out[j] / zp[j] : 0.0;
        sn[j] = zn[j] < 0.0 ? r_out[j] / zn[j] : 0.0;
      }
      std::vector<double> c_pp(ni, 0.0), c_pn(ni, 0.0), c_np(ni, 0.0), c_nn(ni, 0.0);
      op.bwdT(sp.data(), wp.data(), c_pp.data());
      op.bwdT(sp.data(), wn.data(), c_pn.data());
      if (beta != 0.0) {
        op.bwdT(sn.data(), wn.data(), c_np.data());
        op.bwdT(sn.data(), wp.data(), c_nn.data());
      }
      for (std::size_t i = 0; i < ni; ++i)
        r_in[i] = alpha * (ap[i] * c_pp[i] + an[i] * c_pn[i]) - beta * (ap[i] * c_np[i] + an[i] * c_nn[i]);
      break;
    }
    case Rule::Flat: {
      std::vector<double> ones_in(ni, 1.0), count(no), s(no);
      op.fwd(ones_in.data(), op.ones.data(), count.data());
      for (std::size_t j = 0; j < no; ++j) s[j] = count[j] > 0 ? r_out[j] / count[j] : 0.0;
      op.bwdT(s.data(), op.ones.data(), r_in.data());
      break;
    }
  }
  return r_in;
}

template <class LinearFn>
Tensor propagate(const net::Network& net, const net::Cache& c, std::size_t target, double junction_eps,
                 LinearFn&& linear) {
  const auto& nodes = net.nodes();
  std::vector<Tensor> R(nodes.size());
  Tensor r_input(1, c.input.c, c.input.s);
  R.back() = Tensor(1, net.output_size(), {1, 1, 1});
  R.back().v[target] = c.out.back().v[target];
  auto slot = [&](int idx) -> Tensor& {
    if (idx == -1) return r_input;
    auto& t = R[static_cast<std::size_t>(idx)];
    if (t.v.empty()) {
      const auto& o = c.out[static_cast<std::size_t>(idx)];
      t = Tensor(1, o.c, o.s);
    }
    return t;
  };
  auto input_of = [&](int idx) -> const Tensor& { return idx == -1 ? c.input : c.out[static_cast<std::size_t>(idx)]; };
  for (std::size_t i = nodes.size(); i-- > 0;) {
    const Node& nd = nodes[i];
    if (R[i].v.empty()) continue;
    switch (nd.kind) {
      case NodeKind::BatchNorm:
        throw ConfigError("lrp: network contains an unfolded batchnorm layer");
      case NodeKind::ReLU: {
        Tensor& dst = slot(nd.inputs[0]);
        for (std::size_t k = 0; k < dst.v.size(); ++k) dst.v[k] += R[i].v[k];
        break;
      }
      case NodeKind::Add: {
        const Tensor& a = input_of(nd.inputs[0]);
        const Tensor& b = input_of(nd.inputs[1]);
        Tensor& ra = slot(nd.inputs[0]);
        Tensor& rb = slot(nd.inputs[1]);
        for (std::size_t k = 0; k < a.v.size(); ++k) {
          const double z = a.v[k] + b.v[k];
          const double d = z + (z >= 0.0 ? junction_eps : -junction_eps);
          if (d == 0.0) continue;
          ra.v[k] += a.v[k] / d * R[i].v[k];
          rb.v[k] += b.v[k] / d * R[i].v[k];
        }
        break;
      }
      default: {
        const Tensor& a = input_of(nd.inputs[0]);
        const auto r_in = linear(nd, i, a, R[i]);
        Tensor& dst = slot(nd.inputs[0]);
        for (std::size_t k = 0; k < r_in.size(); ++k) dst.v[k] += r_in[k];
      }
    }
  }
  return r_input;
}

}  // namespace

vol::Volume lrp(const net::Network& net_in, const vol::Volume& x, const LRPComposite& comp, std::size_t target) {
  check_input(net_in, x);
  comp.first.validate();
  comp.middle.validate();
  comp.last.validate();
  const auto net = folded(net_in);
  if (target >= net.output_size()) throw ConfigError("lrp: target index out of range");
  net::Cache c;
  net::forward(net, net::stack_one(x), net::Mode::Eval, &c);
  const std::size_t last = net.output_node();
  auto r = propagate(net, c, target, comp.junction_eps, [&](const Node& nd, std::size_t idx, const Tensor& a, const Tensor& rout) {
    const RuleSpec& rule = nd.inputs[0] == -1 ? comp.first : idx == last ? comp.last : comp.middle;
    return apply_rule(make_op(net, nd, a), rule, a.sample(0), rout.sample(0));
  });
  return to_volume(r, x);
}

namespace {

// z+ relevance through a conv, one edge at a time.
std::vector<double> excite_conv(const net::ConvGeom& g, const double* a, const double* w, const double* b,
                                const double* r_out) {
  std::vector<double> r_in(g.cin * g.in.count(), 0.0);
  const std::size_t kv = g.kernel_volume();
  auto for_edges = [&](std::size_t co, std::size_t oz, std::size_t oy, std::size_t ox, auto&& fn) {
    for (std::size_t ci = 0; ci < g.cin; ++ci)
      for (std::size_t kz = 0; kz < g.kz; ++kz) {
        const long iz = static_cast<long>(oz * g.stride + kz) - static_cast<long>(g.padz);
        if (iz < 0 || iz >= static_cast<long>(g.in.d)) continue;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.in.h)) continue;
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.in.w)) continue;
            const std::size_t in_idx =
                ci * g.in.count() + (static_cast<std::size_t>(iz) * g.in.h + static_cast<std::size_t>(iy)) * g.in.w +
                static_cast<std::size_t>(ix);
            const double wt = w[((co * g.cin + ci) * g.kz + kz) * g.k * g.k + ky * g.k + kx];
            fn(in_idx, a[in_idx] * wt);
          }
        }
      }
  };
  (void)kv;
  for (std::size_t co = 0; co < g.cout; ++co)
    for (std::size_t oz = 0; oz < g.out.d; ++oz)
      for (std::size_t oy = 0; oy < g.out.h; ++oy)
        for (std::size_t ox = 0; ox < g.out.w; ++ox) {
          const std::size_t j = co * g.out.count() + (oz * g.out.h + oy) * g.out.w + ox;
          double zp = b ? std::max(b[co], 0.0) : 0.0;
          for_edges(co, oz, oy, ox, [&](std::size_t, double p) { zp += std::max(p, 0.0); });
          if (!(zp > 0.0)) continue;
          const double f = r_out[j] / zp;
          for_edges(co, oz, oy, ox, [&](std::size_t i, double p) { r_in[i] += std::max(p, 0.0) * f; });
        }
  return r_in;
}

}  // namespace

vol::Volume excitation_backprop(const net::Network& net_in, const vol::Volume& x, std::size_t target) {
  check_input(net_in, x);
  const auto net = folded(net_in);
  if (target >= net.output_size()) throw ConfigError("excitation_backprop: target index out of range");
  net::Cache c;
  net::forward(net, net::stack_one(x), net::Mode::Eval, &c);
  const auto& P = net.params();
  const double junction_eps = LRPComposite{}.junction_eps;
  auto r = propagate(net, c, target, junction_eps, [&](const Node& nd, std::size_t, const Tensor& a, const Tensor& rout) {
    const double* av = a.sample(0);
    const double* ro = rout.sample(0);
    if (nd.kind == NodeKind::Conv)
      return excite_conv(nd.geom, av, P.data() + nd.w_off, nd.b_len ? P.data() + nd.b_off : nullptr, ro);
    std::vector<double> r_in(a.per_sample(), 0.0);
    if (nd.kind == NodeKind::GlobalAvgPool) {
      const std::size_t sp = a.s.count();
      for (std::size_t ch = 0; ch < a.c; ++ch) {
        double zp = 0;
        for (std::size_t k = 0; k < sp; ++k) zp += std::max(av[ch * sp + k] / static_cast<double>(sp), 0.0);
        if (!(zp > 0.0)) continue;
        for (std::size_t k = 0; k < sp; ++k)
          r_in[ch * sp + k] = std::max(av[ch * sp + k] / static_cast<double>(sp), 0.0) / zp * ro[ch];
      }
      return r_in;
    }
    for (std::size_t o = 0; o < nd.out_features; ++o) {
      const double* w = P.data() + nd.w_off + o * nd.in_features;
      double zp = nd.b_len ? std::max(P[nd.b_off + o], 0.0) : 0.0;
      for (std::size_t k = 0; k < nd.in_features; ++k) zp += std::max(av[k] * w[k], 0.0);
      if (!(zp > 0.0)) continue;
      for (std::size_t k = 0; k < nd.in_features; ++k) r_in[k] += std::max(av[k] * w[k], 0.0) / zp * ro[o];
    }
    return r_in;
  });
  return to_volume(r, x);
}

Heatmap explain(const net::Network& net, const vol::Volume& x, const Method& m, std::size_t target) {
  m.validate();
  check_input(net, x);
  Heatmap h;
  h.method = m.name();
  h.params = m.params_json();
  h.target = target;
  h.net_hash = net.hash();
  h.seed = m.seed;
  {
    const Tensor y = net::forward(net, net::stack_one(x), net::Mode::Eval);
    if (target >= y.c) throw ConfigError("explain: target index out of range");
    h.output = y.sample(0)[target];
  }
  switch (m.kind) {
    case MethodKind::Gradient:
      h.map = gradient(net, x, target);
      break;
    case MethodKind::InputXGradient: {
      h.map = gradient(net, x, target);
      for (std::size_t k = 0; k < x.size(); ++k) h.map[k] *= x[k];
      break;
    }
    case MethodKind::SmoothGrad:
      h.map = smoothgrad(net, x, m.noise_level, m.n_samples, m.seed, target);
      break;
    case MethodKind::GuidedBackprop:
      h.map = gradient(net, x, target, net::ReluMode::Guided);
      break;
    case MethodKind::ExcitationBackprop:
      h.map = excitation_backprop(net, x, target);
      break;
    case MethodKind::GradCAM:
      h.map = gradcam(net, x, m.tap, target);
      break;
    case MethodKind::GuidedGradCAM: {
      h.map = gradient(net, x, target, net::ReluMode::Guided);
      const auto cam = gradcam(net, x, m.tap, target);
      for (std::size_t k = 0; k < x.size(); ++k) h.map[k] *= cam[k];
      break;
    }
    case MethodKind::DeepLift: {
      vol::Volume base(x.dims(), x.spacing());
      if (m.baseline.kind != Baseline::Kind::Zero) {
        if (m.baseline.volume.size() == 0) throw ConfigError("deeplift: baseline volume not provided");
        vol::require_same_dims(x.dims(), m.baseline.volume.dims(), "deeplift baseline");
        base = m.baseline.volume;
      }
      auto r = deeplift_rescale(net, x, base, target);
      h.map = std::move(r.map);
      h.ledger = r.ledger;
      break;
    }
    case MethodKind::LRP:
      h.map = lrp(net, x, m.composite, target);
      break;
  }
  if (!h.map.all_finite()) throw NumericError("explain: " + h.method + " produced non-finite values");
  return h;
}

void write_heatmap(const Heatmap& h, const std::filesystem::path& p) {
  io::write_volume(p, h.map, io::DType::F32);
  nlohmann::ordered_json j;
  j["method"] = h.method;
  j["params"] = nlohmann::ordered_json::parse(h.params.empty() ? "{}" : h.params);
  j["target"] = h.target;
  j["checkpoint_hash"] = h.net_hash;
  j["seed"] = h.seed;
  j["output"] = h.output;
  j["ledger"] = h.ledger;
  io::write_text(p.string() + ".json", j.dump(2) + "\n");
}

Heatmap read_heatmap(const std::filesystem::path& p) {
  Heatmap h;
  h.map = io::read_volume(p);
  const auto side = std::filesystem::path(p.string() + ".json");
  if (std::filesystem::exists(side)) {
    const auto j = nlohmann::ordered_json::parse(io::read_text(side));
    h.method = j.value("method", "");
    h.params = j.contains("params") ? j["params"].dump() : "{}";
    h.target = j.value("target", std::size_t{0});
    h.net_hash = j.value("checkpoint_hash", "");
    h.seed = j.value("seed", std::uint64_t{0});
    h.output = j.value("output", 0.0);
    h.ledger = j.value("ledger", 0.0);
  }
  return h;
}

}  // namespace gtx::attr
