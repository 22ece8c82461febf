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
#include "net/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <random>

#include "core/error.hpp"
#include "core/hash.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"

namespace gtx::net {

namespace {

const char* layer_name(LayerType t) {
  switch (t) {
    case LayerType::Conv: return "conv";
    case LayerType::BatchNorm: return "batchnorm";
    case LayerType::ReLU: return "relu";
    case LayerType::ResBlock: return "resblock";
    case LayerType::GlobalAvgPool: return "gap";
    case LayerType::Dense: return "dense";
    case LayerType::SigmoidHead: return "sigmoid_head";
  }
  return "?";
}

LayerType layer_from_name(const std::string& s) {
  for (auto t : {LayerType::Conv, LayerType::BatchNorm, LayerType::ReLU, LayerType::ResBlock, LayerType::GlobalAvgPool,
                 LayerType::Dense, LayerType::SigmoidHead})
    if (s == layer_name(t)) return t;
  throw ConfigError("unknown layer type '" + s + "'");
}

}  // namespace

std::string NetSpec::to_json() const {
  nlohmann::ordered_json j;
  j["input"] = {input.d, input.h, input.w};
  j["in_channels"] = in_channels;
  j["task"] = task == Task::Regression ? "regression" : "classification";
  auto& l = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& s : layers) {
    nlohmann::ordered_json e;
    e["type"] = layer_name(s.type);
    switch (s.type) {
      case LayerType::Conv:
      case LayerType::ResBlock:
        e["in"] = s.in;
        e["out"] = s.out;
        e["kernel"] = s.kernel;
        e["stride"] = s.stride;
        if (s.type == LayerType::Conv) e["bias"] = s.bias;
        else {
          e["eps"] = s.eps;
          e["momentum"] = s.momentum;
        }
        break;
      case LayerType::BatchNorm:
        e["ch"] = s.in;
        e["eps"] = s.eps;
        e["momentum"] = s.momentum;
        break;
      case LayerType::Dense:
        e["in"] = s.in;
        e["out"] = s.out;
        e["bias"] = s.bias;
        break;
      default: break;
    }
    l.push_back(e);
  }
  return j.dump();
}

NetSpec NetSpec::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NetSpec s;
    const auto in = j.at("input").get<std::array<std::size_t, 3>>();
    s.input = {in[0], in[1], in[2]};
    s.in_channels = j.value("in_channels", std::size_t{1});
    const auto task = j.value("task", std::string("regression"));
    if (task != "regression" && task != "classification") throw ConfigError("unknown task '" + task + "'");
    s.task = task == "regression" ? Task::Regression : Task::Classification;
    for (const auto& e : j.at("layers")) {
      LayerSpec l;
      l.type = layer_from_name(e.at("type").get<std::string>());
      l.in = e.value("in", e.value("ch", std::size_t{0}));
      l.out = e.value("out", l.in);
      l.kernel = e.value("kernel", std::size_t{3});
      l.stride = e.value("stride", std::size_t{1});
      l.bias = e.value("bias", true);
      l.eps = e.value("eps", 1e-5);
      l.momentum = e.value("momentum", 0.1);
      s.layers.push_back(l);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network spec: ") + e.what());
  }
}

NetSpec tiny_resnet(Shape3 input, Task task, std::vector<std::size_t> widths) {
  if (widths.size() != 3) throw ConfigError("tiny-resnet needs three block widths");
  NetSpec s;
  s.input = input;
  s.task = task;
  s.layers.push_back({LayerType::Conv, 1, widths[0], 3, 2, false});
  s.layers.push_back({LayerType::BatchNorm, widths[0], widths[0]});
  s.layers.push_back({LayerType::ReLU});
  s.layers.push_back({LayerType::ResBlock, widths[0], widths[0], 3, 1});
  s.layers.push_back({LayerType::ResBlock, widths[0], widths[1], 3, 2});
  s.layers.push_back({LayerType::ResBlock, widths[1], widths[2], 3, 2});
  s.layers.push_back({LayerType::GlobalAvgPool});
  s.layers.push_back({LayerType::Dense, widths[2], 1, 1, 1, true});
  if (task == Task::Classification) s.layers.push_back({LayerType::SigmoidHead});
  return s;
}

NetSpec linear_net(Shape3 input, bool bias) {
  NetSpec s;
  s.input = input;
  s.layers.push_back({LayerType::Dense, input.count(), 1, 1, 1, bias});
  return s;
}

Network::Network(NetSpec spec) : spec_(std::move(spec)) {
  if (spec_.input.count() == 0 || spec_.in_channels == 0) throw ConfigError("network: empty input shape");
  int cur = -1;
  std::size_t ch = spec_.in_channels;
  Shape3 shape = spec_.input;
  std::size_t n_blocks = 0;

  auto add_conv = [&](int input, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, bool bias,
                      Shape3 in_shape) {
    if (cin != (input == -1 ? spec_.in_channels : nodes_[static_cast<std::size_t>(input)].channels))
      throw ConfigError("network: conv expects " + std::to_string(cin) + " input channels");
    if (cout == 0) throw ConfigError("network: conv needs at least one output channel");
    Node n;
    n.kind = NodeKind::Conv;
    n.inputs = {input};
    n.geom = make_geom(cin, cout, k, stride, in_shape);
    n.channels = cout;
    n.shape = n.geom.out;
    n.bias = bias;
    n.w_off = params_.size();
    n.w_len = n.geom.weight_count();
    params_.resize(params_.size() + n.w_len);
    if (bias) {
      n.b_off = params_.size();
      n.b_len = cout;
      params_.resize(params_.size() + cout);
    }
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size() - 1);
  };
  auto add_bn = [&](int input, std::size_t c, double eps, double momentum) {
    const auto& src = nodes_[static_cast<std::size_t>(input)];
    if (c != src.channels) throw ConfigError("network: batchnorm channel count does not match its input");
    Node n;
    n.kind = NodeKind::BatchNorm;
    n.inputs = {input};
    n.channels = c;
    n.shape = src.shape;
    n.eps = eps;
    n.momentum = momentum;
    n.w_off = params_.size();
    n.w_len = c;
    n.b_off = n.w_off + c;
    n.b_len = c;
    params_.resize(params_.size() + 2 * c);
    n.buf_off = buffers_.size();
    buffers_.resize(buffers_.size() + 2 * c);
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size() - 1);
  };
  auto add_simple = [&](NodeKind kind, std::vector<int> inputs) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    const int first = n.inputs[0];
    n.channels = first == -1 ? spec_.in_channels : nodes_[static_cast<std::size_t>(first)].channels;
    n.shape = first == -1 ? spec_.input : nodes_[static_cast<std::size_t>(first)].shape;
    if (kind == NodeKind::GlobalAvgPool) n.shape = {1, 1, 1};
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size() - 1);
  };

  for (const auto& l : spec_.layers) {
    switch (l.type) {
      case LayerType::Conv:
        cur = add_conv(cur, l.in, l.out, l.kernel, l.stride, l.bias, shape);
        break;
      case LayerType::BatchNorm:
        if (cur == -1) throw ConfigError("network: batchnorm cannot be the first layer");
        cur = add_bn(cur, l.in, l.eps, l.momentum);
        break;
      case LayerType::ReLU:
        cur = add_simple(NodeKind::ReLU, {cur});
        break;
      case LayerType::ResBlock: {
        const int block_in = cur;
        const Shape3 in_shape = shape;
        int a = add_conv(cur, l.in, l.out, l.kernel, l.stride, false, in_shape);
        a = add_bn(a, l.out, l.eps, l.momentum);
        a = add_simple(NodeKind::ReLU, {a});
        a = add_conv(a, l.out, l.out, l.kernel, 1, false, nodes_[static_cast<std::size_t>(a)].shape);
        a = add_bn(a, l.out, l.eps, l.momentum);
        int skip = block_in;
        if (l.in != l.out || l.stride != 1) {
          skip = add_conv(block_in, l.in, l.out, 1, l.stride, false, in_shape);
          skip = add_bn(skip, l.out, l.eps, l.momentum);
        } else if (l.in != ch) {
          throw ConfigError("network: resblock input channels do not match");
        }
        const Shape3 skip_shape = skip == -1 ? spec_.input : nodes_[static_cast<std::size_t>(skip)].shape;
        if (!(nodes_[static_cast<std::size_t>(a)].shape == skip_shape))
          throw ConfigError("network: resblock branch shapes differ");
        const int sum = add_simple(NodeKind::Add, {a, skip});
        cur = add_simple(NodeKind::ReLU, {sum});
        nodes_.back().tap = "block" + std::to_string(++n_blocks);
        break;
      }
      case LayerType::GlobalAvgPool:
        cur = add_simple(NodeKind::GlobalAvgPool, {cur});
        break;
      case LayerType::Dense: {
        if (l.in != ch * shape.count())
          throw ConfigError("network: dense expects " + std::to_string(l.in) + " inputs, incoming tensor has " +
                            std::to_string(ch * shape.count()));
        if (l.out == 0) throw ConfigError("network: dense needs at least one output");
        Node n;
        n.kind = NodeKind::Dense;
        n.inputs = {cur};
        n.in_features = l.in;
        n.out_features = l.out;
        n.channels = l.out;
        n.shape = {1, 1, 1};
        n.bias = l.bias;
        n.w_off = params_.size();
        n.w_len = l.in * l.out;
        params_.resize(params_.size() + n.w_len);
        if (l.bias) {
          n.b_off = params_.size();
          n.b_len = l.out;
          params_.resize(params_.size() + l.out);
        }
        nodes_.push_back(n);
        cur = static_cast<int>(nodes_.size() - 1);
        break;
      }
      case LayerType::SigmoidHead:
        if (spec_.task != Task::Classification) throw ConfigError("network: sigmoid head requires a classification task");
        break;
    }
    if (cur >= 0) {
      ch = nodes_[static_cast<std::size_t>(cur)].channels;
      shape = nodes_[static_cast<std::size_t>(cur)].shape;
      if (shape.count() == 0) throw ConfigError("network: spatial dims collapse to zero");
    }
  }
  if (nodes_.empty() || nodes_.back().kind != NodeKind::Dense)
    throw ConfigError("network: the last layer must be dense");
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].kind == NodeKind::BatchNorm) {
      std::fill_n(params_.begin() + static_cast<long>(nodes_[i].w_off), nodes_[i].w_len, 1.0);
      std::fill_n(buffers_.begin() + static_cast<long>(nodes_[i].buf_off + nodes_[i].channels), nodes_[i].channels, 1.0);
    }
}

int Network::tap_node(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].tap == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> Network::taps() const {
  std::vector<std::string> t;
  for (const auto& n : nodes_)
    if (!n.tap.empty()) t.push_back(n.tap);
  return t;
}

std::size_t Network::count(NodeKind k) const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [k](const Node& n) { return n.kind == k; }));
}

void Network::init(std::uint64_t seed) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (n.kind != NodeKind::Conv && n.kind != NodeKind::Dense) continue;
    const double fan_in = n.kind == NodeKind::Conv ? static_cast<double>(n.geom.cin * n.geom.kernel_volume())
                                                   : static_cast<double>(n.in_features);
    auto rng = make_stream(seed, i);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t k = 0; k < n.w_len; ++k) params_[n.w_off + k] = normal(rng);
    if (n.b_len) std::fill_n(params_.begin() + static_cast<long>(n.b_off), n.b_len, 0.0);
  }
}

std::string Network::hash() const {
  Fnv1a h;
  h.update(spec_.to_json());
  h.update(folded_ ? "folded" : "plain");
  h.update(std::string_view(reinterpret_cast<const char*>(params_.data()), params_.size() * sizeof(double)));
  h.update(std::string_view(reinterpret_cast<const char*>(buffers_.data()), buffers_.size() * sizeof(double)));
  return hex64(h.digest());
}

Network init(const NetSpec& spec, std::uint64_t seed) {
  Network n(spec);
  n.init(seed);
  return n;
}

namespace {

const Tensor& input_of(const Cache& c, int idx) { return idx == -1 ? c.input : c.out[static_cast<std::size_t>(idx)]; }

void check_input(const Network& net, const Tensor& x) {
  if (x.n == 0 || x.c != net.spec().in_channels || !(x.s == net.spec().input))
    throw ShapeError("forward: input tensor does not match network input shape");
}

}  // namespace

Tensor forward(const Network& net, const Tensor& x, Mode mode, Cache* cache) {
  check_input(net, x);
  Cache local;
  Cache& c = cache ? *cache : local;
  c.mode = mode;
  c.input = x;
  const auto& nodes = net.nodes();
  c.out.assign(nodes.size(), Tensor{});
  c.batch_mean.assign(nodes.size(), {});
  c.batch_var.assign(nodes.size(), {});
  const auto& P = net.params();
  const std::size_t n = x.n;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& nd = nodes[i];
    const Tensor& in = input_of(c, nd.inputs[0]);
    Tensor& out = c.out[i];
    out = Tensor(n, nd.channels, nd.shape);
    switch (nd.kind) {
      case NodeKind::Conv: {
        const double* b = nd.b_len ? P.data() + nd.b_off : nullptr;
        parallel_for(n, [&](std::size_t s) { conv_forward(in.sample(s), nd.geom, P.data() + nd.w_off, b, out.sample(s)); });
        break;
      }
      case NodeKind::BatchNorm: {
        const std::size_t sp = nd.shape.count();
        std::vector<double> mean(nd.channels), var(nd.channels);
        if (mode == Mode::Train) {
          const double m = static_cast<double>(n * sp);
          for (std::size_t ch = 0; ch < nd.channels; ++ch) {
            double sum = 0;
            for (std::size_t s = 0; s < n; ++s) {
              const double* p = in.sample(s) + ch * sp;
              for (std::size_t k = 0; k < sp; ++k) sum += p[k];
            }
            mean[ch] = sum / m;
            double sq = 0;
            for (std::size_t s = 0; s < n; ++s) {
              const double* p = in.sample(s) + ch * sp;
              for (std::size_t k = 0; k < sp; ++k) sq += (p[k] - mean[ch]) * (p[k] - mean[ch]);
            }
            var[ch] = sq / m;
          }
          c.batch_mean[i] = mean;
          c.batch_var[i] = var;
        } else {
          const auto& B = net.buffers();
          for (std::size_t ch = 0; ch < nd.channels; ++ch) {
            mean[ch] = B[nd.buf_off + ch];
            var[ch] = B[nd.buf_off + nd.channels + ch];
          }
        }
        for (std::size_t ch = 0; ch < nd.channels; ++ch) {
          const double scale = P[nd.w_off + ch] / std::sqrt(var[ch] + nd.eps);
          const double shift = P[nd.b_off + ch] - mean[ch] * scale;
          for (std::size_t s = 0; s < n; ++s) {
            const double* p = in.sample(s) + ch * sp;
            double* q = out.sample(s) + ch * sp;
            for (std::size_t k = 0; k < sp; ++k) q[k] = p[k] * scale + shift;
          }
        }
        break;
      }
      case NodeKind::ReLU:
        for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] = in.v[k] > 0.0 ? in.v[k] : 0.0;
        break;
      case NodeKind::Add: {
        const Tensor& other = input_of(c, nd.inputs[1]);
        for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] = in.v[k] + other.v[k];
        break;
      }
      case NodeKind::GlobalAvgPool: {
        const std::size_t sp = in.s.count();
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t ch = 0; ch < nd.channels; ++ch) {
            const double* p = in.sample(s) + ch * sp;
            double sum = 0;
            for (std::size_t k = 0; k < sp; ++k) sum += p[k];
            out.sample(s)[ch] = sum / static_cast<double>(sp);
          }
        break;
      }
      case NodeKind::Dense:
        for (std::size_t s = 0; s < n; ++s) {
          const double* a = in.sample(s);
          for (std::size_t o = 0; o < nd.out_features; ++o) {
            const double* w = P.data() + nd.w_off + o * nd.in_features;
            double sum = nd.b_len ? P[nd.b_off + o] : 0.0;
            for (std::size_t k = 0; k < nd.in_features; ++k) sum += w[k] * a[k];
            out.sample(s)[o] = sum;
          }
        }
        break;
    }
  }
  return c.out.back();
}

Gradients backward(const Network& net, const Cache& cache, const Tensor& d_out, const BackwardOptions& opt) {
  const auto& nodes = net.nodes();
  if (cache.out.size() != nodes.size()) throw ShapeError("backward: cache does not belong to this network");
  if (!d_out.same_shape(cache.out.back())) throw ShapeError("backward: output gradient shape mismatch");
  if (opt.relu == ReluMode::DeepLiftRescale) {
    if (!opt.reference || opt.reference->out.size() != nodes.size())
      throw ShapeError("backward: DeepLift needs a reference pass on the same network");
    if (opt.reference->input.n != 1 && opt.reference->input.n != cache.input.n)
      throw ShapeError("backward: reference batch must have one sample or match the input batch");
  }
  const auto& P = net.params();
  const std::size_t n = cache.input.n;
  Gradients g;
  if (opt.param_grads) g.params.assign(P.size(), 0.0);
  std::vector<Tensor> grads(nodes.size());
  grads.back() = d_out;
  g.input = Tensor(n, cache.input.c, cache.input.s);

  auto grad_slot = [&](int idx) -> Tensor& {
    if (idx == -1) return g.input;
    auto& t = grads[static_cast<std::size_t>(idx)];
    if (t.v.empty()) {
      const auto& o = cache.out[static_cast<std::size_t>(idx)];
      t = Tensor(o.n, o.c, o.s);
    }
    return t;
  };

  for (std::size_t ii = nodes.size(); ii-- > 0;) {
    const Node& nd = nodes[ii];
    Tensor& go = grads[ii];
    if (go.v.empty()) continue;  // node does not influence the output
    const Tensor& in = input_of(cache, nd.inputs[0]);
    switch (nd.kind) {
      case NodeKind::Conv: {
        Tensor& gi = grad_slot(nd.inputs[0]);
        parallel_for(n, [&](std::size_t s) { conv_backward_data(go.sample(s), nd.geom, P.data() + nd.w_off, gi.sample(s)); });
        if (opt.param_grads) {
          std::vector<std::vector<double>> dw(n, std::vector<double>(nd.w_len + nd.b_len, 0.0));
          parallel_for(n, [&](std::size_t s) {
            conv_backward_weight(in.sample(s), go.sample(s), nd.geom, dw[s].data(), nd.b_len ? dw[s].data() + nd.w_len : nullptr);
          });
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t k = 0; k < nd.w_len; ++k) g.params[nd.w_off + k] += dw[s][k];
            for (std::size_t k = 0; k < nd.b_len; ++k) g.params[nd.b_off + k] += dw[s][nd.w_len + k];
          }
        }
        break;
      }
      case NodeKind::BatchNorm: {
        Tensor& gi = grad_slot(nd.inputs[0]);
        const std::size_t sp = nd.shape.count();
        const bool train = cache.mode == Mode::Train;
        const auto& B = net.buffers();
        for (std::size_t ch = 0; ch < nd.channels; ++ch) {
          const double mean = train ? cache.batch_mean[ii][ch] : B[nd.buf_off + ch];
          const double var = train ? cache.batch_var[ii][ch] : B[nd.buf_off + nd.channels + ch];
          const double inv = 1.0 / std::sqrt(var + nd.eps);
          const double gamma = P[nd.w_off + ch];
          double sum_g = 0, sum_gx = 0;
          for (std::size_t s = 0; s < n; ++s) {
            const double* x = in.sample(s) + ch * sp;
            const double* d = go.sample(s) + ch * sp;
            for (std::size_t k = 0; k < sp; ++k) {
              sum_g += d[k];
              sum_gx += d[k] * (x[k] - mean) * inv;
            }
          }
          if (opt.param_grads) {
            g.params[nd.w_off + ch] += sum_gx;
            g.params[nd.b_off + ch] += sum_g;
          }
          const double m = static_cast<double>(n * sp);
          for (std::size_t s = 0; s < n; ++s) {
            const double* x = in.sample(s) + ch * sp;
            const double* d = go.sample(s) + ch * sp;
            double* q = gi.sample(s) + ch * sp;
            for (std::size_t k = 0; k < sp; ++k) {
              if (train) {
                const double xh = (x[k] - mean) * inv;
                q[k] += gamma * inv * (d[k] - sum_g / m - xh * sum_gx / m);
              } else {
                q[k] += gamma * inv * d[k];
              }
            }
          }
        }
        break;
      }
      case NodeKind::ReLU: {
        Tensor& gi = grad_slot(nd.inputs[0]);
        const std::size_t per = in.per_sample();
        for (std::size_t s = 0; s < n; ++s) {
          const double* z = in.sample(s);
          const double* d = go.sample(s);
          double* q = gi.sample(s);
          if (opt.relu == ReluMode::DeepLiftRescale) {
            const std::size_t rs = opt.reference->input.n == 1 ? 0 : s;
            const double* zr = input_of(*opt.reference, nd.inputs[0]).sample(rs);
            const double* a = cache.out[ii].sample(s);
            const double* ar = opt.reference->out[ii].sample(rs);
            for (std::size_t k = 0; k < per; ++k) {
              const double dz = z[k] - zr[k];
              const double da = a[k] - ar[k];
              const double m = std::abs(dz) > 1e-9 ? da / dz : (z[k] > 0.0 ? 1.0 : 0.0);
              g.ledger += d[k] * (da - m * dz);
              q[k] += d[k] * m;
            }
          } else {
            for (std::size_t k = 0; k < per; ++k) {
              const bool open = z[k] > 0.0 && (opt.relu != ReluMode::Guided || d[k] > 0.0);
              if (open) q[k] += d[k];
            }
          }
        }
        break;
      }
      case NodeKind::Add: {
        for (int idx : nd.inputs) {
          Tensor& gi = grad_slot(idx);
          for (std::size_t k = 0; k < go.v.size(); ++k) gi.v[k] += go.v[k];
        }
        break;
      }
      case NodeKind::GlobalAvgPool: {
        Tensor& gi = grad_slot(nd.inputs[0]);
        const std::size_t sp = in.s.count();
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t ch = 0; ch < nd.channels; ++ch) {
            const double v = go.sample(s)[ch] / static_cast<double>(sp);
            double* q = gi.sample(s) + ch * sp;
            for (std::size_t k = 0; k < sp; ++k) q[k] += v;
          }
        break;
      }
      case NodeKind::Dense: {
        Tensor& gi = grad_slot(nd.inputs[0]);
        for (std::size_t s = 0; s < n; ++s) {
          const double* a = in.sample(s);
          double* q = gi.sample(s);
          for (std::size_t o = 0; o < nd.out_features; ++o) {
            const double d = go.sample(s)[o];
            const double* w = P.data() + nd.w_off + o * nd.in_features;
            for (std::size_t k = 0; k < nd.in_features; ++k) q[k] += w[k] * d;
            if (opt.param_grads) {
              double* gw = g.params.data() + nd.w_off + o * nd.in_features;
              for (std::size_t k = 0; k < nd.in_features; ++k) gw[k] += a[k] * d;
              if (nd.b_len) g.params[nd.b_off + o] += d;
            }
          }
        }
        break;
      }
    }
  }
  if (opt.keep_node_grads) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (grads[i].v.empty()) grads[i] = Tensor(cache.out[i].n, cache.out[i].c, cache.out[i].s);
    g.node_grads = std::move(grads);
  }
  return g;
}

Network fold_batchnorm(const Network& net) {
  const auto& old = net.nodes();
  std::vector<int> consumers(old.size(), 0);
  for (const auto& nd : old)
    for (int i : nd.inputs)
      if (i >= 0) ++consumers[static_cast<std::size_t>(i)];
  std::vector<bool> merged_conv(old.size(), false);
  for (std::size_t i = 0; i < old.size(); ++i) {
    if (old[i].kind != NodeKind::BatchNorm) continue;
    const int src = old[i].inputs[0];
    if (src < 0 || old[static_cast<std::size_t>(src)].kind != NodeKind::Conv ||
        consumers[static_cast<std::size_t>(src)] != 1)
      throw ConfigError("fold_batchnorm: batchnorm without a preceding conv");
    merged_conv[static_cast<std::size_t>(src)] = true;
  }

  Network out = net;
  auto& nodes = out.nodes();
  nodes.clear();
  std::vector<double> params;
  std::vector<int> remap(old.size(), -1);
  const auto& P = net.params();
  const auto& B = net.buffers();
  for (std::size_t i = 0; i < old.size(); ++i) {
    const Node& nd = old[i];
    if (nd.kind == NodeKind::BatchNorm) {
      const int conv_new = remap[static_cast<std::size_t>(nd.inputs[0])];
      Node& cv = nodes[static_cast<std::size_t>(conv_new)];
      const Node& cv_old = old[static_cast<std::size_t>(nd.inputs[0])];
      const std::size_t per_out = cv.geom.cin * cv.geom.kernel_volume();
      for (std::size_t ch = 0; ch < nd.channels; ++ch) {
        const double s = P[nd.w_off + ch] / std::sqrt(B[nd.buf_off + nd.channels + ch] + nd.eps);
        for (std::size_t k = 0; k < per_out; ++k) params[cv.w_off + ch * per_out + k] *= s;
        const double b = cv_old.b_len ? P[cv_old.b_off + ch] : 0.0;
        params[cv.b_off + ch] = (b - B[nd.buf_off + ch]) * s + P[nd.b_off + ch];
      }
      nodes[static_cast<std::size_t>(conv_new)].tap = nd.tap.empty() ? cv.tap : nd.tap;
      remap[i] = conv_new;
      continue;
    }
    Node nn = nd;
    for (int& in : nn.inputs)
      if (in >= 0) in = remap[static_cast<std::size_t>(in)];
    if (nd.w_len) {
      nn.w_off = params.size();
      params.insert(params.end(), P.begin() + static_cast<long>(nd.w_off), P.begin() + static_cast<long>(nd.w_off + nd.w_len));
    }
    const bool add_bias = nd.kind == NodeKind::Conv && merged_conv[i];
    if (nd.b_len || add_bias) {
      nn.b_off = params.size();
      nn.b_len = nd.kind == NodeKind::Conv ? nd.channels : nd.out_features;
      nn.bias = true;
      if (nd.b_len)
        params.insert(params.end(), P.begin() + static_cast<long>(nd.b_off), P.begin() + static_cast<long>(nd.b_off + nd.b_len));
      else
        params.resize(params.size() + nn.b_len, 0.0);
    }
    nodes.push_back(nn);
    remap[i] = static_cast<int>(nodes.size() - 1);
  }
  out.params() = std::move(params);
  out.buffers().clear();
  out.set_folded(true);
  return out;
}

namespace {

template <class T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw IoError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const Network& net, std::uint64_t seed, std::uint64_t step, const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + p.string());
  const std::string spec = net.spec().to_json();
  f.write("GTXC", 4);
  put<std::uint32_t>(f, 1);
  put<std::uint64_t>(f, fnv1a(spec));
  put<std::uint64_t>(f, seed);
  put<std::uint64_t>(f, step);
  put<std::uint8_t>(f, net.folded() ? 1 : 0);
  put<std::uint32_t>(f, static_cast<std::uint32_t>(spec.size()));
  f.write(spec.data(), static_cast<std::streamsize>(spec.size()));
  put<std::uint64_t>(f, net.params().size());
  for (double v : net.params()) put<double>(f, v);
  put<std::uint64_t>(f, net.buffers().size());
  for (double v : net.buffers()) put<double>(f, v);
}

Checkpoint load_checkpoint(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + p.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "GTXC", 4) != 0) throw IoError(p.string() + ": not a checkpoint");
  if (get<std::uint32_t>(f) != 1) throw IoError(p.string() + ": unsupported checkpoint version");
  const auto spec_hash = get<std::uint64_t>(f);
  Checkpoint c;
  c.seed = get<std::uint64_t>(f);
  c.step = get<std::uint64_t>(f);
  const bool folded = get<std::uint8_t>(f) != 0;
  std::string spec(get<std::uint32_t>(f), '\0');
  f.read(spec.data(), static_cast<std::streamsize>(spec.size()));
  if (!f || fnv1a(spec) != spec_hash) throw IoError(p.string() + ": spec hash mismatch");
  c.net = Network(NetSpec::from_json(spec));
  if (folded) c.net = fold_batchnorm(c.net);
  const auto np = get<std::uint64_t>(f);
  if (np != c.net.params().size()) throw IoError(p.string() + ": parameter count does not match spec");
  for (auto& v : c.net.params()) v = get<double>(f);
  const auto nb = get<std::uint64_t>(f);
  if (nb != c.net.buffers().size()) throw IoError(p.string() + ": buffer count does not match spec");
  for (auto& v : c.net.buffers()) v = get<double>(f);
  return c;
}

}  // namespace gtx::net
