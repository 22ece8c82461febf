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

// Small residual CNNs as an explicit node graph. ResBlocks are expanded into
// Conv/BatchNorm/ReLU/Add nodes when the network is built; the output ReLU of
// the i-th block is tapped as "block<i>".

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "net/conv.hpp"
#include "net/tensor.hpp"

namespace gtx::net {

enum class LayerType { Conv, BatchNorm, ReLU, ResBlock, GlobalAvgPool, Dense, SigmoidHead };

struct LayerSpec {
  LayerType type = LayerType::ReLU;
  std::size_t in = 0, out = 0;  // channels (Conv, ResBlock, BatchNorm) or features (Dense)
  std::size_t kernel = 3;
  std::size_t stride = 1;
  bool bias = true;
  double eps = 1e-5;
  double momentum = 0.1;
};

enum class Task { Regression, Classification };

struct NetSpec {
  Shape3 input;  // d, h, w (d = 1 for 2D)
  std::size_t in_channels = 1;
  Task task = Task::Regression;
  std::vector<LayerSpec> layers;

  std::string to_json() const;
  static NetSpec from_json(const std::string& s);
};

// Stem conv (stride 2) + three ResBlocks + GAP + Dense(1).
NetSpec tiny_resnet(Shape3 input, Task task, std::vector<std::size_t> widths = {8, 16, 16});
// y = w . x + b on a single-channel input.
NetSpec linear_net(Shape3 input, bool bias = false);

enum class NodeKind { Conv, BatchNorm, ReLU, Add, GlobalAvgPool, Dense };

struct Node {
  NodeKind kind = NodeKind::ReLU;
  std::vector<int> inputs;  // node indices; -1 is the network input
  std::size_t channels = 0;  // output channels
  Shape3 shape;              // output spatial shape
  ConvGeom geom;             // Conv
  std::size_t in_features = 0, out_features = 0;  // Dense
  bool bias = false;
  double eps = 1e-5, momentum = 0.1;  // BatchNorm
  std::size_t w_off = 0, w_len = 0, b_off = 0, b_len = 0;  // into params (BN: gamma, beta)
  std::size_t buf_off = 0;  // BN running mean, then running var, into buffers
  std::string tap;
};

class Network {
 public:
  Network() = default;
  explicit Network(NetSpec spec);

  const NetSpec& spec() const { return spec_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& buffers() { return buffers_; }
  const std::vector<double>& buffers() const { return buffers_; }

  std::size_t output_node() const { return nodes_.size() - 1; }
  std::size_t output_size() const { return nodes_.back().out_features; }
  int tap_node(const std::string& name) const;  // -1 if absent
  std::vector<std::string> taps() const;
  std::size_t count(NodeKind k) const;
  bool folded() const { return folded_; }
  void set_folded(bool f) { folded_ = f; }

  // He-normal weights, zero biases, unit BN scale.
  void init(std::uint64_t seed);

  // FNV-1a over spec, parameters and buffers.
  std::string hash() const;

 private:
  NetSpec spec_;
  std::vector<Node> nodes_;
  std::vector<double> params_;
  std::vector<double> buffers_;
  bool folded_ = false;
};

Network init(const NetSpec& spec, std::uint64_t seed);

enum class Mode { Train, Eval };

struct Cache {
  Mode mode = Mode::Eval;
  Tensor input;
  std::vector<Tensor> out;  // per node
  std::vector<std::vector<double>> batch_mean, batch_var;  // per node, BN in train mode
};

Tensor forward(const Network& net, const Tensor& x, Mode mode, Cache* cache = nullptr);

enum class ReluMode { Standard, Guided, DeepLiftRescale };

struct BackwardOptions {
  ReluMode relu = ReluMode::Standard;
  const Cache* reference = nullptr;  // DeepLiftRescale baseline pass
  bool param_grads = true;
  bool keep_node_grads = false;
};

struct Gradients {
  std::vector<double> params;
  Tensor input;
  std::vector<Tensor> node_grads;  // gradient w.r.t. each node output, when kept
  double ledger = 0.0;             // DeepLiftRescale: contribution not carried by multipliers
};

Gradients backward(const Network& net, const Cache& cache, const Tensor& d_out, const BackwardOptions& opt = {});

// Merge every Conv -> BatchNorm pair into the conv (eval statistics).
Network fold_batchnorm(const Network& net);

void save_checkpoint(const Network& net, std::uint64_t seed, std::uint64_t step, const std::filesystem::path& p);
struct Checkpoint {
  Network net;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& p);

}  // namespace gtx::net
