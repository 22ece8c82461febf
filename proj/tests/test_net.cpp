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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "core/error.hpp"
#include "net/train.hpp"
#include "test_util.hpp"

using namespace gtx;
using gtx::testing::random_volume;
using gtx::testing::randomize_batchnorm;
using gtx::testing::scalar_out;

namespace {

net::NetSpec two_block_net() {
  using net::LayerType;
  net::NetSpec s;
  s.input = {8, 8, 8};
  s.layers.push_back({LayerType::Conv, 1, 3, 3, 2, false});
  s.layers.push_back({LayerType::BatchNorm, 3, 3});
  s.layers.push_back({LayerType::ReLU});
  s.layers.push_back({LayerType::ResBlock, 3, 3, 3, 1});
  s.layers.push_back({LayerType::ResBlock, 3, 4, 3, 2});
  s.layers.push_back({LayerType::GlobalAvgPool});
  s.layers.push_back({LayerType::Dense, 4, 1, 1, 1, true});
  return s;
}

}  // namespace

TEST_CASE("initialisation") {
  const auto spec = net::tiny_resnet({8, 8, 8}, net::Task::Regression);
  CHECK(net::init(spec, 4).params() == net::init(spec, 4).params());
  CHECK(net::init(spec, 4).params() != net::init(spec, 5).params());
  const auto n = net::init(spec, 4);
  for (const auto& node : n.nodes())
    if (node.kind == net::NodeKind::BatchNorm)
      for (std::size_t c = 0; c < node.channels; ++c) CHECK(n.params()[node.w_off + c] == 1.0);

  net::NetSpec big;
  big.input = {6, 6, 6};
  big.in_channels = 8;
  big.layers.push_back({net::LayerType::Conv, 8, 16, 3, 1, false});
  big.layers.push_back({net::LayerType::GlobalAvgPool});
  big.layers.push_back({net::LayerType::Dense, 16, 1, 1, 1, false});
  const auto b = net::init(big, 1);
  const auto& conv = b.nodes().front();
  double ss = 0;
  for (std::size_t k = 0; k < conv.w_len; ++k) ss += std::pow(b.params()[conv.w_off + k], 2);
  const double sd = std::sqrt(ss / double(conv.w_len));
  CHECK(conv.w_len >= 1000);
  CHECK(sd == doctest::Approx(std::sqrt(2.0 / (8.0 * 27.0))).epsilon(0.15));
}

TEST_CASE("forward identities") {
  net::NetSpec one;
  one.input = {3, 4, 5};
  one.layers.push_back({net::LayerType::Conv, 1, 1, 1, 1, false});
  one.layers.push_back({net::LayerType::GlobalAvgPool});
  one.layers.push_back({net::LayerType::Dense, 1, 1, 1, 1, false});
  auto n = net::init(one, 1);
  n.params()[n.nodes()[0].w_off] = 1.0;
  n.params()[n.nodes().back().w_off] = 1.0;
  const auto x = random_volume({5, 4, 3}, 2);
  net::Cache cache;
  const auto y = net::forward(n, net::stack_one(x), net::Mode::Eval, &cache);
  CHECK(cache.out[0].v == x.values());

  const vol::Volume c({5, 4, 3}, {1, 1, 1}, 2.75);
  CHECK(scalar_out(n, c) == doctest::Approx(2.75));
  CHECK(y.v[0] == doctest::Approx(x.sum() / double(x.size())));
}

TEST_CASE("forward matches a direct convolution") {
  net::NetSpec s;
  s.input = {4, 4, 4};
  s.layers.push_back({net::LayerType::Conv, 1, 2, 3, 2, true});
  s.layers.push_back({net::LayerType::ReLU});
  s.layers.push_back({net::LayerType::GlobalAvgPool});
  s.layers.push_back({net::LayerType::Dense, 2, 1, 1, 1, true});
  auto n = net::init(s, 3);
  const auto& conv = n.nodes()[0];
  n.params()[conv.b_off] = 0.1;
  n.params()[conv.b_off + 1] = -0.2;
  const auto& dense = n.nodes().back();
  n.params()[dense.b_off] = 0.3;
  const auto x = random_volume({4, 4, 4}, 9);

  // Oracle: zero-padded stride-2 3x3x3 convolution, ReLU, mean, dense.
  const auto& w = n.params();
  double out = w[dense.b_off];
  for (std::size_t co = 0; co < 2; ++co) {
    double acc = 0;
    for (long oz = 0; oz < 2; ++oz)
      for (long oy = 0; oy < 2; ++oy)
        for (long ox = 0; ox < 2; ++ox) {
          double z = w[conv.b_off + co];
          for (long kz = 0; kz < 3; ++kz)
            for (long ky = 0; ky < 3; ++ky)
              for (long kx = 0; kx < 3; ++kx) {
                const long iz = 2 * oz + kz - 1, iy = 2 * oy + ky - 1, ix = 2 * ox + kx - 1;
                if (iz < 0 || iy < 0 || ix < 0 || iz > 3 || iy > 3 || ix > 3) continue;
                z += w[conv.w_off + co * 27 + std::size_t(kz * 9 + ky * 3 + kx)] * x.at(ix, iy, iz);
              }
          acc += std::max(z, 0.0);
        }
    out += w[dense.w_off + co] * acc / 8.0;
  }
  CHECK(std::abs(scalar_out(n, x) - out) < 1e-10);
}

TEST_CASE("linear network gradient is the weight vector") {
  auto n = net::init(net::linear_net({2, 3, 4}), 5);
  const auto x = random_volume({4, 3, 2}, 1);
  net::Cache cache;
  net::forward(n, net::stack_one(x), net::Mode::Eval, &cache);
  net::Tensor d(1, 1, {1, 1, 1}, 1.0);
  const auto g = net::backward(n, cache, d);
  const auto& dense = n.nodes().back();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(g.input.v[i] == n.params()[dense.w_off + i]);
}

TEST_CASE("dead ReLU blocks every gradient") {
  net::NetSpec s;
  s.input = {3, 3, 3};
  s.layers.push_back({net::LayerType::Conv, 1, 2, 3, 1, true});
  s.layers.push_back({net::LayerType::ReLU});
  s.layers.push_back({net::LayerType::GlobalAvgPool});
  s.layers.push_back({net::LayerType::Dense, 2, 1, 1, 1, false});
  auto n = net::init(s, 2);
  const auto& conv = n.nodes()[0];
  for (std::size_t k = 0; k < conv.w_len; ++k) n.params()[conv.w_off + k] = 0.0;
  n.params()[conv.b_off] = n.params()[conv.b_off + 1] = -1.0;
  net::Cache cache;
  net::forward(n, net::stack_one(random_volume({3, 3, 3}, 4)), net::Mode::Eval, &cache);
  const auto g = net::backward(n, cache, net::Tensor(1, 1, {1, 1, 1}, 1.0));
  for (double v : g.input.v) CHECK(v == 0.0);
}

TEST_CASE("backward agrees with central finite differences") {
  auto n = net::init(two_block_net(), 11);
  randomize_batchnorm(n, 12, false);
  // Per-mode step and relative-error floor.
  struct Case {
    net::Mode mode;
    double h, floor;
  };
  for (const auto [mode, h, floor] : {Case{net::Mode::Eval, 1e-3, 1e-6}, Case{net::Mode::Train, 1e-5, 1e-4}}) {
    const std::vector<vol::Volume> batch{random_volume({8, 8, 8}, 13), random_volume({8, 8, 8}, 14)};
    const auto input = net::stack(batch);
    // Loss and the on/off pattern of every ReLU; a perturbation that flips a
    // unit crosses a kink, where central differences are not an oracle.
    auto eval = [&](const net::Network& m, const net::Tensor& t, std::vector<char>& pattern) {
      net::Cache c;
      const auto y = net::forward(m, t, mode, &c);
      pattern.clear();
      for (std::size_t i = 0; i < m.nodes().size(); ++i)
        if (m.nodes()[i].kind == net::NodeKind::ReLU)
          for (double v : c.out[i].v) pattern.push_back(v > 0);
      return 0.7 * y.v[0] - 1.3 * y.v[1];
    };
    net::Cache cache;
    net::forward(n, input, mode, &cache);
    net::Tensor d(2, 1, {1, 1, 1});
    d.v = {0.7, -1.3};
    const auto g = net::backward(n, cache, d);

    double worst = 0;
    std::size_t checked = 0, kinks = 0;
    std::vector<char> pp, pm;
    auto compare = [&](double analytic, double lp, double lm) {
      if (pp != pm) {
        ++kinks;
        return;
      }
      ++checked;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), floor}));
    };
    for (std::size_t k = 0; k < n.params().size(); ++k) {
      auto p = n, m = n;
      p.params()[k] += h;
      m.params()[k] -= h;
      const double lp = eval(p, input, pp), lm = eval(m, input, pm);
      compare(g.params[k], lp, lm);
    }
    for (std::size_t i = 0; i < input.v.size(); ++i) {
      auto p = input, m = input;
      p.v[i] += h;
      m.v[i] -= h;
      const double lp = eval(n, p, pp), lm = eval(n, m, pm);
      compare(g.input.v[i], lp, lm);
    }
    CAPTURE(mode == net::Mode::Train);
    CAPTURE(kinks);
    CHECK(worst < 1e-6);
    CHECK(kinks * 50 < checked);
  }
}

TEST_CASE("batchnorm folding") {
  auto n = net::init(net::tiny_resnet({8, 8, 8}, net::Task::Regression, {4, 4, 4}), 3);
  const auto ident = n;
  auto id = n;
  for (const auto& node : id.nodes())
    if (node.kind == net::NodeKind::BatchNorm)
      for (std::size_t c = 0; c < node.channels; ++c) id.buffers()[node.buf_off + node.channels + c] = 1.0 - node.eps;
  const auto fid = net::fold_batchnorm(id);
  CHECK(fid.count(net::NodeKind::BatchNorm) == 0);
  for (std::size_t i = 0; i < fid.nodes().size(); ++i) {
    const auto& node = fid.nodes()[i];
    if (node.kind != net::NodeKind::Conv) continue;
    // The matching conv in the original network has the same weights.
    const auto it = std::find_if(id.nodes().begin(), id.nodes().end(), [&](const net::Node& o) {
      return o.kind == net::NodeKind::Conv && o.w_len == node.w_len &&
             std::equal(fid.params().begin() + long(node.w_off), fid.params().begin() + long(node.w_off + node.w_len),
                        id.params().begin() + long(o.w_off));
    });
    CHECK(it != id.nodes().end());
  }

  randomize_batchnorm(n, 4, false);
  const auto f = net::fold_batchnorm(n);
  CHECK(f.count(net::NodeKind::BatchNorm) == 0);
  CHECK(f.folded());
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_volume({8, 8, 8}, 100 + s);
    const double a = scalar_out(n, x), b = scalar_out(f, x);
    CHECK(std::abs(a - b) / std::max(std::abs(a), 1e-12) < 1e-5);
  }
}

TEST_CASE("training fits a linear map on scalar inputs") {
  auto n = net::init(net::linear_net({1, 1, 1}, true), 1);
  auto rng = make_stream(3, 0);
  std::normal_distribution<double> z(0, 1);
  std::vector<vol::Volume> xs;
  net::Dataset ds;
  for (int i = 0; i < 200; ++i) xs.emplace_back(vol::Dims{1, 1, 1}, vol::Spacing{1, 1, 1}, z(rng));
  for (const auto& x : xs) {
    ds.inputs.push_back(&x);
    ds.targets.push_back(3.0 * x[0]);
  }
  net::TrainConfig cfg;
  cfg.steps = 2000;
  cfg.max_lr = 1e-2;
  const auto r = net::train(n, ds, cfg);
  auto pred = net::predict(r.net, ds, r.split.test);
  std::vector<double> truth;
  for (std::size_t i : r.split.test) truth.push_back(ds.targets[i]);
  for (auto& p : pred) p = p * r.target_sd + r.target_mean;
  CHECK(net::r_squared(truth, pred) >= 0.99);

  cfg.steps = 0;
  CHECK(net::train(n, ds, cfg).net.params() == n.params());
}

TEST_CASE("one-cycle schedule") {
  net::TrainConfig cfg;
  cfg.steps = 101;
  cfg.warmup_fraction = 0.3;
  CHECK(net::one_cycle_lr(cfg, 0) == doctest::Approx(cfg.max_lr * cfg.start_ratio));
  CHECK(net::one_cycle_lr(cfg, 30) == doctest::Approx(cfg.max_lr));
  CHECK(net::one_cycle_lr(cfg, 100) == doctest::Approx(cfg.max_lr * cfg.final_ratio));
}

TEST_CASE("splits and checkpoints") {
  net::TrainConfig cfg;
  const auto s = net::make_split(100, cfg);
  CHECK(s.train.size() + s.val.size() + s.test.size() == 100);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) CHECK(all[i] == i);

  auto n = net::init(net::tiny_resnet({8, 8, 8}, net::Task::Classification, {2, 2, 2}), 6);
  randomize_batchnorm(n, 7, false);
  const auto dir = gtx::testing::temp_dir("net");
  net::save_checkpoint(n, 6, 42, dir / "n.gtxc");
  const auto c = net::load_checkpoint(dir / "n.gtxc");
  CHECK(c.seed == 6);
  CHECK(c.step == 42);
  CHECK(c.net.hash() == n.hash());
  CHECK(c.net.params() == n.params());
  CHECK(c.net.buffers() == n.buffers());
}

TEST_CASE("metrics of predictions") {
  CHECK(net::r_squared(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 1.0);
  CHECK(net::accuracy(std::vector<double>{1, 0, 1, 0}, std::vector<double>{2.0, -1.0, -0.5, 0.3}) == 0.5);
}
