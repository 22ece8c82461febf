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
#include "net/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

namespace gtx::net {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(max_lr > 0)) throw ConfigError("train: max_lr must be positive");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw ConfigError("train: warmup_fraction must be in [0, 1]");
  if (!(final_ratio > 0) || !(start_ratio > 0)) throw ConfigError("train: lr ratios must be positive");
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (train_fraction <= 0 || val_fraction < 0 || test_fraction < 0 ||
      std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
    throw ConfigError("train: split fractions must be non-negative and sum to 1");
}

double one_cycle_lr(const TrainConfig& cfg, std::size_t step) {
  const std::size_t steps = std::max<std::size_t>(cfg.steps, 1);
  const auto warm = static_cast<std::size_t>(std::llround(cfg.warmup_fraction * static_cast<double>(steps - 1)));
  const double lo = cfg.max_lr * cfg.start_ratio;
  const double end = cfg.max_lr * cfg.final_ratio;
  if (step <= warm) {
    if (warm == 0) return cfg.max_lr;
    return lo + (cfg.max_lr - lo) * static_cast<double>(step) / static_cast<double>(warm);
  }
  const std::size_t span = steps - 1 - warm;
  const double t = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(span));
  return end + (cfg.max_lr - end) * 0.5 * (1.0 + std::cos(M_PI * t));
}

Split make_split(std::size_t n, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_stream(cfg.seed, 0x73706c6974ULL);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<long>(std::min(n_train, n)));
  s.val.assign(order.begin() + static_cast<long>(s.train.size()),
               order.begin() + static_cast<long>(std::min(n, s.train.size() + n_val)));
  s.test.assign(order.begin() + static_cast<long>(s.train.size() + s.val.size()), order.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  if (s.train.empty()) throw ConfigError("train: empty training split");
  return s;
}

double r_squared(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size() || truth.empty()) throw ShapeError("r_squared: size mismatch");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0) return ss_res == 0 ? 0.0 : -ss_res;
  return 1.0 - ss_res / ss_tot;
}

double accuracy(std::span<const double> labels, std::span<const double> logits) {
  if (labels.size() != logits.size() || labels.empty()) throw ShapeError("accuracy: size mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += ((logits[i] > 0) == (labels[i] > 0.5)) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::vector<double> predict(const Network& net, const Dataset& data, std::span<const std::size_t> idx,
                            std::size_t batch) {
  std::vector<double> out;
  out.reserve(idx.size());
  std::vector<vol::Volume> vols;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const std::size_t m = std::min(batch, idx.size() - start);
    Tensor x(m, 1, net.spec().input);
    for (std::size_t j = 0; j < m; ++j) {
      const auto& v = *data.inputs[idx[start + j]];
      std::copy(v.values().begin(), v.values().end(), x.sample(j));
    }
    const Tensor y = forward(net, x, Mode::Eval);
    for (std::size_t j = 0; j < m; ++j) out.push_back(y.sample(j)[0]);
  }
  return out;
}

namespace {

double val_metric(const Network& net, const Dataset& data, const std::vector<std::size_t>& idx,
                  const std::vector<double>& scaled, Loss loss) {
  if (idx.empty()) return std::nan("");
  const auto pred = predict(net, data, idx);
  std::vector<double> truth;
  for (auto i : idx) truth.push_back(scaled[i]);
  return loss == Loss::MSE ? r_squared(truth, pred) : accuracy(truth, pred);
}

}  // namespace

TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg) {
  return train(std::move(net), data, cfg, make_split(data.inputs.size(), cfg));
}

TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg, const Split& split) {
  cfg.validate();
  if (data.inputs.size() != data.targets.size()) throw ShapeError("train: inputs and targets differ in length");
  if (net.output_size() != 1) throw ConfigError("train: network must have a single output");
  if (net.folded()) throw ConfigError("train: cannot train a batchnorm-folded network");
  TrainResult r;
  r.split = split;
  std::vector<double> scaled = data.targets;
  if (cfg.loss == Loss::MSE) {
    double mean = 0;
    for (auto i : split.train) mean += data.targets[i];
    mean /= static_cast<double>(split.train.size());
    double var = 0;
    for (auto i : split.train) var += (data.targets[i] - mean) * (data.targets[i] - mean);
    const double sd = split.train.size() > 1 ? std::sqrt(var / static_cast<double>(split.train.size() - 1)) : 0.0;
    r.target_mean = mean;
    r.target_sd = sd > 0 ? sd : 1.0;
    for (auto& t : scaled) t = (t - r.target_mean) / r.target_sd;
  } else {
    for (double t : scaled)
      if (t != 0.0 && t != 1.0) throw ConfigError("train: classification targets must be 0 or 1");
  }

  auto& P = net.params();
  std::vector<double> m1(P.size(), 0.0), m2(P.size(), 0.0);
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  const std::size_t log_every = cfg.log_every ? cfg.log_every : std::max<std::size_t>(1, cfg.steps / 20);
  auto rng = make_stream(cfg.seed, 0x626174636865ULL);
  std::vector<std::size_t> order = split.train;
  std::size_t cursor = order.size();
  const std::size_t bs = std::min(cfg.batch_size, split.train.size());

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tensor x(bs, 1, net.spec().input);
    std::vector<double> t(bs);
    for (std::size_t j = 0; j < bs; ++j) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i) {
          std::uniform_int_distribution<std::size_t> pick(0, i - 1);
          std::swap(order[i - 1], order[pick(rng)]);
        }
        cursor = 0;
      }
      const std::size_t s = order[cursor++];
      const auto& v = *data.inputs[s];
      if (v.size() != x.per_sample()) throw ShapeError("train: input volume does not match network input");
      std::copy(v.values().begin(), v.values().end(), x.sample(j));
      t[j] = scaled[s];
    }
    Cache cache;
    const Tensor y = forward(net, x, Mode::Train, &cache);
    Tensor dy(bs, 1, {1, 1, 1});
    double loss = 0;
    for (std::size_t j = 0; j < bs; ++j) {
      const double o = y.sample(j)[0];
      if (cfg.loss == Loss::MSE) {
        loss += (o - t[j]) * (o - t[j]);
        dy.sample(j)[0] = 2.0 * (o - t[j]) / static_cast<double>(bs);
      } else {
        loss += std::max(o, 0.0) - o * t[j] + std::log1p(std::exp(-std::abs(o)));
        dy.sample(j)[0] = (1.0 / (1.0 + std::exp(-o)) - t[j]) / static_cast<double>(bs);
      }
    }
    loss /= static_cast<double>(bs);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << step << " (lr " << one_cycle_lr(cfg, step) << ")";
      throw NumericError(msg.str());
    }
    const Gradients g = backward(net, cache, dy);
    const double lr = one_cycle_lr(cfg, step);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
    for (std::size_t k = 0; k < P.size(); ++k) {
      const double gk = g.params[k] + cfg.weight_decay * P[k];
      m1[k] = b1 * m1[k] + (1 - b1) * gk;
      m2[k] = b2 * m2[k] + (1 - b2) * gk * gk;
      P[k] -= lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + adam_eps);
    }
    auto& B = net.buffers();
    for (std::size_t i = 0; i < net.nodes().size(); ++i) {
      const Node& nd = net.nodes()[i];
      if (nd.kind != NodeKind::BatchNorm) continue;
      const double count = static_cast<double>(bs * nd.shape.count());
      const double unbias = count > 1 ? count / (count - 1) : 1.0;
      for (std::size_t ch = 0; ch < nd.channels; ++ch) {
        double& rm = B[nd.buf_off + ch];
        double& rv = B[nd.buf_off + nd.channels + ch];
        rm = (1 - nd.momentum) * rm + nd.momentum * cache.batch_mean[i][ch];
        rv = (1 - nd.momentum) * rv + nd.momentum * cache.batch_var[i][ch] * unbias;
      }
    }
    if ((step + 1) % log_every == 0 || step + 1 == cfg.steps)
      r.history.push_back({step + 1, lr, loss, val_metric(net, data, split.val, scaled, cfg.loss)});
  }
  r.net = std::move(net);
  return r;
}

void write_history(const std::vector<HistoryRow>& h, const std::filesystem::path& p) {
  csv::Table t({"step", "lr", "train_loss", "val_metric"});
  for (const auto& r : h) t.add({std::to_string(r.step), csv::fmt(r.lr), csv::fmt(r.train_loss), csv::fmt(r.val_metric)});
  t.write(p);
}

}  // namespace gtx::net
