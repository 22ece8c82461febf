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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "net/network.hpp"

namespace gtx::net {

enum class Loss { MSE, BCE };

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  double max_lr = 1e-4;
  double warmup_fraction = 0.3;
  double final_ratio = 1e-3;   // final lr = max_lr * final_ratio
  double start_ratio = 0.04;   // lr(0) = max_lr * start_ratio
  Loss loss = Loss::MSE;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  double train_fraction = 0.7, val_fraction = 0.15, test_fraction = 0.15;
  std::size_t log_every = 0;  // 0: about 20 history rows

  void validate() const;
};

// Learning rate at a step of a one-cycle schedule: linear warmup from
// max_lr*start_ratio to max_lr, then cosine decay to max_lr*final_ratio at the
// last step.
double one_cycle_lr(const TrainConfig& cfg, std::size_t step);

struct Split {
  std::vector<std::size_t> train, val, test;
};

// Deterministic shuffled split by fractions.
Split make_split(std::size_t n, const TrainConfig& cfg);

struct Dataset {
  std::vector<const vol::Volume*> inputs;
  std::vector<double> targets;
};

struct HistoryRow {
  std::size_t step = 0;
  double lr = 0, train_loss = 0, val_metric = 0;
};

struct TrainResult {
  Network net;
  std::vector<HistoryRow> history;
  Split split;
  double target_mean = 0, target_sd = 1;  // regression z-scoring from the training split
};

TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg);
TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg, const Split& split);

// Eval-mode scalar outputs (raw network scale) for the listed subjects.
std::vector<double> predict(const Network& net, const Dataset& data, std::span<const std::size_t> idx,
                            std::size_t batch = 16);

double r_squared(std::span<const double> truth, std::span<const double> pred);
double accuracy(std::span<const double> labels, std::span<const double> logits);

void write_history(const std::vector<HistoryRow>& h, const std::filesystem::path& p);

}  // namespace gtx::net
