// Copyright (c) 2026 The chanmp Authors. All Rights Reserved.
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

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chanmp/cost.hpp"
#include "chanmp/data.hpp"
#include "chanmp/gates.hpp"
#include "chanmp/model.hpp"
#include "chanmp/optim.hpp"

namespace chanmp::train {

enum class Task { Classification, Regression };

std::string to_string(Task task);
Task parse_task(const std::string& s);

struct TrainConfig {
  std::size_t epochs_wu = 50;
  std::size_t epochs_ft = 20;
  std::size_t max_search_epochs = 100;
  double lambda = 0.0;
  cost::RegMode reg_mode = cost::RegMode::Size;
  Task task = Task::Classification;
  std::size_t batch_size = 32;
  double lr_weights = 0.01;
  double momentum = 0.9;
  double lr_gates = 0.01;
  double lr_clip = 0.001;
  double clip_init = kDefaultClip;
  std::uint64_t seed = 0;
  std::size_t patience = 10;
  double gate_split = 0.2;  // fraction of each epoch's samples that train the gates
  double tau0 = nas::kInitialTemperature;
  double anneal_rate = nas::kAnnealRate;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct LossBreakdown {
  double task = 0.0;
  double reg = 0.0;
  double total = 0.0;  // task + lambda * reg
};

enum class Phase { Warmup, Search, Finetune };

std::string to_string(Phase phase);

struct EpochLog {
  Phase phase = Phase::Warmup;
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double val_score = 0.0;
  double tau = 0.0;
};

struct BatchInfo {
  Phase phase = Phase::Warmup;
  std::size_t epoch = 0;
  std::size_t batch = 0;
  bool gate_batch = false;
};

// Instrumentation hooks; the default implementation ignores everything.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void before_batch(const BatchInfo&, const Model&) {}
  virtual void after_batch(const BatchInfo&, const Model&, const LossBreakdown&) {}
  virtual void after_epoch(const EpochLog&, const Model&) {}
};

// Optimizer state for one phase.
struct PhaseOptimizers {
  Sgd weights;
  Sgd clips;
  Adam gates;

  explicit PhaseOptimizers(const TrainConfig& config);
};

struct SearchEpochStats {
  std::size_t gate_batches = 0;
  std::size_t weight_batches = 0;
  LossBreakdown mean;
};

struct SearchResult {
  double lambda = 0.0;
  nas::PrecisionAssignment assignment;
  double val_score = 0.0;
  double test_score = 0.0;
  double size_bits = 0.0;
  double energy_uj = 0.0;  // 0 without a LUT
  std::size_t search_epochs = 0;
  std::vector<EpochLog> curve;
  Model model;
};

// Task loss as a graph node.
Var task_loss(Var output, const data::Dataset& batch, Task task);
// Accuracy for classification, negative mean squared error for regression.
double score(const Model& model, const data::Dataset& data, Task task, const ForwardOptions& options);
double evaluate_loss(const Model& model, const data::Dataset& data, Task task, const ForwardOptions& options);

// Value of the regularizer for the current gates.
double reg_value(const Model& model, cost::RegMode mode, const cost::CostLut* lut);

// QAT at the maximum precision. Gates are never touched.
std::vector<EpochLog> warmup(Model& model, const data::DataSplits& data, const TrainConfig& config,
                             TrainObserver* observer = nullptr);

// One alternating epoch: the batches covering the first `gate_split` of the
// shuffled samples update only the gates on task + lambda*reg, the rest
// update only weights and clips on the task loss. Anneals tau at the end.
SearchEpochStats search_epoch(Model& model, const data::Dataset& train, const TrainConfig& config,
                              PhaseOptimizers& optim, std::mt19937_64& rng, const cost::CostLut* lut,
                              std::size_t epoch = 0, TrainObserver* observer = nullptr);

// True once the last `patience` entries failed to improve on the best
// value seen before them.
bool early_stop(std::span<const double> val_losses, std::size_t patience);

// Discretizes the gates, then trains weights and clips only.
nas::PrecisionAssignment finetune(Model& model, const data::DataSplits& data, const TrainConfig& config,
                                  std::vector<EpochLog>* curve = nullptr, TrainObserver* observer = nullptr);

// Search (from an already warmed-up model) until early stop, fine-tune,
// evaluate.
SearchResult run_search(Model model, const data::DataSplits& data, const TrainConfig& config,
                        const cost::CostLut* lut = nullptr, TrainObserver* observer = nullptr);

}  // namespace chanmp::train
