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

#include "chanmp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "chanmp/error.hpp"
#include "chanmp/log.hpp"
#include "chanmp/ops.hpp"

namespace chanmp::train {

std::string to_string(Task task) { return task == Task::Classification ? "classification" : "regression"; }

Task parse_task(const std::string& s) {
  if (s == "classification") return Task::Classification;
  if (s == "regression") return Task::Regression;
  throw ConfigError("unknown task '" + s + "'");
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Warmup:
      return "warmup";
    case Phase::Search:
      return "search";
    case Phase::Finetune:
      return "finetune";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(gate_split > 0.0 && gate_split < 1.0)) throw ConfigError("gate split must lie in (0, 1)");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(tau0 > 0.0)) throw ConfigError("initial temperature must be positive");
  if (!(anneal_rate >= 0.0)) throw ConfigError("anneal rate must be >= 0");
  if (!(lr_weights >= 0.0 && lr_gates >= 0.0 && lr_clip >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(clip_init > 0.0)) throw ConfigError("clip initialization must be positive");
}

PhaseOptimizers::PhaseOptimizers(const TrainConfig& config)
    : weights(SgdConfig{config.lr_weights, config.momentum}),
      clips(SgdConfig{config.lr_clip, config.momentum}),
      gates(AdamConfig{config.lr_gates}) {}

Var task_loss(Var output, const data::Dataset& batch, Task task) {
  if (task == Task::Classification) return ops::cross_entropy(output, batch.labels);
  return ops::mse(output, batch.targets);
}

namespace {

constexpr std::size_t kEvalChunk = 512;

template <typename Fn>
void for_each_chunk(const data::Dataset& d, Fn&& fn) {
  for (std::size_t start = 0; start < d.size(); start += kEvalChunk) {
    std::vector<std::size_t> rows(std::min(kEvalChunk, d.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    fn(d.subset(rows));
  }
}

void check_finite(double v, const char* what, Phase phase, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw DivergenceError(std::string(what) + " became non-finite during " + to_string(phase) + " epoch " +
                          std::to_string(epoch));
  }
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch)));
  }
  return out;
}

// Weights-and-clips step used by warmup, the weight part of search, and fine-tuning.
LossBreakdown weight_step(Model& model, const data::Dataset& batch, const ForwardOptions& fwd, Task task,
                          PhaseOptimizers& optim, double reg, double lambda) {
  const auto weights = model.weight_params();
  const auto clips = model.clip_params();
  const auto gates = model.gate_params();
  zero_grads(weights);
  zero_grads(clips);
  zero_grads(gates);
  Graph g;
  const Var out = forward(g, model, g.constant(batch.inputs), fwd);
  const Var loss = task_loss(out, batch, task);
  g.backward(loss);
  optim.weights.step(weights);
  optim.clips.step(clips);
  model.project_clips();
  zero_grads(gates);
  LossBreakdown lb;
  lb.task = loss.value()[0];
  lb.reg = reg;
  lb.total = lb.task + lambda * lb.reg;
  return lb;
}

std::vector<EpochLog> train_weights(Model& model, const data::DataSplits& data, const TrainConfig& config,
                                    Phase phase, std::size_t epochs, const ForwardOptions& fwd,
                                    std::mt19937_64& rng, TrainObserver* observer) {
  PhaseOptimizers optim(config);
  std::vector<EpochLog> curve;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double task_sum = 0.0;
    std::size_t seen = 0;
    const auto batches = shuffled_batches(data.train.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const BatchInfo info{phase, epoch, b, false};
      if (observer) observer->before_batch(info, model);
      const data::Dataset batch = data.train.subset(batches[b]);
      const LossBreakdown lb = weight_step(model, batch, fwd, config.task, optim, 0.0, 0.0);
      check_finite(lb.task, "task loss", phase, epoch);
      if (observer) observer->after_batch(info, model, lb);
      task_sum += lb.task * static_cast<double>(batch.size());
      seen += batch.size();
    }
    EpochLog log;
    log.phase = phase;
    log.epoch = epoch;
    log.task_loss = seen ? task_sum / static_cast<double>(seen) : 0.0;
    log.total = log.task_loss;
    log.val_score = data.val.size() ? score(model, data.val, config.task, fwd) : 0.0;
    log.tau = model.gates.tau;
    if (observer) observer->after_epoch(log, model);
    log::debug(to_string(phase) + " epoch " + std::to_string(epoch) + " loss " + std::to_string(log.task_loss) +
               " val " + std::to_string(log.val_score));
    curve.push_back(log);
  }
  return curve;
}

}  // namespace

double score(const Model& model, const data::Dataset& data, Task task, const ForwardOptions& options) {
  if (data.size() == 0) return 0.0;
  double acc = 0.0;
  for_each_chunk(data, [&](const data::Dataset& chunk) {
    const Tensor out = predict(model, chunk.inputs, options);
    if (task == Task::Classification) {
      const std::size_t k = out.dim(1);
      for (std::size_t b = 0; b < chunk.size(); ++b) {
        const auto row = std::span(out.data).subspan(b * k, k);
        if (static_cast<int>(nas::argmax_lowest(row)) == chunk.labels[b]) acc += 1.0;
      }
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = out[i] - chunk.targets[i];
        acc -= d * d / static_cast<double>(out.size() / chunk.size());
      }
    }
  });
  return acc / static_cast<double>(data.size());
}

double evaluate_loss(const Model& model, const data::Dataset& data, Task task, const ForwardOptions& options) {
  if (data.size() == 0) return 0.0;
  Model copy = model;
  for (Tensor* t : copy.weight_params()) t->requires_grad = false;
  for (Tensor* t : copy.clip_params()) t->requires_grad = false;
  for (Tensor* t : copy.gate_params()) t->requires_grad = false;
  double total = 0.0;
  for_each_chunk(data, [&](const data::Dataset& chunk) {
    Graph g;
    const Var out = forward(g, copy, g.constant(chunk.inputs), options);
    total += task_loss(out, chunk, task).value()[0] * static_cast<double>(chunk.size());
  });
  return total / static_cast<double>(data.size());
}

double reg_value(const Model& model, cost::RegMode mode, const cost::CostLut* lut) {
  Model copy = model;
  for (Tensor* t : copy.gate_params()) t->requires_grad = false;
  Graph g;
  return cost::total_reg(g, copy, mode, lut).value()[0];
}

std::vector<EpochLog> warmup(Model& model, const data::DataSplits& data, const TrainConfig& config,
                             TrainObserver* observer) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  return train_weights(model, data, config, Phase::Warmup, config.epochs_wu, {QuantPhase::Fixed}, rng, observer);
}

SearchEpochStats search_epoch(Model& model, const data::Dataset& train, const TrainConfig& config,
                              PhaseOptimizers& optim, std::mt19937_64& rng, const cost::CostLut* lut,
                              std::size_t epoch, TrainObserver* observer) {
  const ForwardOptions fwd{QuantPhase::Soft};
  const auto batches = shuffled_batches(train.size(), config.batch_size, rng);
  const double gate_samples = config.gate_split * static_cast<double>(train.size());
  const auto weights = model.weight_params();
  const auto clips = model.clip_params();
  const auto gates = model.gate_params();

  SearchEpochStats stats;
  std::optional<double> weight_reg;
  std::size_t seen = 0;
  double task_sum = 0.0, reg_sum = 0.0, total_sum = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const bool gate_batch = static_cast<double>(seen) < gate_samples;
    const BatchInfo info{Phase::Search, epoch, b, gate_batch};
    if (observer) observer->before_batch(info, model);
    const data::Dataset batch = train.subset(batches[b]);
    LossBreakdown lb;
    if (gate_batch) {
      zero_grads(weights);
      zero_grads(clips);
      zero_grads(gates);
      Graph g;
      const Var out = forward(g, model, g.constant(batch.inputs), fwd);
      const Var task = task_loss(out, batch, config.task);
      const Var reg = cost::total_reg(g, model, config.reg_mode, lut);
      const Var total = ops::add(task, ops::scale(reg, config.lambda), "loss");
      g.backward(total);
      optim.gates.step(gates);
      zero_grads(weights);
      zero_grads(clips);
      lb = {task.value()[0], reg.value()[0], total.value()[0]};
      ++stats.gate_batches;
    } else {
      // Gates are constant across the weight batches of an epoch.
      if (!weight_reg) weight_reg = reg_value(model, config.reg_mode, lut);
      lb = weight_step(model, batch, fwd, config.task, optim, *weight_reg, config.lambda);
      ++stats.weight_batches;
    }
    check_finite(lb.total, "search loss", Phase::Search, epoch);
    if (observer) observer->after_batch(info, model, lb);
    seen += batch.size();
    task_sum += lb.task;
    reg_sum += lb.reg;
    total_sum += lb.total;
  }
  const double n = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
  stats.mean = {task_sum / n, reg_sum / n, total_sum / n};
  model.gates.tau = nas::anneal(model.gates.tau, config.anneal_rate);
  return stats;
}

bool early_stop(std::span<const double> val_losses, std::size_t patience) {
  if (val_losses.empty()) return false;
  const auto best = static_cast<std::size_t>(std::min_element(val_losses.begin(), val_losses.end()) -
                                             val_losses.begin());
  return val_losses.size() - 1 - best >= patience;
}

nas::PrecisionAssignment finetune(Model& model, const data::DataSplits& data, const TrainConfig& config,
                                  std::vector<EpochLog>* curve, TrainObserver* observer) {
  nas::PrecisionAssignment assignment = discretize_model(model);
  std::mt19937_64 rng(config.seed + 2);
  const ForwardOptions fwd{QuantPhase::Discrete, &assignment};
  auto logs = train_weights(model, data, config, Phase::Finetune, config.epochs_ft, fwd, rng, observer);
  if (curve) curve->insert(curve->end(), logs.begin(), logs.end());
  return assignment;
}

SearchResult run_search(Model model, const data::DataSplits& data, const TrainConfig& config,
                        const cost::CostLut* lut, TrainObserver* observer) {
  config.validate();
  if (config.reg_mode == cost::RegMode::Energy) {
    if (lut == nullptr) throw ConfigError("energy mode requires a cost LUT");
    lut->validate(model.space.activations, model.space.weights);
  }
  SearchResult result;
  result.lambda = config.lambda;
  model.gates.tau = config.tau0;
  std::mt19937_64 rng(config.seed + 1);
  PhaseOptimizers optim(config);
  std::vector<double> val_losses;
  const ForwardOptions soft{QuantPhase::Soft};
  for (std::size_t epoch = 0; epoch < config.max_search_epochs; ++epoch) {
    const SearchEpochStats stats = search_epoch(model, data.train, config, optim, rng, lut, epoch, observer);
    const double val_loss = evaluate_loss(model, data.val, config.task, soft);
    check_finite(val_loss, "validation loss", Phase::Search, epoch);
    val_losses.push_back(val_loss);
    EpochLog log;
    log.phase = Phase::Search;
    log.epoch = epoch;
    log.task_loss = stats.mean.task;
    log.reg = stats.mean.reg;
    log.total = stats.mean.total;
    log.val_score = score(model, data.val, config.task, soft);
    log.tau = model.gates.tau;
    if (observer) observer->after_epoch(log, model);
    log::debug("search epoch " + std::to_string(epoch) + " task " + std::to_string(log.task_loss) + " reg " +
               std::to_string(log.reg) + " val " + std::to_string(log.val_score) + " tau " +
               std::to_string(log.tau));
    result.curve.push_back(log);
    ++result.search_epochs;
    if (early_stop(val_losses, config.patience)) break;
  }

  result.assignment = finetune(model, data, config, &result.curve, observer);
  const ForwardOptions discrete{QuantPhase::Discrete, &result.assignment};
  result.val_score = score(model, data.val, config.task, discrete);
  result.test_score = score(model, data.test, config.task, discrete);
  result.size_bits = cost::exact_model_size(model.spec, result.assignment);
  if (lut != nullptr) result.energy_uj = cost::exact_model_energy(model.spec, result.assignment, *lut);
  result.model = std::move(model);
  return result;
}

}  // namespace chanmp::train
