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

#include "support/phase_audit.hpp"

namespace chanmp::probe {

namespace {

std::vector<const Tensor*> weight_tensors(const Model& m) {
  std::vector<const Tensor*> out;
  for (std::size_t i : weight_layers(m.spec)) {
    out.push_back(&m.params[i].weight);
    out.push_back(&m.params[i].bias);
  }
  return out;
}

std::vector<const Tensor*> clip_tensors(const Model& m) {
  std::vector<const Tensor*> out;
  for (std::size_t i : weight_layers(m.spec)) out.push_back(&m.params[i].clip);
  return out;
}

std::vector<const Tensor*> gate_tensors(const Model& m) {
  std::vector<const Tensor*> out;
  for (const auto& g : m.gates.layers) {
    out.push_back(&g.delta);
    out.push_back(&g.gamma);
  }
  return out;
}

}  // namespace

std::vector<double> PhaseAudit::flatten(const std::vector<const Tensor*>& ts) {
  std::vector<double> out;
  for (const Tensor* t : ts) out.insert(out.end(), t->data.begin(), t->data.end());
  return out;
}

void PhaseAudit::before_batch(const train::BatchInfo&, const Model& model) {
  weights_ = flatten(weight_tensors(model));
  clips_ = flatten(clip_tensors(model));
  gates_ = flatten(gate_tensors(model));
}

void PhaseAudit::after_batch(const train::BatchInfo& info, const Model& model, const train::LossBreakdown&) {
  const bool w_same = flatten(weight_tensors(model)) == weights_;
  const bool c_same = flatten(clip_tensors(model)) == clips_;
  const bool g_same = flatten(gate_tensors(model)) == gates_;
  const std::string where = train::to_string(info.phase) + " epoch " + std::to_string(info.epoch) + " batch " +
                            std::to_string(info.batch);
  if (info.phase == train::Phase::Search && info.gate_batch) {
    ++gate_batches;
    if (!w_same) violations.push_back(where + ": weights moved on a gate batch");
    if (!c_same) violations.push_back(where + ": clips moved on a gate batch");
    if (!g_same) ++gate_batches_that_moved_gates;
  } else {
    if (!g_same) violations.push_back(where + ": gates moved outside a gate batch");
    if (info.phase == train::Phase::Search) ++weight_batches;
    if (info.phase == train::Phase::Warmup) ++warmup_batches;
    if (info.phase == train::Phase::Finetune) ++finetune_batches;
  }
}

void PhaseAudit::after_epoch(const train::EpochLog& log, const Model&) {
  if (log.phase == train::Phase::Search) search_taus.push_back(log.tau);
}

}  // namespace chanmp::probe
