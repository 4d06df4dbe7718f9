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
#include <span>
#include <vector>

#include "chanmp/tensor.hpp"

namespace chanmp {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
};

// SGD with heavy-ball momentum: v <- mu*v + g; p <- p - lr*v.
// State is positional: every call must pass the same parameter list.
// Tensors with an empty gradient are skipped (state untouched).
class Sgd {
 public:
  explicit Sgd(SgdConfig config = {}) : config_(config) {}
  void step(std::span<Tensor* const> params);
  const SgdConfig& config() const { return config_; }

 private:
  SgdConfig config_;
  std::vector<std::vector<double>> velocity_;
};

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction; per-tensor step counters.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(std::span<Tensor* const> params);
  const AdamConfig& config() const { return config_; }

 private:
  struct Slot {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  AdamConfig config_;
  std::vector<Slot> slots_;
};

void zero_grads(std::span<Tensor* const> params);

}  // namespace chanmp
