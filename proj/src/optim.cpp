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

#include "chanmp/optim.hpp"

#include <cmath>

#include "chanmp/error.hpp"

namespace chanmp {

namespace {

template <typename Slots>
void check_slots(Slots& slots, std::span<Tensor* const> params, const char* who) {
  if (slots.empty()) slots.resize(params.size());
  if (slots.size() != params.size()) {
    throw Error(std::string(who) + ": parameter list changed between steps");
  }
}

}  // namespace

void Sgd::step(std::span<Tensor* const> params) {
  check_slots(velocity_, params, "sgd");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (p.grad.empty()) continue;
    auto& v = velocity_[k];
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = config_.momentum * v[i] + p.grad[i];
      p.data[i] -= config_.lr * v[i];
    }
  }
}

void Adam::step(std::span<Tensor* const> params) {
  check_slots(slots_, params, "adam");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (p.grad.empty()) continue;
    Slot& s = slots_[k];
    if (s.m.size() != p.size()) {
      s.m.assign(p.size(), 0.0);
      s.v.assign(p.size(), 0.0);
      s.t = 0;
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      s.m[i] = config_.beta1 * s.m[i] + (1.0 - config_.beta1) * g;
      s.v[i] = config_.beta2 * s.v[i] + (1.0 - config_.beta2) * g * g;
      p.data[i] -= config_.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.eps);
    }
  }
}

void zero_grads(std::span<Tensor* const> params) {
  for (Tensor* p : params) p->grad.clear();
}

}  // namespace chanmp
