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

#include <optional>
#include <span>
#include <string>

#include "chanmp/graph.hpp"
#include "chanmp/kernels.hpp"

namespace chanmp::ops {

using kernels::Accumulation;
using kernels::Conv2dGeometry;
using kernels::PoolGeometry;

Var conv2d(Var x, Var w, std::optional<Var> bias, const Conv2dGeometry& geom,
           Accumulation accum = Accumulation::Standard, const std::string& where = "conv2d");
Var fc(Var x, Var w, std::optional<Var> bias, Accumulation accum = Accumulation::Standard,
       const std::string& where = "fc");

// Backward passes the gradient where the input is strictly positive.
Var relu(Var x);
Var add(Var a, Var b, const std::string& where = "add");
Var avgpool2d(Var x, const PoolGeometry& geom, const std::string& where = "avgpool");
Var maxpool2d(Var x, const PoolGeometry& geom, const std::string& where = "maxpool");
Var flatten(Var x);

Var sum(Var x);
Var scale(Var x, double factor);

// Mean softmax cross-entropy of logits[N,K] against integer labels.
Var cross_entropy(Var logits, std::span<const int> labels);
// Mean squared error over all elements.
Var mse(Var prediction, const Tensor& target);

}  // namespace chanmp::ops
