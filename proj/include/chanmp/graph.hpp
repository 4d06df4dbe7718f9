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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "chanmp/tensor.hpp"

namespace chanmp {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  const Graph* owner() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient buffers handed to a backward rule. `inputs[k]` is null when the
// k-th input does not need a gradient.
struct GradContext {
  std::span<const double> output;
  std::vector<std::vector<double>*> inputs;
};

using BackwardFn = std::function<void(GradContext&)>;

// Tape of operations in construction order. backward() walks the tape in
// exact reverse and finally accumulates leaf gradients into the parameter
// tensors they were bound from.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Binds a parameter; its value is snapshotted and backward() adds the
  // gradient into `param.grad` (allocating it if needed).
  Var parameter(Tensor& param);

  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  void backward(Var loss);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() wrt `v`; empty if it received none.
  const std::vector<double>& grad(Var v) const;
  const std::string& op(Var v) const;
  bool needs_grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t op_count() const { return op_count_; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor* sink = nullptr;
    bool needs_grad = false;
  };

  void check_owned(Var v, const char* where) const;

  std::vector<Node> nodes_;
  std::size_t op_count_ = 0;
  bool consumed_ = false;
};

}  // namespace chanmp
