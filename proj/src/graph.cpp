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

#include "chanmp/graph.hpp"

#include "chanmp/error.hpp"

namespace chanmp {

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  n.value.grad.clear();
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor& param) {
  Node n;
  n.op = "parameter";
  n.value.shape = param.shape;
  n.value.data = param.data;
  n.sink = &param;
  n.needs_grad = param.requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw GraphError(op + ": graph already consumed by backward()");
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.value.grad.clear();
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in, n.op.c_str());
    n.inputs.push_back(in.id());
    n.needs_grad = n.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  ++op_count_;
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  check_owned(loss, "backward");
  if (consumed_) throw GraphError("backward: graph already consumed");
  if (op_count_ == 0) throw GraphError("backward: no forward operations recorded");
  Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw GraphError("backward: loss must be scalar, got shape " + to_string(root.value.shape));
  }
  consumed_ = true;
  if (!root.needs_grad) return;
  root.grad.assign(1, 1.0);

  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    Node& node = nodes_[k];
    if (!node.needs_grad || node.grad.empty()) continue;
    if (node.backward) {
      GradContext ctx;
      ctx.output = node.grad;
      ctx.inputs.reserve(node.inputs.size());
      for (std::size_t in : node.inputs) {
        Node& src = nodes_[in];
        if (src.needs_grad) {
          if (src.grad.empty()) src.grad.assign(src.value.size(), 0.0);
          ctx.inputs.push_back(&src.grad);
        } else {
          ctx.inputs.push_back(nullptr);
        }
      }
      node.backward(ctx);
    }
    if (node.sink != nullptr) {
      auto& dst = node.sink->ensure_grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
    }
  }
}

const Tensor& Graph::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id()].value;
}

const std::vector<double>& Graph::grad(Var v) const {
  check_owned(v, "grad");
  return nodes_[v.id()].grad;
}

const std::string& Graph::op(Var v) const {
  check_owned(v, "op");
  return nodes_[v.id()].op;
}

bool Graph::needs_grad(Var v) const {
  check_owned(v, "needs_grad");
  return nodes_[v.id()].needs_grad;
}

void Graph::check_owned(Var v, const char* where) const {
  if (v.owner() != this || v.id() >= nodes_.size()) {
    throw GraphError(std::string(where) + ": variable does not belong to this graph");
  }
}

}  // namespace chanmp
