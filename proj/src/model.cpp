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

#include "chanmp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "chanmp/error.hpp"
#include "chanmp/ops.hpp"
#include "chanmp/quant.hpp"

namespace chanmp {

std::vector<int> resolved_inputs(const ModelSpec& spec, std::size_t i) {
  const LayerSpec& l = spec.layers.at(i);
  if (!l.inputs.empty()) return l.inputs;
  return {static_cast<int>(i) - 1};
}

std::vector<Shape> infer_shapes(const ModelSpec& spec) {
  if (spec.input_shape.empty() || numel(spec.input_shape) == 0) {
    throw ConfigError("model: input shape must be non-empty");
  }
  if (spec.layers.empty()) throw ConfigError("model: no layers");
  std::vector<Shape> shapes(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    validate(l);
    const std::string who = "layer " + std::to_string(i) + " '" + l.name + "'";
    const std::vector<int> ins = resolved_inputs(spec, i);
    std::vector<Shape> in_shapes;
    for (int src : ins) {
      if (src < -1 || src >= static_cast<int>(i)) {
        throw ConfigError(who + ": input " + std::to_string(src) + " is not an earlier layer");
      }
      in_shapes.push_back(src < 0 ? spec.input_shape : shapes[static_cast<std::size_t>(src)]);
    }
    const Shape& in = in_shapes.front();
    switch (l.kind) {
      case LayerKind::Conv2d: {
        if (in.size() != 3 || in[0] != l.in_channels) {
          throw ConfigError(who + ": expects [" + std::to_string(l.in_channels) +
                            ",H,W] input, got " + to_string(in));
        }
        const auto oh = kernels::conv_out_extent(in[1], l.kernel_h, l.stride, l.padding);
        const auto ow = kernels::conv_out_extent(in[2], l.kernel_w, l.stride, l.padding);
        if (oh == 0 || ow == 0) throw ConfigError(who + ": kernel larger than input " + to_string(in));
        shapes[i] = {l.out_channels, oh, ow};
        break;
      }
      case LayerKind::Fc:
        if (in.size() != 1 || in[0] != l.in_channels) {
          throw ConfigError(who + ": expects [" + std::to_string(l.in_channels) + "] input, got " +
                            to_string(in));
        }
        shapes[i] = {l.out_channels};
        break;
      case LayerKind::Relu:
        shapes[i] = in;
        break;
      case LayerKind::AvgPool:
      case LayerKind::MaxPool: {
        if (in.size() != 3) throw ConfigError(who + ": pooling expects [C,H,W], got " + to_string(in));
        const auto g = l.pool_geometry();
        const auto oh = kernels::conv_out_extent(in[1], g.window, g.stride, 0);
        const auto ow = kernels::conv_out_extent(in[2], g.window, g.stride, 0);
        if (oh == 0 || ow == 0) throw ConfigError(who + ": window larger than input " + to_string(in));
        shapes[i] = {in[0], oh, ow};
        break;
      }
      case LayerKind::Add:
        if (in_shapes[0] != in_shapes[1]) {
          throw ConfigError(who + ": operand shapes " + to_string(in_shapes[0]) + " and " +
                            to_string(in_shapes[1]) + " differ");
        }
        shapes[i] = in;
        break;
      case LayerKind::Flatten:
        shapes[i] = {numel(in)};
        break;
    }
  }
  return shapes;
}

std::vector<bool> nonnegative_outputs(const ModelSpec& spec) {
  std::vector<bool> nonneg(spec.layers.size(), false);
  auto source = [&](int src) { return src < 0 ? spec.input_nonnegative : nonneg[static_cast<std::size_t>(src)]; };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto ins = resolved_inputs(spec, i);
    switch (spec.layers[i].kind) {
      case LayerKind::Relu:
        nonneg[i] = true;
        break;
      case LayerKind::AvgPool:
      case LayerKind::MaxPool:
      case LayerKind::Flatten:
        nonneg[i] = source(ins[0]);
        break;
      case LayerKind::Add:
        nonneg[i] = source(ins[0]) && source(ins[1]);
        break;
      default:
        nonneg[i] = false;
    }
  }
  return nonneg;
}

std::vector<std::vector<std::size_t>> consumers(const ModelSpec& spec) {
  std::vector<std::vector<std::size_t>> out(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    for (int src : resolved_inputs(spec, i)) {
      if (src >= 0) out[static_cast<std::size_t>(src)].push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> weight_layers(const ModelSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].is_weight_layer()) out.push_back(i);
  }
  return out;
}

Model Model::create(ModelSpec spec, nas::SearchSpace space, std::uint64_t seed, double clip_init) {
  infer_shapes(spec);
  if (!(clip_init > 0.0)) throw ConfigError("clip initialization must be positive");
  Model m;
  m.spec = std::move(spec);
  m.space = std::move(space);
  m.params.resize(m.spec.layers.size());
  std::mt19937_64 rng(seed);
  for (std::size_t i : weight_layers(m.spec)) {
    const LayerSpec& l = m.spec.layers[i];
    LayerParams& p = m.params[i];
    p.weight = Tensor(l.weight_shape());
    const double bound = std::sqrt(6.0 / static_cast<double>(l.weight_volume()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.weight.data) v = dist(rng);
    p.weight.requires_grad = true;
    if (l.has_bias) {
      p.bias = Tensor({l.out_channels}, 0.0);
      p.bias.requires_grad = true;
    }
    p.clip = Tensor::scalar(clip_init);
    p.clip.requires_grad = true;
    if (l.searchable) m.gates.layers.push_back(nas::make_gates(i, l.out_channels, m.space));
  }
  return m;
}

std::vector<Tensor*> Model::weight_params() {
  std::vector<Tensor*> out;
  for (std::size_t i : weight_layers(spec)) {
    out.push_back(&params[i].weight);
    if (spec.layers[i].has_bias) out.push_back(&params[i].bias);
  }
  return out;
}

std::vector<Tensor*> Model::clip_params() {
  std::vector<Tensor*> out;
  for (std::size_t i : weight_layers(spec)) out.push_back(&params[i].clip);
  return out;
}

std::vector<Tensor*> Model::gate_params() {
  std::vector<Tensor*> out;
  for (auto& g : gates.layers) {
    out.push_back(&g.delta);
    out.push_back(&g.gamma);
  }
  return out;
}

void Model::project_clips(double floor) {
  for (Tensor* c : clip_params()) c->data[0] = std::max(c->data[0], floor);
}

namespace {

bool same_values(const Tensor& a, const Tensor& b) { return a.shape == b.shape && a.data == b.data; }

}  // namespace

bool Model::operator==(const Model& other) const {
  if (!(spec == other.spec) || !(space == other.space) || params.size() != other.params.size() ||
      gates.tau != other.gates.tau || gates.layers.size() != other.gates.layers.size()) {
    return false;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!same_values(params[i].weight, other.params[i].weight) ||
        !same_values(params[i].bias, other.params[i].bias) ||
        !same_values(params[i].clip, other.params[i].clip)) {
      return false;
    }
  }
  for (std::size_t k = 0; k < gates.layers.size(); ++k) {
    const auto& a = gates.layers[k];
    const auto& b = other.gates.layers[k];
    if (a.layer != b.layer || a.out_channels != b.out_channels || !same_values(a.delta, b.delta) ||
        !same_values(a.gamma, b.gamma)) {
      return false;
    }
  }
  return true;
}

Var forward(Graph& graph, Model& model, Var input, const ForwardOptions& options) {
  const ModelSpec& spec = model.spec;
  const Shape& in_shape = input.shape();
  if (in_shape.size() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), in_shape.begin() + 1)) {
    throw ShapeError("model input: expected [N," + to_string(spec.input_shape).substr(1) +
                     " got " + to_string(in_shape));
  }
  if (options.phase == QuantPhase::Discrete && options.assignment == nullptr) {
    throw Error("forward: discrete phase needs a precision assignment");
  }
  const std::vector<bool> nonneg = nonnegative_outputs(spec);
  const int act_max = model.space.activations.max();
  const int w_max = model.space.weights.max();

  std::vector<Var> outs(spec.layers.size());
  auto fetch = [&](int src) { return src < 0 ? input : outs[static_cast<std::size_t>(src)]; };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto ins = resolved_inputs(spec, i);
    const Var x = fetch(ins[0]);
    switch (l.kind) {
      case LayerKind::Conv2d:
      case LayerKind::Fc: {
        LayerParams& p = model.params[i];
        const bool input_signed = !(ins[0] < 0 ? spec.input_nonnegative : nonneg[static_cast<std::size_t>(ins[0])]);
        const Var w = graph.parameter(p.weight);
        std::optional<Var> b;
        if (l.has_bias) b = graph.parameter(p.bias);
        const Var clip = graph.parameter(p.clip);
        nas::LayerGates* gates = model.gates.find(i);
        if (options.phase == QuantPhase::Soft && gates != nullptr) {
          nas::MixedLayerParams mp{w, b, clip, graph.parameter(gates->delta), graph.parameter(gates->gamma)};
          outs[i] = nas::mixedprec_layer_forward(l, x, mp, model.gates.tau, model.space, input_signed,
                                                 options.accum);
        } else {
          int act_bits = act_max;
          std::vector<int> w_bits(l.out_channels, w_max);
          if (options.phase == QuantPhase::Discrete) {
            const nas::LayerAssignment* a = options.assignment->find(i);
            if (a == nullptr) throw ConfigError("assignment has no entry for layer '" + l.name + "'");
            if (a->weight_bits.size() != l.out_channels) {
              throw ConfigError("assignment for layer '" + l.name + "' has " +
                                std::to_string(a->weight_bits.size()) + " channels, expected " +
                                std::to_string(l.out_channels));
            }
            act_bits = a->act_bits;
            w_bits = a->weight_bits;
          }
          const Var xq = quant::pact_act_fakequant(x, clip, act_bits, input_signed);
          const Var wq = quant::weight_fakequant_mixed(w, w_bits);
          outs[i] = apply_weight_layer(l, xq, wq, b, options.accum);
        }
        break;
      }
      case LayerKind::Relu:
        outs[i] = ops::relu(x);
        break;
      case LayerKind::AvgPool:
        outs[i] = ops::avgpool2d(x, l.pool_geometry(), l.name);
        break;
      case LayerKind::MaxPool:
        outs[i] = ops::maxpool2d(x, l.pool_geometry(), l.name);
        break;
      case LayerKind::Add:
        outs[i] = ops::add(x, fetch(ins[1]), l.name);
        break;
      case LayerKind::Flatten:
        outs[i] = ops::flatten(x);
        break;
    }
  }
  return outs.back();
}

Tensor predict(const Model& model, const Tensor& input, const ForwardOptions& options) {
  Model copy = model;
  for (Tensor* t : copy.weight_params()) t->requires_grad = false;
  for (Tensor* t : copy.clip_params()) t->requires_grad = false;
  for (Tensor* t : copy.gate_params()) t->requires_grad = false;
  Graph g;
  return forward(g, copy, g.constant(input), options).value();
}

nas::PrecisionAssignment discretize_model(const Model& model) {
  nas::PrecisionAssignment out;
  for (std::size_t i : weight_layers(model.spec)) {
    if (const nas::LayerGates* g = model.gates.find(i)) {
      out.layers.push_back(nas::discretize(*g, model.gates.tau, model.space));
    } else {
      nas::LayerAssignment a;
      a.layer = i;
      a.act_bits = model.space.activations.max();
      a.weight_bits.assign(model.spec.layers[i].out_channels, model.space.weights.max());
      out.layers.push_back(std::move(a));
    }
  }
  return out;
}

void validate_assignment(const ModelSpec& spec, const nas::SearchSpace& space,
                         const nas::PrecisionAssignment& a) {
  const auto wl = weight_layers(spec);
  if (a.layers.size() != wl.size()) {
    throw ConfigError("assignment covers " + std::to_string(a.layers.size()) + " layers, model has " +
                      std::to_string(wl.size()) + " weight layers");
  }
  for (std::size_t k = 0; k < wl.size(); ++k) {
    const nas::LayerAssignment& la = a.layers[k];
    const LayerSpec& l = spec.layers[wl[k]];
    if (la.layer != wl[k]) throw ConfigError("assignment layer order does not match the model");
    if (!space.activations.contains(la.act_bits)) {
      throw ConfigError("layer '" + l.name + "': activation precision " + std::to_string(la.act_bits) +
                        " not in the search space");
    }
    if (la.weight_bits.size() != l.out_channels) {
      throw ConfigError("layer '" + l.name + "': " + std::to_string(la.weight_bits.size()) +
                        " weight precisions for " + std::to_string(l.out_channels) + " channels");
    }
    for (int b : la.weight_bits) {
      if (!space.weights.contains(b)) {
        throw ConfigError("layer '" + l.name + "': weight precision " + std::to_string(b) +
                          " not in the search space");
      }
    }
  }
}

}  // namespace chanmp
