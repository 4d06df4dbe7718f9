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
#include <vector>

#include "chanmp/gates.hpp"
#include "chanmp/graph.hpp"
#include "chanmp/kernels.hpp"
#include "chanmp/layer.hpp"
#include "chanmp/tensor.hpp"

namespace chanmp {

// Layers in topological order; the last layer produces the network output.
struct ModelSpec {
  Shape input_shape;  // per sample: {features} or {C, H, W}
  std::vector<LayerSpec> layers;
  // The raw network input is known to be >= 0 (selects unsigned quantization
  // for the first layer's activations).
  bool input_nonnegative = false;

  bool operator==(const ModelSpec&) const = default;
};

// Producer indices of layer `i` with defaults resolved (-1 = network input).
std::vector<int> resolved_inputs(const ModelSpec& spec, std::size_t i);

// Per-sample output shape of every layer. Throws ConfigError on any
// inconsistency, naming the layer.
std::vector<Shape> infer_shapes(const ModelSpec& spec);

// Whether each layer's output is guaranteed non-negative.
std::vector<bool> nonnegative_outputs(const ModelSpec& spec);

std::vector<std::vector<std::size_t>> consumers(const ModelSpec& spec);
std::vector<std::size_t> weight_layers(const ModelSpec& spec);

struct LayerParams {
  Tensor weight;
  Tensor bias;   // empty when the layer has no bias
  Tensor clip;   // PACT clip of the layer's input activations, shape [1]
};

inline constexpr double kDefaultClip = 6.0;
inline constexpr double kClipFloor = 1e-3;

struct Model {
  ModelSpec spec;
  nas::SearchSpace space;
  std::vector<LayerParams> params;  // indexed by layer; empty for non-weight layers
  nas::GateState gates;             // searchable weight layers only

  static Model create(ModelSpec spec, nas::SearchSpace space, std::uint64_t seed,
                      double clip_init = kDefaultClip);

  std::vector<Tensor*> weight_params();  // weights and biases
  std::vector<Tensor*> clip_params();
  std::vector<Tensor*> gate_params();
  void project_clips(double floor = kClipFloor);

  bool operator==(const Model&) const;
};

enum class QuantPhase {
  Fixed,     // every weight layer at the maximum precision (warmup)
  Soft,      // softmax-blended effective tensors (search)
  Discrete,  // hard per-layer/per-channel assignment (fine-tuning, deployment)
};

struct ForwardOptions {
  QuantPhase phase = QuantPhase::Fixed;
  const nas::PrecisionAssignment* assignment = nullptr;  // required for Discrete
  kernels::Accumulation accum = kernels::Accumulation::Standard;
};

// `input` is a batch [N, input_shape...]. Parameters are bound to `graph`
// so that backward() accumulates into the model's tensors.
Var forward(Graph& graph, Model& model, Var input, const ForwardOptions& options);

// Forward without gradient bookkeeping on a copy of the parameters.
Tensor predict(const Model& model, const Tensor& input, const ForwardOptions& options);

// Discretized gates plus pinned (non-searchable) layers at max precision.
nas::PrecisionAssignment discretize_model(const Model& model);

// Throws ConfigError unless `a` covers every weight layer of `spec` with
// bit-widths drawn from `space` and one weight entry per output channel.
void validate_assignment(const ModelSpec& spec, const nas::SearchSpace& space,
                         const nas::PrecisionAssignment& a);

}  // namespace chanmp
