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
#include <optional>
#include <span>
#include <vector>

#include "chanmp/graph.hpp"
#include "chanmp/kernels.hpp"
#include "chanmp/layer.hpp"
#include "chanmp/tensor.hpp"

namespace chanmp::nas {

inline constexpr double kInitialTemperature = 5.0;
inline constexpr double kAnnealRate = 0.0045;

// Strictly increasing bit-widths, each in [2, 8].
class PrecisionSet {
 public:
  PrecisionSet() = default;
  explicit PrecisionSet(std::vector<int> bits);

  const std::vector<int>& bits() const { return bits_; }
  std::size_t size() const { return bits_.size(); }
  int operator[](std::size_t i) const { return bits_[i]; }
  int min() const { return bits_.front(); }
  int max() const { return bits_.back(); }
  bool contains(int b) const;
  std::size_t index_of(int b) const;

  bool operator==(const PrecisionSet&) const = default;

 private:
  std::vector<int> bits_;
};

enum class Granularity {
  Channel,  // one gamma row per output channel
  Layer,    // a single gamma row shared by all channels (layer-wise search)
};

struct SearchSpace {
  PrecisionSet activations{{2, 4, 8}};
  PrecisionSet weights{{2, 4, 8}};
  // When false every effective activation is the max-precision copy.
  bool search_activations = true;
  Granularity granularity = Granularity::Channel;

  bool operator==(const SearchSpace&) const = default;
};

// NAS parameters of one searchable layer.
struct LayerGates {
  std::size_t layer = 0;          // index into the model's layer list
  std::size_t out_channels = 0;
  Tensor delta;                   // [|P_X|]
  Tensor gamma;                   // [C_out, |P_W|], or [1, |P_W|] when tied
};

struct GateState {
  std::vector<LayerGates> layers;
  double tau = kInitialTemperature;

  const LayerGates* find(std::size_t layer) const;
  LayerGates* find(std::size_t layer);
};

// Uniform (all-zero) logits.
LayerGates make_gates(std::size_t layer, std::size_t out_channels, const SearchSpace& space);

// out_i = exp(v_i/tau) / sum_j exp(v_j/tau), max-subtracted.
std::vector<double> softmax_temperature(std::span<const double> v, double tau);
// Independent softmax over each row of logits[R,K].
Var softmax_rows(Var logits, double tau);
// Softmaxed rows of a plain tensor (1-D is treated as one row).
Tensor softmax_rows(const Tensor& logits, double tau);

// sum_k weights[k] * copies[k]; weights has |copies| entries.
Var blend(std::span<const Var> copies, Var weights);
// Per output channel: out_i = sum_k weights[i,k] * copies[k]_i. weights is
// [C_out, K] or [1, K] (broadcast to every channel).
Var blend_channels(std::span<const Var> copies, Var weights);

Var effective_activations(Var x, Var delta, double tau, const PrecisionSet& precisions, Var clip,
                          bool is_signed = false);
Var effective_weights(Var w, Var gamma, double tau, const PrecisionSet& precisions);

struct MixedLayerParams {
  Var weight;
  std::optional<Var> bias;
  Var clip;
  Var delta;
  Var gamma;
};

// Y = layer(X_hat, stack_i(W_hat_i)).
Var mixedprec_layer_forward(const LayerSpec& layer, Var x, const MixedLayerParams& params,
                            double tau, const SearchSpace& space, bool input_signed = false,
                            kernels::Accumulation accum = kernels::Accumulation::Standard);

// tau * exp(-rate).
double anneal(double tau, double rate = kAnnealRate);

struct LayerAssignment {
  std::size_t layer = 0;
  int act_bits = 8;
  std::vector<int> weight_bits;  // one per output channel

  bool operator==(const LayerAssignment&) const = default;
};

struct PrecisionAssignment {
  std::vector<LayerAssignment> layers;

  const LayerAssignment* find(std::size_t layer) const;
  bool operator==(const PrecisionAssignment&) const = default;
};

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

// Argmax of each softmaxed row; ties resolve to the lowest bit-width.
LayerAssignment discretize(const LayerGates& gates, double tau, const SearchSpace& space);
PrecisionAssignment discretize(const GateState& state, const SearchSpace& space);

}  // namespace chanmp::nas
