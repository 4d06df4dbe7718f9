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
#include <string>
#include <vector>

#include "chanmp/graph.hpp"
#include "chanmp/kernels.hpp"

namespace chanmp {

enum class LayerKind { Conv2d, Fc, Relu, AvgPool, MaxPool, Add, Flatten };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

// One node of a sequential-with-residuals network. A fully-connected layer
// uses in_channels/out_channels as its feature counts and is costed as a
// 1x1 convolution on a 1x1 map.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  // Producer layer indices; -1 is the network input. Empty means "previous
  // layer" (or the network input for layer 0).
  std::vector<int> inputs;

  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t window = 2;
  std::size_t pool_stride = 0;  // 0: same as window

  bool has_bias = true;
  bool searchable = true;

  bool is_weight_layer() const { return kind == LayerKind::Conv2d || kind == LayerKind::Fc; }
  // C_in * K_x * K_y: weights per output channel.
  std::size_t weight_volume() const { return in_channels * kernel_h * kernel_w; }
  Shape weight_shape() const;
  kernels::Conv2dGeometry conv_geometry() const { return {stride, padding}; }
  kernels::PoolGeometry pool_geometry() const {
    return {window, pool_stride == 0 ? window : pool_stride};
  }

  bool operator==(const LayerSpec&) const = default;
};

// Throws ConfigError naming the layer when the geometry is not positive.
void validate(const LayerSpec& layer);

// conv2d or fc depending on the layer kind.
Var apply_weight_layer(const LayerSpec& layer, Var x, Var w, std::optional<Var> bias,
                       kernels::Accumulation accum = kernels::Accumulation::Standard);

}  // namespace chanmp
