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

#include "chanmp/layer.hpp"

#include <array>
#include <utility>

#include "chanmp/error.hpp"
#include "chanmp/ops.hpp"

namespace chanmp {

namespace {

constexpr std::array<std::pair<LayerKind, const char*>, 7> kKindNames{{
    {LayerKind::Conv2d, "conv2d"},
    {LayerKind::Fc, "fc"},
    {LayerKind::Relu, "relu"},
    {LayerKind::AvgPool, "avgpool"},
    {LayerKind::MaxPool, "maxpool"},
    {LayerKind::Add, "add"},
    {LayerKind::Flatten, "flatten"},
}};

}  // namespace

std::string to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  throw ConfigError("unknown layer kind '" + name + "'");
}

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::Conv2d) return {out_channels, in_channels, kernel_h, kernel_w};
  if (kind == LayerKind::Fc) return {out_channels, in_channels};
  return {};
}

void validate(const LayerSpec& layer) {
  const std::string who = "layer '" + layer.name + "' (" + to_string(layer.kind) + ")";
  if (layer.is_weight_layer()) {
    if (layer.in_channels == 0 || layer.out_channels == 0) {
      throw ConfigError(who + ": channel counts must be positive");
    }
    if (layer.kind == LayerKind::Conv2d && (layer.kernel_h == 0 || layer.kernel_w == 0 || layer.stride == 0)) {
      throw ConfigError(who + ": kernel and stride must be positive");
    }
    if (layer.kind == LayerKind::Fc && (layer.kernel_h != 1 || layer.kernel_w != 1)) {
      throw ConfigError(who + ": fully-connected layers have 1x1 kernels");
    }
  }
  if ((layer.kind == LayerKind::AvgPool || layer.kind == LayerKind::MaxPool) && layer.window == 0) {
    throw ConfigError(who + ": pooling window must be positive");
  }
  if (layer.kind == LayerKind::Add && layer.inputs.size() != 2) {
    throw ConfigError(who + ": add takes exactly two inputs");
  }
  if (layer.kind != LayerKind::Add && layer.inputs.size() > 1) {
    throw ConfigError(who + ": only add layers take more than one input");
  }
}

Var apply_weight_layer(const LayerSpec& layer, Var x, Var w, std::optional<Var> bias,
                       kernels::Accumulation accum) {
  if (layer.kind == LayerKind::Conv2d) {
    return ops::conv2d(x, w, bias, layer.conv_geometry(), accum, layer.name);
  }
  if (layer.kind == LayerKind::Fc) return ops::fc(x, w, bias, accum, layer.name);
  throw ConfigError("layer '" + layer.name + "' has no weights");
}

}  // namespace chanmp
