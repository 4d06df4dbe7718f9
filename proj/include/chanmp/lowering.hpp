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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chanmp/gates.hpp"
#include "chanmp/model.hpp"

namespace chanmp::lower {

// perm[k] is the original index of the channel placed at position k.
struct ChannelPermutation {
  std::size_t layer = 0;
  std::vector<std::size_t> perm;

  bool is_identity() const;
  bool operator==(const ChannelPermutation&) const = default;
};

// Stable ascending sort of the layer's channels by weight bit-width.
ChannelPermutation plan_permutation(const nas::PrecisionAssignment& assignment, std::size_t layer);

// The conv/fc layer that alone consumes `layer`'s output, possibly through
// relu / pooling / flatten. `block` receives how many consumer input
// features each producer channel spans (H*W after a flatten, else 1).
// Empty when the output fans out, reaches an add or is the network output.
std::optional<std::size_t> sole_consumer(const ModelSpec& spec, std::size_t layer,
                                         std::size_t* block = nullptr, std::string* why = nullptr);

struct SkippedLayer {
  std::size_t layer = 0;
  std::string reason;
};

struct PermutationReport {
  std::vector<std::size_t> applied;
  std::vector<SkippedLayer> skipped;
};

struct PermutedModel {
  Model model;
  nas::PrecisionAssignment assignment;
  PermutationReport report;
};

// Reorders each producer's filters, bias, gate rows and assigned bits, and
// the consumer's input channels. Layers without a sole consumer are left
// alone and listed in the report.
PermutedModel apply_permutation(const Model& model, const nas::PrecisionAssignment& assignment,
                                std::span<const ChannelPermutation> perms);

// One single-precision slice of a layer's filters.
struct SubLayer {
  int weight_bits = 8;
  std::vector<std::size_t> channels;  // output positions in the original layer
  std::vector<double> ranges;         // symmetric range per channel
  std::vector<std::uint8_t> codes;    // [channels, C_in, K_y, K_x] row-major
  std::vector<double> bias;           // empty without bias

  bool contiguous() const;
  bool operator==(const SubLayer&) const = default;
};

struct LoweredLayer {
  std::size_t layer = 0;
  int act_bits = 8;
  double clip = kDefaultClip;
  bool act_signed = false;
  std::vector<SubLayer> subs;  // ascending weight bits

  bool operator==(const LoweredLayer&) const = default;
};

struct LoweredModel {
  ModelSpec spec;
  std::vector<LoweredLayer> layers;  // one per weight layer, in layer order

  const LoweredLayer* find(std::size_t layer) const;
  bool operator==(const LoweredModel&) const = default;
};

std::vector<SubLayer> split_layer(const LayerSpec& layer, const LayerParams& params,
                                  const nas::LayerAssignment& assignment);

// plan -> permute -> split for every weight layer.
LoweredModel lower_model(const Model& model, const nas::PrecisionAssignment& assignment,
                         PermutationReport* report = nullptr);

// Output of one weight layer: sub-layer results scattered to their channels.
Tensor run_layer(const LayerSpec& spec, const LoweredLayer& layer, const Tensor& x);
Tensor run(const LoweredModel& lowered, const Tensor& input);

// Weight bits stored by the lowered model.
double lowered_size_bits(const LoweredModel& lowered);

// Max |original - lowered| over n_inputs random inputs. Both sides use
// order-independent accumulation, so a correct lowering gives exactly 0.
double verify_equivalence(const Model& model, const nas::PrecisionAssignment& assignment,
                          const LoweredModel& lowered, std::size_t n_inputs, std::uint64_t seed);

inline constexpr const char* kLoweredMagic = "CHMPLOWR";
inline constexpr std::uint32_t kLoweredVersion = 1;

void export_lowered(const std::filesystem::path& path, const LoweredModel& lowered);
LoweredModel import_lowered(const std::filesystem::path& path);

}  // namespace chanmp::lower
