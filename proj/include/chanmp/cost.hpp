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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "chanmp/gates.hpp"
#include "chanmp/graph.hpp"
#include "chanmp/layer.hpp"
#include "chanmp/model.hpp"

namespace chanmp::cost {

// Energy per MAC (pJ) for each (activation bits, weight bits) pair.
//
// CSV form: optional `# key: value` metadata lines (hardware, clock_mhz),
// then the header `px,pw,pj_per_mac` and one row per pair.
class CostLut {
 public:
  std::string hardware;
  double clock_mhz = 0.0;

  void set(int px, int pw, double pj);
  // Throws ConfigError when the pair is missing.
  double at(int px, int pw) const;
  bool contains(int px, int pw) const { return table_.count({px, pw}) != 0; }
  std::size_t size() const { return table_.size(); }
  const std::map<std::pair<int, int>, double>& table() const { return table_; }

  // Every pair of P_X x P_W must be present.
  void validate(const nas::PrecisionSet& px, const nas::PrecisionSet& pw) const;

  static CostLut uniform(const nas::PrecisionSet& px, const nas::PrecisionSet& pw, double pj);
  static CostLut parse_csv(std::istream& in);
  static CostLut load_csv(const std::filesystem::path& path);
  void write_csv(std::ostream& out) const;

 private:
  std::map<std::pair<int, int>, double> table_;
};

struct LayerCostContext {
  double omega = 0.0;              // MACs to produce the layer output
  std::size_t weight_volume = 0;   // C_in * K_x * K_y
  std::size_t out_channels = 0;
};

// `out_shape` is the layer's per-sample output shape.
LayerCostContext cost_context(const LayerSpec& layer, const Shape& out_shape);

// C_in*K_x*K_y * sum_i sum_pw gamma_hat[i,pw] * pw. A single gamma row
// stands for all C_out channels.
Var size_reg(const LayerCostContext& ctx, Var gamma_hat, const nas::PrecisionSet& pw);
double size_reg(const LayerCostContext& ctx, const Tensor& gamma_hat, const nas::PrecisionSet& pw);

// Omega * sum_px delta_hat[px] * (1/C_out) sum_i sum_pw gamma_hat[i,pw] * C(px,pw), in pJ.
Var energy_reg(const LayerCostContext& ctx, Var delta_hat, Var gamma_hat, const CostLut& lut,
               const nas::PrecisionSet& px, const nas::PrecisionSet& pw);
double energy_reg(const LayerCostContext& ctx, const Tensor& delta_hat, const Tensor& gamma_hat,
                  const CostLut& lut, const nas::PrecisionSet& px, const nas::PrecisionSet& pw);

enum class RegMode { Size, Energy };

std::string to_string(RegMode mode);
RegMode parse_reg_mode(const std::string& s);

// Sum of the per-layer regularizer over the searchable layers, using the
// model's current gates and temperature. `lut` is required in energy mode.
Var total_reg(Graph& graph, Model& model, RegMode mode, const CostLut* lut);

double exact_model_size(const ModelSpec& spec, const nas::PrecisionAssignment& assignment);
double exact_model_energy_pj(const ModelSpec& spec, const nas::PrecisionAssignment& assignment,
                             const CostLut& lut);
// Same as exact_model_energy_pj, in microjoules.
double exact_model_energy(const ModelSpec& spec, const nas::PrecisionAssignment& assignment,
                          const CostLut& lut);

enum class SpaceMode { LayerWise, ChannelWise };

// log10 of the number of distinct precision assignments for layers with the
// given output-channel counts.
double count_search_space(std::span<const std::size_t> out_channels, std::size_t weight_choices,
                          std::size_t act_choices, SpaceMode mode);

}  // namespace chanmp::cost
