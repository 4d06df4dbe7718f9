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

#include "chanmp/cost.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "chanmp/error.hpp"
#include "chanmp/ops.hpp"

namespace chanmp::cost {

void CostLut::set(int px, int pw, double pj) {
  if (!(pj > 0.0) || !std::isfinite(pj)) {
    throw ConfigError("cost LUT: entry (" + std::to_string(px) + "," + std::to_string(pw) +
                      ") must be positive");
  }
  table_[{px, pw}] = pj;
}

double CostLut::at(int px, int pw) const {
  const auto it = table_.find({px, pw});
  if (it == table_.end()) {
    throw ConfigError("cost LUT: no entry for " + std::to_string(px) + "-bit activations x " +
                      std::to_string(pw) + "-bit weights");
  }
  return it->second;
}

void CostLut::validate(const nas::PrecisionSet& px, const nas::PrecisionSet& pw) const {
  for (int a : px.bits()) {
    for (int w : pw.bits()) at(a, w);
  }
}

CostLut CostLut::uniform(const nas::PrecisionSet& px, const nas::PrecisionSet& pw, double pj) {
  CostLut lut;
  lut.hardware = "uniform";
  for (int a : px.bits()) {
    for (int w : pw.bits()) lut.set(a, w, pj);
  }
  return lut;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size()) {
    throw ConfigError("cost LUT line " + std::to_string(line) + ": bad number '" + field + "'");
  }
  return v;
}

int parse_bits(const std::string& field, std::size_t line) {
  const double v = parse_number(field, line);
  if (v != std::floor(v)) {
    throw ConfigError("cost LUT line " + std::to_string(line) + ": bit-width '" + field +
                      "' is not an integer");
  }
  return static_cast<int>(v);
}

}  // namespace

CostLut CostLut::parse_csv(std::istream& in) {
  CostLut lut;
  std::string raw;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(line.substr(1, colon - 1));
      const std::string value = trim(line.substr(colon + 1));
      if (key == "hardware") lut.hardware = value;
      if (key == "clock_mhz") lut.clock_mhz = parse_number(value, line_no);
      continue;
    }
    if (!header) {
      if (line != "px,pw,pj_per_mac") {
        throw ConfigError("cost LUT: expected header 'px,pw,pj_per_mac', got '" + line + "'");
      }
      header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 3) {
      throw ConfigError("cost LUT line " + std::to_string(line_no) + ": expected 3 fields");
    }
    const int px = parse_bits(fields[0], line_no);
    const int pw = parse_bits(fields[1], line_no);
    if (lut.contains(px, pw)) {
      throw ConfigError("cost LUT line " + std::to_string(line_no) + ": duplicate pair (" +
                        fields[0] + "," + fields[1] + ")");
    }
    lut.set(px, pw, parse_number(fields[2], line_no));
  }
  if (!header) throw ConfigError("cost LUT: missing header");
  return lut;
}

CostLut CostLut::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cost LUT: cannot open " + path.string());
  return parse_csv(in);
}

void CostLut::write_csv(std::ostream& out) const {
  if (!hardware.empty()) out << "# hardware: " << hardware << '\n';
  if (clock_mhz > 0.0) out << "# clock_mhz: " << clock_mhz << '\n';
  out << "px,pw,pj_per_mac\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& [key, pj] : table_) out << key.first << ',' << key.second << ',' << pj << '\n';
}

LayerCostContext cost_context(const LayerSpec& layer, const Shape& out_shape) {
  if (!layer.is_weight_layer()) throw ConfigError("layer '" + layer.name + "' has no cost");
  LayerCostContext ctx;
  ctx.weight_volume = layer.weight_volume();
  ctx.out_channels = layer.out_channels;
  const std::size_t spatial = layer.kind == LayerKind::Conv2d ? numel(out_shape) / layer.out_channels : 1;
  ctx.omega = static_cast<double>(layer.out_channels * layer.weight_volume() * spatial);
  return ctx;
}

namespace {

std::pair<std::size_t, std::size_t> gate_dims(const Tensor& gamma_hat, std::size_t choices,
                                              std::size_t channels, const char* who) {
  expect_rank(gamma_hat, 2, who);
  const std::size_t rows = gamma_hat.dim(0);
  if (gamma_hat.dim(1) != choices || (rows != channels && rows != 1)) {
    throw ShapeError(std::string(who) + ": gates " + chanmp::to_string(gamma_hat.shape) + " for " +
                     std::to_string(channels) + " channels x " + std::to_string(choices) +
                     " precisions");
  }
  return {rows, choices};
}

// Multiplier turning a sum over gamma rows into a sum over channels.
double channels_per_row(const LayerCostContext& ctx, std::size_t rows) {
  return rows == ctx.out_channels ? 1.0 : static_cast<double>(ctx.out_channels);
}

double size_value(const LayerCostContext& ctx, const Tensor& g, const nas::PrecisionSet& pw) {
  const auto [rows, k] = gate_dims(g, pw.size(), ctx.out_channels, "size_reg");
  double bits = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) row += g[r * k + j] * pw[j];
    bits += row;
  }
  return static_cast<double>(ctx.weight_volume) * (channels_per_row(ctx, rows) * bits);
}

// S[x] = sum_i sum_pw gamma_hat[i,pw] * C(px_x, pw), per activation precision.
std::vector<double> channel_costs(const Tensor& g, const CostLut& lut, const nas::PrecisionSet& px,
                                  const nas::PrecisionSet& pw, std::size_t rows) {
  const std::size_t k = pw.size();
  std::vector<double> s(px.size(), 0.0);
  for (std::size_t x = 0; x < px.size(); ++x) {
    for (std::size_t r = 0; r < rows; ++r) {
      double row = 0.0;
      for (std::size_t j = 0; j < k; ++j) row += g[r * k + j] * lut.at(px[x], pw[j]);
      s[x] += row;
    }
  }
  return s;
}

double energy_value(const LayerCostContext& ctx, const Tensor& d, const Tensor& g, const CostLut& lut,
                    const nas::PrecisionSet& px, const nas::PrecisionSet& pw) {
  const auto [rows, k] = gate_dims(g, pw.size(), ctx.out_channels, "energy_reg");
  if (d.size() != px.size()) throw ShapeError("energy_reg: activation gates do not match P_X");
  const std::vector<double> s = channel_costs(g, lut, px, pw, rows);
  double expected = 0.0;
  for (std::size_t x = 0; x < px.size(); ++x) expected += d[x] * (s[x] / static_cast<double>(rows));
  return ctx.omega * expected;
}

}  // namespace

double size_reg(const LayerCostContext& ctx, const Tensor& gamma_hat, const nas::PrecisionSet& pw) {
  return size_value(ctx, gamma_hat, pw);
}

Var size_reg(const LayerCostContext& ctx, Var gamma_hat, const nas::PrecisionSet& pw) {
  const Tensor& g = gamma_hat.value();
  const double value = size_value(ctx, g, pw);
  const auto [rows, k] = gate_dims(g, pw.size(), ctx.out_channels, "size_reg");
  const double factor = static_cast<double>(ctx.weight_volume) * channels_per_row(ctx, rows);
  std::vector<int> bits = pw.bits();
  return gamma_hat.graph().record("size_reg", Tensor::scalar(value), {gamma_hat},
                                  [factor, bits = std::move(bits), rows = rows, k = k](GradContext& ctx_) {
                                    auto& gg = *ctx_.inputs[0];
                                    for (std::size_t r = 0; r < rows; ++r) {
                                      for (std::size_t j = 0; j < k; ++j) {
                                        gg[r * k + j] += ctx_.output[0] * factor * bits[j];
                                      }
                                    }
                                  });
}

double energy_reg(const LayerCostContext& ctx, const Tensor& delta_hat, const Tensor& gamma_hat,
                  const CostLut& lut, const nas::PrecisionSet& px, const nas::PrecisionSet& pw) {
  return energy_value(ctx, delta_hat, gamma_hat, lut, px, pw);
}

Var energy_reg(const LayerCostContext& ctx, Var delta_hat, Var gamma_hat, const CostLut& lut,
               const nas::PrecisionSet& px, const nas::PrecisionSet& pw) {
  const Tensor& d = delta_hat.value();
  const Tensor& g = gamma_hat.value();
  const double value = energy_value(ctx, d, g, lut, px, pw);
  const auto [rows, k] = gate_dims(g, pw.size(), ctx.out_channels, "energy_reg");
  const std::vector<double> s = channel_costs(g, lut, px, pw, rows);
  std::vector<double> costs(px.size() * k);
  for (std::size_t x = 0; x < px.size(); ++x) {
    for (std::size_t j = 0; j < k; ++j) costs[x * k + j] = lut.at(px[x], pw[j]);
  }
  const double scale = ctx.omega / static_cast<double>(rows);
  return delta_hat.graph().record(
      "energy_reg", Tensor::scalar(value), {delta_hat, gamma_hat},
      [s, costs = std::move(costs), dv = d.data, scale, rows = rows, k = k](GradContext& c) {
        const double up = c.output[0];
        if (auto* gd = c.inputs[0]) {
          for (std::size_t x = 0; x < s.size(); ++x) (*gd)[x] += up * scale * s[x];
        }
        if (auto* gg = c.inputs[1]) {
          for (std::size_t j = 0; j < k; ++j) {
            double mix = 0.0;
            for (std::size_t x = 0; x < dv.size(); ++x) mix += dv[x] * costs[x * k + j];
            for (std::size_t r = 0; r < rows; ++r) (*gg)[r * k + j] += up * scale * mix;
          }
        }
      });
}

std::string to_string(RegMode mode) { return mode == RegMode::Size ? "size" : "energy"; }

RegMode parse_reg_mode(const std::string& s) {
  if (s == "size") return RegMode::Size;
  if (s == "energy") return RegMode::Energy;
  throw ConfigError("unknown regularizer mode '" + s + "' (expected size or energy)");
}

Var total_reg(Graph& graph, Model& model, RegMode mode, const CostLut* lut) {
  if (mode == RegMode::Energy && lut == nullptr) throw ConfigError("energy regularizer needs a cost LUT");
  const std::vector<Shape> shapes = infer_shapes(model.spec);
  const double tau = model.gates.tau;
  Var total = graph.constant(Tensor::scalar(0.0));
  for (nas::LayerGates& gates : model.gates.layers) {
    const LayerCostContext ctx = cost_context(model.spec.layers[gates.layer], shapes[gates.layer]);
    const Var gamma_hat = nas::softmax_rows(graph.parameter(gates.gamma), tau);
    Var term;
    if (mode == RegMode::Size) {
      term = size_reg(ctx, gamma_hat, model.space.weights);
    } else {
      Var delta_hat;
      if (model.space.search_activations) {
        delta_hat = nas::softmax_rows(graph.parameter(gates.delta), tau);
      } else {
        Tensor one_hot({model.space.activations.size()}, 0.0);
        one_hot.data.back() = 1.0;
        delta_hat = graph.constant(std::move(one_hot));
      }
      term = energy_reg(ctx, delta_hat, gamma_hat, *lut, model.space.activations, model.space.weights);
    }
    total = ops::add(total, term, "total_reg");
  }
  return total;
}

namespace {

template <typename PerLayer>
double accumulate_layers(const ModelSpec& spec, const nas::PrecisionAssignment& assignment,
                         PerLayer&& per_layer) {
  const std::vector<Shape> shapes = infer_shapes(spec);
  double total = 0.0;
  for (const nas::LayerAssignment& la : assignment.layers) {
    if (la.layer >= spec.layers.size() || !spec.layers[la.layer].is_weight_layer()) {
      throw ConfigError("assignment refers to layer " + std::to_string(la.layer) +
                        ", which has no weights");
    }
    const LayerSpec& l = spec.layers[la.layer];
    if (la.weight_bits.size() != l.out_channels) {
      throw ConfigError("assignment for layer '" + l.name + "' has the wrong channel count");
    }
    total += per_layer(cost_context(l, shapes[la.layer]), la);
  }
  return total;
}

}  // namespace

double exact_model_size(const ModelSpec& spec, const nas::PrecisionAssignment& assignment) {
  return accumulate_layers(spec, assignment, [](const LayerCostContext& ctx, const nas::LayerAssignment& la) {
    double bits = 0.0;
    for (int b : la.weight_bits) bits += b;
    return static_cast<double>(ctx.weight_volume) * (1.0 * bits);
  });
}

double exact_model_energy_pj(const ModelSpec& spec, const nas::PrecisionAssignment& assignment,
                             const CostLut& lut) {
  return accumulate_layers(spec, assignment, [&](const LayerCostContext& ctx, const nas::LayerAssignment& la) {
    double s = 0.0;
    for (int b : la.weight_bits) s += lut.at(la.act_bits, b);
    return ctx.omega * (s / static_cast<double>(la.weight_bits.size()));
  });
}

double exact_model_energy(const ModelSpec& spec, const nas::PrecisionAssignment& assignment,
                          const CostLut& lut) {
  return exact_model_energy_pj(spec, assignment, lut) * 1e-6;
}

double count_search_space(std::span<const std::size_t> out_channels, std::size_t weight_choices,
                          std::size_t act_choices, SpaceMode mode) {
  if (weight_choices == 0 || act_choices == 0) throw ConfigError("search space: empty precision set");
  const double lw = std::log10(static_cast<double>(weight_choices));
  const double lx = std::log10(static_cast<double>(act_choices));
  const double layers = static_cast<double>(out_channels.size());
  if (mode == SpaceMode::LayerWise) return layers * (lw + lx);
  double channels = 0.0;
  for (std::size_t c : out_channels) channels += static_cast<double>(c);
  return layers * lx + channels * lw;
}

}  // namespace chanmp::cost
