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

#include "chanmp/gates.hpp"

#include <algorithm>
#include <cmath>

#include "chanmp/error.hpp"
#include "chanmp/quant.hpp"

namespace chanmp::nas {

PrecisionSet::PrecisionSet(std::vector<int> bits) : bits_(std::move(bits)) {
  if (bits_.empty()) throw ConfigError("precision set is empty");
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    quant::check_bits(bits_[i]);
    if (i > 0 && bits_[i] <= bits_[i - 1]) {
      throw ConfigError("precision set must be strictly increasing");
    }
  }
}

bool PrecisionSet::contains(int b) const {
  return std::find(bits_.begin(), bits_.end(), b) != bits_.end();
}

std::size_t PrecisionSet::index_of(int b) const {
  const auto it = std::find(bits_.begin(), bits_.end(), b);
  if (it == bits_.end()) throw ConfigError(std::to_string(b) + " bit is not in the precision set");
  return static_cast<std::size_t>(it - bits_.begin());
}

const LayerGates* GateState::find(std::size_t layer) const {
  for (const auto& g : layers) {
    if (g.layer == layer) return &g;
  }
  return nullptr;
}

LayerGates* GateState::find(std::size_t layer) {
  for (auto& g : layers) {
    if (g.layer == layer) return &g;
  }
  return nullptr;
}

LayerGates make_gates(std::size_t layer, std::size_t out_channels, const SearchSpace& space) {
  LayerGates g;
  g.layer = layer;
  g.out_channels = out_channels;
  g.delta = Tensor({space.activations.size()}, 0.0);
  const std::size_t rows = space.granularity == Granularity::Channel ? out_channels : 1;
  g.gamma = Tensor({rows, space.weights.size()}, 0.0);
  g.delta.requires_grad = true;
  g.gamma.requires_grad = true;
  return g;
}

std::vector<double> softmax_temperature(std::span<const double> v, double tau) {
  if (!(tau > 0.0)) throw Error("softmax: temperature must be positive");
  if (v.empty()) return {};
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp((v[i] - mx) / tau);
    denom += out[i];
  }
  for (double& o : out) o /= denom;
  return out;
}

namespace {

std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw ShapeError("softmax: logits must be 1-D or 2-D, got " + to_string(t.shape));
}

}  // namespace

Tensor softmax_rows(const Tensor& logits, double tau) {
  const auto [rows, cols] = rows_cols(logits);
  Tensor out(logits.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto p = softmax_temperature(std::span(logits.data).subspan(r * cols, cols), tau);
    std::copy(p.begin(), p.end(), out.data.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return out;
}

Var softmax_rows(Var logits, double tau) {
  Tensor probs = softmax_rows(logits.value(), tau);
  const auto [rows, cols] = rows_cols(logits.value());
  Tensor saved = probs;
  return logits.graph().record(
      "softmax", std::move(probs), {logits},
      [saved = std::move(saved), rows = rows, cols = cols, tau](GradContext& ctx) {
        auto& gl = *ctx.inputs[0];
        for (std::size_t r = 0; r < rows; ++r) {
          const double* p = saved.data.data() + r * cols;
          const double* g = ctx.output.data() + r * cols;
          double dot = 0.0;
          for (std::size_t k = 0; k < cols; ++k) dot += p[k] * g[k];
          for (std::size_t k = 0; k < cols; ++k) gl[r * cols + k] += p[k] * (g[k] - dot) / tau;
        }
      });
}

Var blend(std::span<const Var> copies, Var weights) {
  if (copies.empty()) throw ShapeError("blend: no inputs");
  if (weights.value().size() != copies.size()) {
    throw ShapeError("blend: " + std::to_string(weights.value().size()) + " weights for " +
                     std::to_string(copies.size()) + " tensors");
  }
  const Shape& shape = copies.front().shape();
  Tensor out(shape);
  std::vector<Tensor> saved;
  saved.reserve(copies.size());
  std::vector<Var> inputs(copies.begin(), copies.end());
  for (std::size_t k = 0; k < copies.size(); ++k) {
    const Tensor& c = copies[k].value();
    if (c.shape != shape) throw ShapeError("blend: copies differ in shape");
    const double wk = weights.value()[k];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wk * c[i];
    saved.push_back(c);
  }
  inputs.push_back(weights);
  Tensor wv = weights.value();
  return weights.graph().record(
      "blend", std::move(out), std::move(inputs),
      [saved = std::move(saved), wv = std::move(wv)](GradContext& ctx) {
        const std::size_t k_count = saved.size();
        for (std::size_t k = 0; k < k_count; ++k) {
          if (auto* gc = ctx.inputs[k]) {
            for (std::size_t i = 0; i < gc->size(); ++i) (*gc)[i] += wv[k] * ctx.output[i];
          }
          if (auto* gw = ctx.inputs[k_count]) {
            double acc = 0.0;
            for (std::size_t i = 0; i < saved[k].size(); ++i) acc += saved[k][i] * ctx.output[i];
            (*gw)[k] += acc;
          }
        }
      });
}

Var blend_channels(std::span<const Var> copies, Var weights) {
  if (copies.empty()) throw ShapeError("blend_channels: no inputs");
  const Shape& shape = copies.front().shape();
  if (shape.empty()) throw ShapeError("blend_channels: scalar weights");
  const std::size_t channels = shape[0];
  const std::size_t per = numel(shape) / channels;
  const Tensor& wv = weights.value();
  expect_rank(wv, 2, "blend_channels gates");
  const std::size_t rows = wv.dim(0), k_count = wv.dim(1);
  if (k_count != copies.size() || (rows != channels && rows != 1)) {
    throw ShapeError("blend_channels: gates " + to_string(wv.shape) + " do not match " +
                     std::to_string(copies.size()) + " copies of " + to_string(shape));
  }
  Tensor out(shape);
  std::vector<Tensor> saved;
  saved.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const Tensor& c = copies[k].value();
    if (c.shape != shape) throw ShapeError("blend_channels: copies differ in shape");
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double g = wv[(rows == 1 ? 0 : ch) * k_count + k];
      for (std::size_t j = 0; j < per; ++j) out[ch * per + j] += g * c[ch * per + j];
    }
    saved.push_back(c);
  }
  std::vector<Var> inputs(copies.begin(), copies.end());
  inputs.push_back(weights);
  Tensor wcopy = wv;
  return weights.graph().record(
      "blend_channels", std::move(out), std::move(inputs),
      [saved = std::move(saved), wcopy = std::move(wcopy), channels, per, rows, k_count](GradContext& ctx) {
        for (std::size_t k = 0; k < k_count; ++k) {
          auto* gc = ctx.inputs[k];
          auto* gw = ctx.inputs[k_count];
          for (std::size_t ch = 0; ch < channels; ++ch) {
            const std::size_t row = rows == 1 ? 0 : ch;
            const double g = wcopy[row * k_count + k];
            double acc = 0.0;
            for (std::size_t j = 0; j < per; ++j) {
              const std::size_t i = ch * per + j;
              if (gc != nullptr) (*gc)[i] += g * ctx.output[i];
              acc += saved[k][i] * ctx.output[i];
            }
            if (gw != nullptr) (*gw)[row * k_count + k] += acc;
          }
        }
      });
}

Var effective_activations(Var x, Var delta, double tau, const PrecisionSet& precisions, Var clip,
                          bool is_signed) {
  std::vector<Var> copies;
  copies.reserve(precisions.size());
  for (int bits : precisions.bits()) copies.push_back(quant::pact_act_fakequant(x, clip, bits, is_signed));
  return blend(copies, softmax_rows(delta, tau));
}

Var effective_weights(Var w, Var gamma, double tau, const PrecisionSet& precisions) {
  std::vector<Var> copies;
  copies.reserve(precisions.size());
  for (int bits : precisions.bits()) copies.push_back(quant::weight_fakequant_per_channel(w, bits));
  return blend_channels(copies, softmax_rows(gamma, tau));
}

Var mixedprec_layer_forward(const LayerSpec& layer, Var x, const MixedLayerParams& params,
                            double tau, const SearchSpace& space, bool input_signed,
                            kernels::Accumulation accum) {
  const Var x_hat =
      space.search_activations
          ? effective_activations(x, params.delta, tau, space.activations, params.clip, input_signed)
          : quant::pact_act_fakequant(x, params.clip, space.activations.max(), input_signed);
  const Var w_hat = effective_weights(params.weight, params.gamma, tau, space.weights);
  return apply_weight_layer(layer, x_hat, w_hat, params.bias, accum);
}

double anneal(double tau, double rate) { return tau * std::exp(-rate); }

const LayerAssignment* PrecisionAssignment::find(std::size_t layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return &l;
  }
  return nullptr;
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

LayerAssignment discretize(const LayerGates& gates, double tau, const SearchSpace& space) {
  LayerAssignment a;
  a.layer = gates.layer;
  if (space.search_activations) {
    a.act_bits = space.activations[argmax_lowest(softmax_temperature(gates.delta.data, tau))];
  } else {
    a.act_bits = space.activations.max();
  }
  const Tensor probs = softmax_rows(gates.gamma, tau);
  const std::size_t rows = gates.gamma.dim(0), k = gates.gamma.dim(1);
  a.weight_bits.resize(gates.out_channels);
  for (std::size_t ch = 0; ch < gates.out_channels; ++ch) {
    const std::size_t row = rows == 1 ? 0 : ch;
    a.weight_bits[ch] = space.weights[argmax_lowest(std::span(probs.data).subspan(row * k, k))];
  }
  return a;
}

PrecisionAssignment discretize(const GateState& state, const SearchSpace& space) {
  PrecisionAssignment out;
  out.layers.reserve(state.layers.size());
  for (const auto& g : state.layers) out.layers.push_back(discretize(g, state.tau, space));
  return out;
}

}  // namespace chanmp::nas
