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

#include <cstdint>
#include <span>
#include <vector>

#include "chanmp/graph.hpp"
#include "chanmp/tensor.hpp"

namespace chanmp::quant {

inline constexpr int kMinBits = 2;
inline constexpr int kMaxBits = 8;

// Throws UnsupportedPrecision outside [kMinBits, kMaxBits].
void check_bits(int bits);

// Affine mapping of [alpha, beta] onto the integer grid [0, 2^bits - 1].
struct AffineQuantParams {
  int bits = 8;
  double alpha = 0.0;
  double beta = 1.0;
  double eps = 1.0 / 255.0;

  static AffineQuantParams make(int bits, double alpha, double beta);
  std::int32_t max_code() const { return (std::int32_t{1} << bits) - 1; }
};

// clamp_{0..2^n-1}(round((t - alpha) / eps)), rounding half away from zero.
std::int32_t quantize_scalar(double t, const AffineQuantParams& q);
// code*eps + alpha; the top code maps to beta exactly.
double dequantize_scalar(std::int32_t code, const AffineQuantParams& q);

std::vector<std::int32_t> affine_quantize(const Tensor& t, const AffineQuantParams& q);
Tensor fake_quantize(const Tensor& t, const AffineQuantParams& q);

// PACT activation range: [0, clip] unsigned, [-clip, clip] signed.
AffineQuantParams activation_params(double clip, int bits, bool is_signed);
Tensor pact_fakequant(const Tensor& x, double clip, int bits, bool is_signed = false);

// Straight-through backward: dout/dx = 1 for alpha <= x < clip, else 0;
// dout/dclip = 1 where x >= clip (and -1 where x < -clip when signed).
Var pact_act_fakequant(Var x, Var clip, int bits, bool is_signed = false);

// Symmetric per-output-channel weight quantization on [-r_i, r_i] with
// r_i = max |W_i|. A zero channel stays exactly zero.
std::vector<double> channel_ranges(const Tensor& w);
AffineQuantParams weight_params(double range, int bits);
std::int32_t weight_code(double value, double range, int bits);
double weight_dequantize(std::int32_t code, double range, int bits);

// Each channel i quantized at bits[i] (one entry per output channel).
Tensor weight_fakequant(const Tensor& w, std::span<const int> bits);

// STE backward with r_i held constant: gradient passes unchanged.
Var weight_fakequant_per_channel(Var w, int bits);
Var weight_fakequant_mixed(Var w, std::span<const int> bits);

}  // namespace chanmp::quant
