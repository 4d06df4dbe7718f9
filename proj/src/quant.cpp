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

#include "chanmp/quant.hpp"

#include <algorithm>
#include <cmath>

#include "chanmp/error.hpp"

namespace chanmp::quant {

void check_bits(int bits) {
  if (bits < kMinBits || bits > kMaxBits) {
    throw UnsupportedPrecision("unsupported precision " + std::to_string(bits) + " bit (supported " +
                               std::to_string(kMinBits) + ".." + std::to_string(kMaxBits) + ")");
  }
}

AffineQuantParams AffineQuantParams::make(int bits, double alpha, double beta) {
  check_bits(bits);
  if (!(beta > alpha) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw Error("quantizer range [" + std::to_string(alpha) + ", " + std::to_string(beta) +
                "] is empty");
  }
  AffineQuantParams q;
  q.bits = bits;
  q.alpha = alpha;
  q.beta = beta;
  q.eps = (beta - alpha) / static_cast<double>(q.max_code());
  return q;
}

std::int32_t quantize_scalar(double t, const AffineQuantParams& q) {
  if (std::isnan(t)) throw DivergenceError("quantize: NaN input");
  const double r = std::round((t - q.alpha) / q.eps);
  return static_cast<std::int32_t>(std::clamp(r, 0.0, static_cast<double>(q.max_code())));
}

double dequantize_scalar(std::int32_t code, const AffineQuantParams& q) {
  if (code >= q.max_code()) return q.beta;
  return static_cast<double>(code) * q.eps + q.alpha;
}

std::vector<std::int32_t> affine_quantize(const Tensor& t, const AffineQuantParams& q) {
  std::vector<std::int32_t> codes(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) codes[i] = quantize_scalar(t[i], q);
  return codes;
}

Tensor fake_quantize(const Tensor& t, const AffineQuantParams& q) {
  Tensor out(t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = dequantize_scalar(quantize_scalar(t[i], q), q);
  return out;
}

AffineQuantParams activation_params(double clip, int bits, bool is_signed) {
  if (!(clip > 0.0)) throw Error("activation clip must be positive, got " + std::to_string(clip));
  return AffineQuantParams::make(bits, is_signed ? -clip : 0.0, clip);
}

Tensor pact_fakequant(const Tensor& x, double clip, int bits, bool is_signed) {
  return fake_quantize(x, activation_params(clip, bits, is_signed));
}

Var pact_act_fakequant(Var x, Var clip, int bits, bool is_signed) {
  if (clip.value().size() != 1) throw ShapeError("pact: clip must be a scalar");
  const double c = clip.value()[0];
  const AffineQuantParams q = activation_params(c, bits, is_signed);
  Tensor y = fake_quantize(x.value(), q);
  // -1: below range (clip gets -g when signed), 0: inside, +1: at/above clip.
  std::vector<signed char> region(x.value().size());
  for (std::size_t i = 0; i < region.size(); ++i) {
    const double v = x.value()[i];
    region[i] = v >= q.beta ? 1 : (v < q.alpha ? -1 : 0);
  }
  return x.graph().record(
      "pact_fakequant", std::move(y), {x, clip},
      [region = std::move(region), is_signed](GradContext& ctx) {
        double gclip = 0.0;
        for (std::size_t i = 0; i < region.size(); ++i) {
          const double g = ctx.output[i];
          if (region[i] == 0) {
            if (ctx.inputs[0] != nullptr) (*ctx.inputs[0])[i] += g;
          } else if (region[i] > 0) {
            gclip += g;
          } else if (is_signed) {
            gclip -= g;
          }
        }
        if (ctx.inputs[1] != nullptr) (*ctx.inputs[1])[0] += gclip;
      });
}

std::vector<double> channel_ranges(const Tensor& w) {
  if (w.rank() < 1 || w.dim(0) == 0) throw ShapeError("weight quantizer: empty weight tensor");
  const std::size_t channels = w.dim(0);
  const std::size_t per = w.size() / channels;
  std::vector<double> r(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t j = 0; j < per; ++j) r[c] = std::max(r[c], std::fabs(w[c * per + j]));
  }
  return r;
}

AffineQuantParams weight_params(double range, int bits) {
  return AffineQuantParams::make(bits, -range, range);
}

std::int32_t weight_code(double value, double range, int bits) {
  check_bits(bits);
  if (range == 0.0) return 0;
  return quantize_scalar(value, weight_params(range, bits));
}

double weight_dequantize(std::int32_t code, double range, int bits) {
  check_bits(bits);
  if (range == 0.0) return 0.0;
  return dequantize_scalar(code, weight_params(range, bits));
}

Tensor weight_fakequant(const Tensor& w, std::span<const int> bits) {
  const std::vector<double> ranges = channel_ranges(w);
  if (bits.size() != ranges.size()) {
    throw ShapeError("weight quantizer: " + std::to_string(bits.size()) + " bit-widths for " +
                     std::to_string(ranges.size()) + " channels");
  }
  const std::size_t per = w.size() / ranges.size();
  Tensor out(w.shape);
  for (std::size_t c = 0; c < ranges.size(); ++c) {
    check_bits(bits[c]);
    if (ranges[c] == 0.0) continue;
    const AffineQuantParams q = weight_params(ranges[c], bits[c]);
    for (std::size_t j = 0; j < per; ++j) {
      out[c * per + j] = dequantize_scalar(quantize_scalar(w[c * per + j], q), q);
    }
  }
  return out;
}

Var weight_fakequant_mixed(Var w, std::span<const int> bits) {
  Tensor y = weight_fakequant(w.value(), bits);
  return w.graph().record("weight_fakequant", std::move(y), {w}, [](GradContext& ctx) {
    auto& gw = *ctx.inputs[0];
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += ctx.output[i];
  });
}

Var weight_fakequant_per_channel(Var w, int bits) {
  if (w.value().rank() < 1) throw ShapeError("weight quantizer: scalar weight");
  const std::vector<int> all(w.value().dim(0), bits);
  return weight_fakequant_mixed(w, all);
}

}  // namespace chanmp::quant
