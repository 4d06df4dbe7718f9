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

#include "chanmp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "chanmp/error.hpp"

namespace chanmp::ops {

Var conv2d(Var x, Var w, std::optional<Var> bias, const Conv2dGeometry& geom, Accumulation accum,
           const std::string& where) {
  Graph& g = x.graph();
  const Tensor* b = bias ? &bias->value() : nullptr;
  Tensor y = kernels::conv2d(x.value(), w.value(), b, geom, accum, where);
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  Tensor xv = x.value();
  Tensor wv = w.value();
  const bool has_bias = bias.has_value();
  return g.record("conv2d", std::move(y), std::move(inputs),
                  [xv = std::move(xv), wv = std::move(wv), geom, has_bias](GradContext& ctx) {
                    std::vector<double> grad_out(ctx.output.begin(), ctx.output.end());
                    kernels::conv2d_backward(xv, wv, grad_out, geom, ctx.inputs[0], ctx.inputs[1],
                                             has_bias ? ctx.inputs[2] : nullptr);
                  });
}

Var fc(Var x, Var w, std::optional<Var> bias, Accumulation accum, const std::string& where) {
  Graph& g = x.graph();
  const Tensor* b = bias ? &bias->value() : nullptr;
  Tensor y = kernels::linear(x.value(), w.value(), b, accum, where);
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  Tensor xv = x.value();
  Tensor wv = w.value();
  const bool has_bias = bias.has_value();
  return g.record("fc", std::move(y), std::move(inputs),
                  [xv = std::move(xv), wv = std::move(wv), has_bias](GradContext& ctx) {
                    std::vector<double> grad_out(ctx.output.begin(), ctx.output.end());
                    kernels::linear_backward(xv, wv, grad_out, ctx.inputs[0], ctx.inputs[1],
                                             has_bias ? ctx.inputs[2] : nullptr);
                  });
}

Var relu(Var x) {
  Tensor y = kernels::relu(x.value());
  std::vector<bool> pass(x.value().size());
  for (std::size_t i = 0; i < pass.size(); ++i) pass[i] = x.value()[i] > 0.0;
  return x.graph().record("relu", std::move(y), {x}, [pass = std::move(pass)](GradContext& ctx) {
    auto& gx = *ctx.inputs[0];
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (pass[i]) gx[i] += ctx.output[i];
    }
  });
}

Var add(Var a, Var b, const std::string& where) {
  Tensor y = kernels::add(a.value(), b.value(), where);
  return a.graph().record("add", std::move(y), {a, b}, [](GradContext& ctx) {
    for (auto* gin : ctx.inputs) {
      if (gin == nullptr) continue;
      for (std::size_t i = 0; i < gin->size(); ++i) (*gin)[i] += ctx.output[i];
    }
  });
}

Var avgpool2d(Var x, const PoolGeometry& geom, const std::string& where) {
  Tensor y = kernels::avgpool2d(x.value(), geom, where);
  const Shape in_shape = x.shape();
  const Shape out_shape = y.shape;
  return x.graph().record("avgpool", std::move(y), {x}, [in_shape, out_shape, geom](GradContext& ctx) {
    auto& gx = *ctx.inputs[0];
    const std::size_t planes = in_shape[0] * in_shape[1];
    const std::size_t h = in_shape[2], w = in_shape[3], oh = out_shape[2], ow = out_shape[3];
    const double inv = 1.0 / static_cast<double>(geom.window * geom.window);
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double g = ctx.output[(p * oh + oy) * ow + ox] * inv;
          for (std::size_t ky = 0; ky < geom.window; ++ky) {
            for (std::size_t kx = 0; kx < geom.window; ++kx) {
              gx[(p * h + oy * geom.stride + ky) * w + ox * geom.stride + kx] += g;
            }
          }
        }
      }
    }
  });
}

Var maxpool2d(Var x, const PoolGeometry& geom, const std::string& where) {
  std::vector<std::size_t> argmax;
  Tensor y = kernels::maxpool2d(x.value(), geom, &argmax, where);
  return x.graph().record("maxpool", std::move(y), {x}, [argmax = std::move(argmax)](GradContext& ctx) {
    auto& gx = *ctx.inputs[0];
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += ctx.output[o];
  });
}

Var flatten(Var x) {
  return x.graph().record("flatten", kernels::flatten(x.value()), {x}, [](GradContext& ctx) {
    auto& gx = *ctx.inputs[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ctx.output[i];
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data) acc += v;
  return x.graph().record("sum", Tensor::scalar(acc), {x}, [](GradContext& ctx) {
    auto& gx = *ctx.inputs[0];
    for (double& v : gx) v += ctx.output[0];
  });
}

Var scale(Var x, double factor) {
  Tensor y = x.value();
  for (double& v : y.data) v *= factor;
  return x.graph().record("scale", std::move(y), {x}, [factor](GradContext& ctx) {
    auto& gx = *ctx.inputs[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * ctx.output[i];
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  expect_rank(z, 2, "cross_entropy logits");
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  std::vector<double> probs(n * k);
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range");
    }
    const double* row = z.data.data() + b * k;
    const double mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] = std::exp(row[j] - mx) / denom;
    loss += std::log(denom) + mx - row[label];
  }
  loss /= static_cast<double>(n);
  std::vector<int> owned(labels.begin(), labels.end());
  return logits.graph().record(
      "cross_entropy", Tensor::scalar(loss), {logits},
      [probs = std::move(probs), owned = std::move(owned), n, k](GradContext& ctx) {
        auto& gz = *ctx.inputs[0];
        const double g = ctx.output[0] / static_cast<double>(n);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t j = 0; j < k; ++j) {
            const double target = static_cast<int>(j) == owned[b] ? 1.0 : 0.0;
            gz[b * k + j] += g * (probs[b * k + j] - target);
          }
        }
      });
}

Var mse(Var prediction, const Tensor& target) {
  const Tensor& p = prediction.value();
  if (p.size() != target.size()) {
    throw ShapeError("mse: prediction " + to_string(p.shape) + " vs target " +
                     to_string(target.shape));
  }
  std::vector<double> diff(p.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    diff[i] = p[i] - target[i];
    loss += diff[i] * diff[i];
  }
  const double count = static_cast<double>(std::max<std::size_t>(p.size(), 1));
  return prediction.graph().record("mse", Tensor::scalar(loss / count), {prediction},
                                   [diff = std::move(diff), count](GradContext& ctx) {
                                     auto& gp = *ctx.inputs[0];
                                     const double g = 2.0 * ctx.output[0] / count;
                                     for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * diff[i];
                                   });
}

}  // namespace chanmp::ops
