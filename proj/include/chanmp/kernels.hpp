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
#include <string>
#include <vector>

#include "chanmp/tensor.hpp"

// Forward/backward kernels on plain tensors. The autograd ops and the
// lowered-model interpreter both call into these so the two paths perform
// identical arithmetic.
namespace chanmp::kernels {

enum class Accumulation {
  // Left-to-right accumulation over (c_in, k_y, k_x).
  Standard,
  // Correctly rounded sum of all products plus bias; independent of the
  // order of the input channels.
  Exact,
};

// Correctly rounded floating-point summation (Shewchuk partials).
class ExactSum {
 public:
  void add(double x);
  double result() const;
  void clear() { partials_.clear(); }

 private:
  std::vector<double> partials_;
};

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding);

// x[N,C_in,H,W] * w[C_out,C_in,K_y,K_x] (+ bias[C_out]) -> [N,C_out,OH,OW]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv2dGeometry& geom,
              Accumulation accum = Accumulation::Standard, const std::string& where = "conv2d");

void conv2d_backward(const Tensor& x, const Tensor& w, const std::vector<double>& grad_out,
                     const Conv2dGeometry& geom, std::vector<double>* grad_x,
                     std::vector<double>* grad_w, std::vector<double>* grad_b);

// x[N,F_in] * w[F_out,F_in]^T (+ bias[F_out]) -> [N,F_out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias,
              Accumulation accum = Accumulation::Standard, const std::string& where = "fc");

void linear_backward(const Tensor& x, const Tensor& w, const std::vector<double>& grad_out,
                     std::vector<double>* grad_x, std::vector<double>* grad_w,
                     std::vector<double>* grad_b);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b, const std::string& where = "add");

struct PoolGeometry {
  std::size_t window = 2;
  std::size_t stride = 2;
};

Tensor avgpool2d(const Tensor& x, const PoolGeometry& geom, const std::string& where = "avgpool");
// `argmax` receives, per output element, the flat input index that won.
Tensor maxpool2d(const Tensor& x, const PoolGeometry& geom, std::vector<std::size_t>* argmax,
                 const std::string& where = "maxpool");

Tensor flatten(const Tensor& x);

// Concatenates [N,C_k,...] tensors along axis 1.
Tensor concat_channels(const std::vector<Tensor>& parts);

}  // namespace chanmp::kernels
