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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "chanmp/error.hpp"
#include "chanmp/graph.hpp"
#include "chanmp/ops.hpp"
#include "chanmp/quant.hpp"
#include "support/oracles.hpp"
#include "support/probe.hpp"

using namespace chanmp;
using namespace chanmp::quant;

TEST(Quant, HandExamples) {
  const auto q = AffineQuantParams::make(2, 0.0, 3.0);
  EXPECT_EQ(q.eps, 1.0);
  EXPECT_EQ(quantize_scalar(1.4, q), 1);
  EXPECT_EQ(quantize_scalar(0.0, q), 0);
  EXPECT_EQ(quantize_scalar(3.0, q), 3);
  EXPECT_EQ(quantize_scalar(1.5, q), 2);  // half away from zero
  EXPECT_EQ(quantize_scalar(-7.0, q), 0);
  EXPECT_EQ(dequantize_scalar(3, q), 3.0);

  const auto q4 = AffineQuantParams::make(4, -1.0, 1.0);
  EXPECT_EQ(quantize_scalar(0.3, q4), 10);  // 1.3 / (2/15) = 9.75
  EXPECT_NEAR(dequantize_scalar(10, q4), 1.0 / 3.0, 1e-15);
}

TEST(Quant, RejectsUnsupportedPrecision) {
  EXPECT_THROW(AffineQuantParams::make(1, 0, 1), UnsupportedPrecision);
  EXPECT_THROW(AffineQuantParams::make(9, 0, 1), UnsupportedPrecision);
  EXPECT_THROW(quantize_scalar(NAN, AffineQuantParams::make(4, 0, 1)), DivergenceError);
}

TEST(Quant, MatchesScalarLoopOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (int n : {2, 4, 8}) {
    const double alpha = -1.25, beta = 2.0;
    const auto q = AffineQuantParams::make(n, alpha, beta);
    Tensor t({5000});
    for (double& v : t.data) v = d(rng);
    const auto codes = affine_quantize(t, q);
    const Tensor fq = fake_quantize(t, q);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto ref = oracle::quant_code(t[i], n, alpha, beta);
      ASSERT_EQ(codes[i], ref);
      ASSERT_EQ(fq[i], oracle::dequant(ref, n, alpha, beta));
    }
  }
}

TEST(Quant, IdempotentBoundedAndMonotone) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> d(-0.5, 1.5);
  Tensor t({4000});
  for (double& v : t.data) v = d(rng);
  std::sort(t.data.begin(), t.data.end());
  double mse2 = 0, mse8 = 0;
  for (int n : {2, 4, 8}) {
    const auto q = AffineQuantParams::make(n, 0.0, 1.0);
    const Tensor f = fake_quantize(t, q);
    EXPECT_EQ(fake_quantize(f, q).data, f.data);
    EXPECT_LE(std::set<double>(f.data.begin(), f.data.end()).size(), std::size_t{1} << n);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i > 0) ASSERT_LE(f[i - 1], f[i]);
      if (t[i] >= 0.0 && t[i] <= 1.0) ASSERT_LE(std::fabs(f[i] - t[i]), q.eps / 2 + 1e-15);
      if (t[i] > 1.0) ASSERT_EQ(f[i], 1.0);
      if (n == 2) mse2 += (f[i] - t[i]) * (f[i] - t[i]);
      if (n == 8) mse8 += (f[i] - t[i]) * (f[i] - t[i]);
    }
  }
  EXPECT_LE(mse8, mse2);
}

TEST(Quant, PactForwardClamps) {
  const double clip = 2.0;
  const Tensor x({3}, std::vector<double>{-1.0, 0.5 * clip, 2 * clip});
  const Tensor y = pact_fakequant(x, clip, 8);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 1.0, clip / 255 / 2);
  EXPECT_EQ(y[2], clip);
  EXPECT_EQ(pact_fakequant(x, 0.5, 8, true)[0], -0.5);
  EXPECT_THROW(pact_fakequant(x, 0.0, 8), Error);
}

namespace {

// Straight-through surrogate of the quantizer: round replaced by identity.
double surrogate(double x, double clip, bool is_signed) { return std::clamp(x, is_signed ? -clip : 0.0, clip); }

}  // namespace

TEST(Quant, PactGradientsMatchSurrogateFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const bool is_signed = trial % 2 == 1;
    const int bits = trial % 3 == 0 ? 2 : 8;
    Tensor x = oracle::random_tensor({12}, rng, -3.0, 3.0);
    Tensor clip = Tensor::scalar(1.0 + 0.05 * trial);
    for (double& v : x.data) {
      if (std::fabs(std::fabs(v) - clip[0]) < 1e-3 || std::fabs(v) < 1e-3) v += 0.01;
    }
    const Tensor r = oracle::random_tensor({12}, rng);
    x.requires_grad = clip.requires_grad = true;
    Graph g;
    g.backward(probe::project(pact_act_fakequant(g.parameter(x), g.parameter(clip), bits, is_signed), r));

    std::vector<double> xs = x.data, cs = clip.data;
    auto f = [&] {
      double s = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) s += r[i] * surrogate(xs[i], cs[0], is_signed);
      return s;
    };
    EXPECT_LT(oracle::rel_error(x.grad, oracle::fd_gradient(xs, f), 1e-6), 1e-4);
    EXPECT_LT(oracle::rel_error(clip.grad, oracle::fd_gradient(cs, f), 1e-6), 1e-4);
  }
}

TEST(Quant, PactClipGradientVanishesInsideRange) {
  Tensor x({3}, std::vector<double>{0.1, 0.4, 0.9});
  Tensor clip = Tensor::scalar(1.0);
  x.requires_grad = clip.requires_grad = true;
  Graph g;
  g.backward(ops::sum(pact_act_fakequant(g.parameter(x), g.parameter(clip), 4)));
  EXPECT_EQ(clip.grad[0], 0.0);
  EXPECT_EQ(x.grad, (std::vector<double>{1, 1, 1}));
}

TEST(Quant, PerChannelWeights) {
  Tensor w({3, 3}, std::vector<double>{0, 0, 0, -2, 0, 2, 0.3, -0.1, 0.05});
  const std::vector<int> bits{8, 2, 4};
  const Tensor f = weight_fakequant(w, bits);
  EXPECT_EQ(f[0], 0.0);
  EXPECT_EQ(f[1], 0.0);
  EXPECT_EQ(f[2], 0.0);
  EXPECT_EQ(f[3], -2.0);
  EXPECT_EQ(f[5], 2.0);
  EXPECT_LE(std::fabs(f[4]), 4.0 / 3 / 2 + 1e-12);
  const double eps = 2 * 0.3 / 15;
  for (int i = 6; i < 9; ++i) EXPECT_LE(std::fabs(f[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(i)]), eps / 2 + 1e-15);
  EXPECT_THROW(weight_fakequant(w, std::vector<int>{8, 8}), ShapeError);
}

TEST(Quant, WeightReconstructionOracle) {
  std::mt19937_64 rng(24);
  const Tensor w = oracle::random_tensor({6, 10}, rng);
  const std::vector<int> bits(6, 8);
  const Tensor f = weight_fakequant(w, bits);
  const auto r = channel_ranges(w);
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t j = 0; j < 10; ++j) {
      const auto code = oracle::quant_code(w[c * 10 + j], 8, -r[c], r[c]);
      EXPECT_EQ(f[c * 10 + j], oracle::dequant(code, 8, -r[c], r[c]));
      EXPECT_LE(std::fabs(f[c * 10 + j] - w[c * 10 + j]), r[c] / 255 + 1e-15);
    }
  }
}

TEST(Quant, WeightSteIsIdentity) {
  std::mt19937_64 rng(25);
  Tensor w = oracle::random_tensor({2, 5}, rng);
  w.requires_grad = true;
  const Tensor r = oracle::random_tensor({2, 5}, rng);
  Graph g;
  g.backward(probe::project(weight_fakequant_per_channel(g.parameter(w), 2), r));
  EXPECT_EQ(w.grad, r.data);
}
