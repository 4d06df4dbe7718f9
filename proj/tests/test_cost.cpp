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

#include <cmath>
#include <random>
#include <sstream>

#include "chanmp/cost.hpp"
#include "chanmp/error.hpp"
#include "chanmp/ops.hpp"
#include "support/oracles.hpp"
#include "support/toy.hpp"

using namespace chanmp;
using namespace chanmp::cost;

namespace {

const nas::PrecisionSet kP({2, 4, 8});

CostLut monotone_lut() {
  std::istringstream in(
      "# hardware: test\npx,pw,pj_per_mac\n2,2,0.3\n2,4,0.36\n2,8,0.48\n4,2,0.36\n4,4,0.45\n4,8,0.62\n"
      "8,2,0.48\n8,4,0.62\n8,8,1\n");
  return CostLut::parse_csv(in);
}

Tensor softmax_of(const Tensor& logits) { return nas::softmax_rows(logits, 1.0); }

}  // namespace

TEST(Cost, SizeRegFrozenValue) {
  // vol 9, 4 channels, uniform gates: 9 * 4 * (2+4+8)/3
  const LayerCostContext ctx{0.0, 9, 4};
  const Tensor g({4, 3}, 1.0 / 3.0);
  EXPECT_NEAR(size_reg(ctx, g, kP), 168.0, 1e-12);
  const Tensor tied({1, 3}, std::vector<double>{0, 0, 1});
  EXPECT_EQ(size_reg(ctx, tied, kP), 9.0 * 4 * 8);
}

TEST(Cost, ContextCountsMacs) {
  const ModelSpec s = toy::conv_net(4, 6, 3);
  const auto shapes = infer_shapes(s);
  EXPECT_EQ(cost_context(s.layers[0], shapes[0]).omega, 4.0 * 2 * 9 * 36);
  EXPECT_EQ(cost_context(s.layers[2], shapes[2]).omega, 6.0 * 4 * 9 * 9);
  EXPECT_EQ(cost_context(s.layers[5], shapes[5]).omega, 3.0 * 54);
}

TEST(Cost, LutParsing) {
  const CostLut lut = monotone_lut();
  EXPECT_EQ(lut.hardware, "test");
  EXPECT_EQ(lut.at(4, 8), 0.62);
  EXPECT_THROW(lut.at(3, 8), ConfigError);
  std::istringstream dup("px,pw,pj_per_mac\n2,2,1\n2,2,1\n");
  EXPECT_THROW(CostLut::parse_csv(dup), ConfigError);
  std::istringstream neg("px,pw,pj_per_mac\n2,2,-1\n");
  EXPECT_THROW(CostLut::parse_csv(neg), ConfigError);
  std::istringstream bad("pw,px\n");
  EXPECT_THROW(CostLut::parse_csv(bad), ConfigError);
  std::ostringstream out;
  lut.write_csv(out);
  std::istringstream back(out.str());
  EXPECT_EQ(CostLut::parse_csv(back).table(), lut.table());
}

TEST(Cost, RegularizerGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(41);
  const CostLut lut = monotone_lut();
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = trial % 5 == 0 ? 1 : 5;
    const LayerCostContext ctx{1000.0 + trial, 27, 5};
    Tensor gl = oracle::random_tensor({rows, 3}, rng, -2, 2);
    Tensor dl = oracle::random_tensor({3}, rng, -2, 2);
    gl.requires_grad = dl.requires_grad = true;
    {
      Graph g;
      g.backward(size_reg(ctx, nas::softmax_rows(g.parameter(gl), 1.0), kP));
      std::vector<double> gs = gl.data;
      const auto fd = oracle::fd_gradient(gs, [&] { return size_reg(ctx, softmax_of(Tensor(gl.shape, gs)), kP); });
      EXPECT_LT(oracle::rel_error(gl.grad, fd, 1e-6), 1e-6);
    }
    gl.grad.clear();
    {
      Graph g;
      g.backward(energy_reg(ctx, nas::softmax_rows(g.parameter(dl), 1.0), nas::softmax_rows(g.parameter(gl), 1.0),
                            lut, kP, kP));
      std::vector<double> gs = gl.data, ds = dl.data;
      auto f = [&] {
        return energy_reg(ctx, softmax_of(Tensor(dl.shape, ds)), softmax_of(Tensor(gl.shape, gs)), lut, kP, kP);
      };
      EXPECT_LT(oracle::rel_error(gl.grad, oracle::fd_gradient(gs, f), 1e-6), 1e-6);
      EXPECT_LT(oracle::rel_error(dl.grad, oracle::fd_gradient(ds, f), 1e-6), 1e-6);
    }
  }
}

TEST(Cost, OneHotGatesMatchExactAccounting) {
  std::mt19937_64 rng(42);
  const CostLut lut = monotone_lut();
  for (int trial = 0; trial < 10; ++trial) {
    const ModelSpec spec = toy::random_net(rng);
    nas::SearchSpace space;
    Model model = Model::create(spec, space, 1);
    model.gates.tau = 1.0;  // exp(-2000) underflows: exactly one-hot
    const auto a = toy::random_assignment(spec, space, rng);
    for (auto& g : model.gates.layers) {
      const auto* la = a.find(g.layer);
      g.delta = Tensor({3}, -1e3);
      g.delta[kP.index_of(la->act_bits)] = 1e3;
      for (std::size_t c = 0; c < g.out_channels; ++c) {
        for (std::size_t k = 0; k < 3; ++k) g.gamma[c * 3 + k] = -1e3;
        g.gamma[c * 3 + kP.index_of(la->weight_bits[c])] = 1e3;
      }
    }
    Graph g1, g2;
    EXPECT_EQ(total_reg(g1, model, RegMode::Size, nullptr).value()[0], exact_model_size(spec, a));
    EXPECT_EQ(total_reg(g2, model, RegMode::Energy, &lut).value()[0], exact_model_energy_pj(spec, a, lut));
    EXPECT_EQ(exact_model_energy(spec, a, lut), exact_model_energy_pj(spec, a, lut) * 1e-6);
  }
}

TEST(Cost, UniformLutGivesOmegaTimesCost) {
  std::mt19937_64 rng(43);
  const CostLut lut = CostLut::uniform(kP, kP, 0.7);
  for (int trial = 0; trial < 10; ++trial) {
    const LayerCostContext ctx{12345.0, 9, 6};
    const Tensor d = softmax_of(oracle::random_tensor({3}, rng, -3, 3));
    const Tensor g = softmax_of(oracle::random_tensor({6, 3}, rng, -3, 3));
    EXPECT_NEAR(energy_reg(ctx, d, g, lut, kP, kP), 12345.0 * 0.7, 12345.0 * 0.7 * 1e-12);
  }
}

TEST(Cost, MovingMassUpwardNeverLowersCost) {
  std::mt19937_64 rng(44);
  const CostLut lut = monotone_lut();
  const LayerCostContext ctx{500.0, 8, 3};
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor d = softmax_of(oracle::random_tensor({3}, rng));
    const Tensor g = softmax_of(oracle::random_tensor({3, 3}, rng));
    Tensor up = g;
    const std::size_t row = rng() % 3;
    const double moved = up[row * 3 + 0] * 0.5;
    up[row * 3 + 0] -= moved;
    up[row * 3 + 2] += moved;
    EXPECT_GE(size_reg(ctx, up, kP), size_reg(ctx, g, kP));
    EXPECT_GE(energy_reg(ctx, d, up, lut, kP, kP), energy_reg(ctx, d, g, lut, kP, kP));
  }
}

TEST(Cost, SearchSpaceMatchesEnumeration) {
  const std::vector<std::size_t> channels{2, 3};
  for (auto mode : {SpaceMode::LayerWise, SpaceMode::ChannelWise}) {
    const double counted = static_cast<double>(oracle::enumerate_space(channels, 3, 3, mode));
    EXPECT_NEAR(count_search_space(channels, 3, 3, mode), std::log10(counted), 1e-12);
  }
  EXPECT_EQ(oracle::enumerate_space(channels, 3, 3, SpaceMode::LayerWise), 81u);
  EXPECT_EQ(oracle::enumerate_space(channels, 3, 3, SpaceMode::ChannelWise), 2187u);
}

TEST(Cost, SearchSpaceLayerWiseMobileNet) {
  // 28 weight layers of the width-0.25 MobileNetV1 (2-class head).
  std::vector<std::size_t> c{8, 8, 16, 16, 32, 32, 32, 32, 64, 64, 64, 64, 128};
  for (int i = 0; i < 5; ++i) c.insert(c.end(), {128, 128});
  c.insert(c.end(), {128, 256, 256, 256, 2});
  ASSERT_EQ(c.size(), 28u);
  EXPECT_NEAR(count_search_space(c, 3, 3, SpaceMode::LayerWise), 26.718790264301095, 1e-9);
  EXPECT_NEAR(count_search_space(c, 3, 3, SpaceMode::ChannelWise), 1319.7173905545862, 1e-9);
}
