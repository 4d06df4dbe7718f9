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

// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "chanmp/cost.hpp"
#include "chanmp/experiment.hpp"
#include "chanmp/gates.hpp"
#include "chanmp/kernels.hpp"
#include "chanmp/lowering.hpp"
#include "chanmp/ops.hpp"
#include "chanmp/quant.hpp"
#include "chanmp/trainer.hpp"
#include "support/oracles.hpp"
#include "support/phase_audit.hpp"
#include "support/probe.hpp"
#include "support/toy.hpp"

#ifndef CHANMP_SOURCE_DIR
#define CHANMP_SOURCE_DIR "."
#endif

using namespace chanmp;

namespace {

const nas::PrecisionSet kP({2, 4, 8});

// Collects the first failure message of a criterion.
struct Verdict {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

cost::CostLut monotone_lut() {
  std::istringstream in(
      "px,pw,pj_per_mac\n2,2,0.3\n2,4,0.36\n2,8,0.48\n4,2,0.36\n4,4,0.45\n4,8,0.62\n8,2,0.48\n8,4,0.62\n8,8,1\n");
  return cost::CostLut::parse_csv(in);
}

Verdict gradients() {
  Verdict v;
  std::mt19937_64 rng(101);
  const int n = 25;
  const cost::CostLut lut = monotone_lut();
  for (int t = 0; t < n; ++t) {
    // PACT, wrt x and clip, against the straight-through surrogate.
    {
      const bool sgn = t % 2 == 1;
      Tensor x = oracle::random_tensor({12}, rng, -3, 3);
      Tensor clip = Tensor::scalar(0.8 + 0.05 * t);
      for (double& e : x.data) {
        if (std::fabs(std::fabs(e) - clip[0]) < 1e-3 || std::fabs(e) < 1e-3) e += 0.01;
      }
      const Tensor r = oracle::random_tensor({12}, rng);
      x.requires_grad = clip.requires_grad = true;
      Graph g;
      g.backward(probe::project(quant::pact_act_fakequant(g.parameter(x), g.parameter(clip), 4, sgn), r));
      std::vector<double> xs = x.data, cs = clip.data;
      auto f = [&] {
        double s = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) s += r[i] * std::clamp(xs[i], sgn ? -cs[0] : 0.0, cs[0]);
        return s;
      };
      const double ex = oracle::rel_error(x.grad, oracle::fd_gradient(xs, f), 1e-6);
      const double ec = oracle::rel_error(clip.grad, oracle::fd_gradient(cs, f), 1e-6);
      v.expect(ex < 1e-4 && ec < 1e-4, fmt("pact rel err x %.3g clip %.3g", ex, ec));
    }
    // Effective activations wrt delta.
    {
      const double tau = 0.5 + 0.2 * t;
      const Tensor x = oracle::random_tensor({2, 6}, rng, -1, 3);
      Tensor delta = oracle::random_tensor({3}, rng, -2, 2);
      const Tensor r = oracle::random_tensor({2, 6}, rng);
      delta.requires_grad = true;
      Graph g;
      g.backward(probe::project(
          nas::effective_activations(g.constant(x), g.parameter(delta), tau, kP, g.constant(Tensor::scalar(1.5))),
          r));
      std::vector<double> ds = delta.data;
      auto f = [&] {
        const auto p = nas::softmax_temperature(ds, tau);
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += p[k] * probe::project(quant::pact_fakequant(x, 1.5, kP[k]), r);
        return s;
      };
      const double e = oracle::rel_error(delta.grad, oracle::fd_gradient(ds, f), 1e-8);
      v.expect(e < 1e-4, fmt("effective_activations rel err %.3g", e));
    }
    // Effective weights wrt gamma.
    {
      const bool tied = t % 4 == 3;
      const double tau = 5.0 * std::exp(-0.1 * t);
      const Tensor w = oracle::random_tensor({4, 3, 2, 2}, rng);
      Tensor gamma = oracle::random_tensor({tied ? 1u : 4u, 3}, rng, -2, 2);
      const Tensor r = oracle::random_tensor(w.shape, rng);
      gamma.requires_grad = true;
      Graph g;
      g.backward(probe::project(nas::effective_weights(g.constant(w), g.parameter(gamma), tau, kP), r));
      std::vector<Tensor> copies;
      for (int b : kP.bits()) copies.push_back(quant::weight_fakequant(w, std::vector<int>(4, b)));
      std::vector<double> gs = gamma.data;
      auto f = [&] {
        const Tensor p = nas::softmax_rows(Tensor(gamma.shape, gs), tau);
        Tensor mix(w.shape);
        for (std::size_t c = 0; c < 4; ++c)
          for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < 12; ++j) mix[c * 12 + j] += p[(tied ? 0 : c) * 3 + k] * copies[k][c * 12 + j];
        return probe::project(mix, r);
      };
      const double e = oracle::rel_error(gamma.grad, oracle::fd_gradient(gs, f), 1e-8);
      v.expect(e < 1e-4, fmt("effective_weights rel err %.3g", e));
    }
    // Size and energy regularizers.
    {
      const std::size_t rows = t % 5 == 0 ? 1 : 5;
      const cost::LayerCostContext ctx{1000.0 + t, 27, 5};
      Tensor gl = oracle::random_tensor({rows, 3}, rng, -2, 2);
      Tensor dl = oracle::random_tensor({3}, rng, -2, 2);
      gl.requires_grad = dl.requires_grad = true;
      {
        Graph g;
        g.backward(cost::size_reg(ctx, nas::softmax_rows(g.parameter(gl), 1.0), kP));
        std::vector<double> gs = gl.data;
        const auto fd = oracle::fd_gradient(
            gs, [&] { return cost::size_reg(ctx, nas::softmax_rows(Tensor(gl.shape, gs), 1.0), kP); });
        const double e = oracle::rel_error(gl.grad, fd, 1e-6);
        v.expect(e < 1e-6, fmt("size_reg rel err %.3g", e));
      }
      gl.grad.clear();
      {
        Graph g;
        g.backward(cost::energy_reg(ctx, nas::softmax_rows(g.parameter(dl), 1.0),
                                    nas::softmax_rows(g.parameter(gl), 1.0), lut, kP, kP));
        std::vector<double> gs = gl.data, ds = dl.data;
        auto f = [&] {
          return cost::energy_reg(ctx, nas::softmax_rows(Tensor(dl.shape, ds), 1.0),
                                  nas::softmax_rows(Tensor(gl.shape, gs), 1.0), lut, kP, kP);
        };
        const double eg = oracle::rel_error(gl.grad, oracle::fd_gradient(gs, f), 1e-6);
        const double ed = oracle::rel_error(dl.grad, oracle::fd_gradient(ds, f), 1e-6);
        v.expect(eg < 1e-6 && ed < 1e-6, fmt("energy_reg rel err gamma %.3g delta %.3g", eg, ed));
      }
    }
    // conv2d and fc, wrt W and X.
    for (bool conv : {true, false}) {
      const Tensor x0 = conv ? oracle::random_tensor({2, 2, 5, 4}, rng) : oracle::random_tensor({3, 5}, rng);
      const Tensor w0 = conv ? oracle::random_tensor({3, 2, 3, 3}, rng) : oracle::random_tensor({4, 5}, rng);
      const Tensor b0 = oracle::random_tensor({conv ? 3u : 4u}, rng);
      const kernels::Conv2dGeometry geom{1 + static_cast<std::size_t>(t % 2), 1};
      auto out = [&](const Tensor& x, const Tensor& w) {
        return conv ? kernels::conv2d(x, w, &b0, geom) : kernels::linear(x, w, &b0);
      };
      const Tensor r = oracle::random_tensor(out(x0, w0).shape, rng);
      Tensor x = x0, w = w0, b = b0;
      x.requires_grad = w.requires_grad = true;
      Graph g;
      const Var xv = g.parameter(x), wv = g.parameter(w), bv = g.constant(b);
      g.backward(probe::project(conv ? ops::conv2d(xv, wv, bv, geom) : ops::fc(xv, wv, bv), r));
      Tensor xs = x0, ws = w0;
      auto f = [&] { return probe::project(out(xs, ws), r); };
      const double ex = oracle::rel_error(x.grad, oracle::fd_gradient(xs.data, f));
      const double ew = oracle::rel_error(w.grad, oracle::fd_gradient(ws.data, f));
      v.expect(ex < 1e-4 && ew < 1e-4, fmt(conv ? "conv2d rel err x %.3g w %.3g" : "fc rel err x %.3g w %.3g", ex, ew));
    }
  }
  if (v.ok) v.detail = std::to_string(n) + " instances per operator";
  return v;
}

Verdict quantizer_oracle() {
  Verdict v;
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  const std::size_t n = 100000;
  for (int bits : {2, 4, 8}) {
    const double alpha = -1.25, beta = 2.0;
    const auto q = quant::AffineQuantParams::make(bits, alpha, beta);
    Tensor t({n});
    for (double& e : t.data) e = d(rng);
    const auto codes = quant::affine_quantize(t, q);
    const Tensor fq = quant::fake_quantize(t, q);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ref = oracle::quant_code(t[i], bits, alpha, beta);
      if (codes[i] != ref || fq[i] != oracle::dequant(ref, bits, alpha, beta)) ++mismatches;
    }
    v.expect(mismatches == 0, fmt("%.0f oracle mismatches at %.0f bits", double(mismatches), bits));
    v.expect(quant::fake_quantize(fq, q).data == fq.data, fmt("not idempotent at %.0f bits", bits));
    const std::size_t levels = std::set<double>(fq.data.begin(), fq.data.end()).size();
    v.expect(levels <= (std::size_t{1} << bits), fmt("%.0f levels at %.0f bits", double(levels), bits));
  }
  if (v.ok) v.detail = "1e5 scalars per bit-width, exact";
  return v;
}

Verdict regularizer_consistency() {
  Verdict v;
  std::mt19937_64 rng(103);
  const cost::CostLut lut = monotone_lut();
  for (int t = 0; t < 20; ++t) {
    const ModelSpec spec = toy::random_net(rng);
    Model model = Model::create(spec, {}, 1);
    model.gates.tau = 1.0;
    const auto a = toy::random_assignment(spec, model.space, rng);
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
    const double s = cost::total_reg(g1, model, cost::RegMode::Size, nullptr).value()[0];
    const double e = cost::total_reg(g2, model, cost::RegMode::Energy, &lut).value()[0];
    v.expect(s == cost::exact_model_size(spec, a), fmt("size_reg %.17g vs exact %.17g", s, cost::exact_model_size(spec, a)));
    v.expect(e == cost::exact_model_energy_pj(spec, a, lut), "one-hot energy_reg differs from exact energy");
  }
  const cost::CostLut uni = cost::CostLut::uniform(kP, kP, 0.7);
  for (int t = 0; t < 20; ++t) {
    const cost::LayerCostContext ctx{12345.0 + t, 9, 6};
    const Tensor d = nas::softmax_rows(oracle::random_tensor({3}, rng, -3, 3), 1.0);
    const Tensor g = nas::softmax_rows(oracle::random_tensor({6, 3}, rng, -3, 3), 1.0);
    const double e = cost::energy_reg(ctx, d, g, uni, kP, kP), want = ctx.omega * 0.7;
    v.expect(std::fabs(e - want) <= 1e-12 * want, fmt("uniform LUT %.17g vs %.17g", e, want));
  }
  if (v.ok) v.detail = "20 one-hot nets exact, 20 uniform-LUT gates within 1e-12";
  return v;
}

Verdict lowering_equivalence() {
  Verdict v;
  std::mt19937_64 rng(104);
  int residual = 0;
  const int n = 60;
  for (int t = 0; t < n; ++t) {
    const ModelSpec spec = t % 5 == 0 ? toy::residual_net(2 + t % 4, 3) : toy::random_net(rng);
    Model m = Model::create(spec, {}, rng());
    toy::randomize(m, rng);
    const auto a = toy::random_assignment(spec, m.space, rng);
    lower::PermutationReport report;
    const lower::LoweredModel low = lower::lower_model(m, a, &report);
    for (const auto& s : report.skipped) residual += s.reason.find("residual") != std::string::npos;
    const double diff = lower::verify_equivalence(m, a, low, 8, static_cast<std::uint64_t>(t));
    v.expect(diff == 0.0, fmt("pair %.0f differs by %.3g", t, diff));
  }
  v.expect(residual > 0, "no residual-skip case was exercised");
  Model m = Model::create(toy::conv_net(4, 5, 3), {}, 7);
  toy::randomize(m, rng);
  const auto a = toy::random_assignment(m.spec, m.space, rng);
  lower::LoweredModel low = lower::lower_model(m, a);
  auto& codes = low.layers[0].subs[0].codes;
  codes[0] = static_cast<std::uint8_t>(codes[0] == 0 ? 1 : codes[0] - 1);
  const double mutated = lower::verify_equivalence(m, a, low, 8, 1);
  v.expect(mutated > 0.0, "single-code mutation went undetected");
  if (v.ok) v.detail = fmt("%.0f pairs exact, %.0f residual skips, mutation diff ", n, residual) + fmt("%.3g", mutated);
  return v;
}

Verdict search_space() {
  Verdict v;
  std::vector<std::size_t> c{8, 8, 16, 16, 32, 32, 32, 32, 64, 64, 64, 64, 128};
  for (int i = 0; i < 5; ++i) c.insert(c.end(), {128, 128});
  c.insert(c.end(), {128, 256, 256, 256, 2});
  const double lw = cost::count_search_space(c, 3, 3, cost::SpaceMode::LayerWise);
  const double cw = cost::count_search_space(c, 3, 3, cost::SpaceMode::ChannelWise);
  const std::vector<std::size_t> toy_net{2, 3};
  for (auto mode : {cost::SpaceMode::LayerWise, cost::SpaceMode::ChannelWise}) {
    const double counted = static_cast<double>(oracle::enumerate_space(toy_net, 3, 3, mode));
    v.expect(std::fabs(cost::count_search_space(toy_net, 3, 3, mode) - std::log10(counted)) < 1e-12,
             "toy net count differs from enumeration");
  }
  v.expect(std::fabs(lw - 26.0) <= 1.0, fmt("layer-wise 10^%.2f, expected 10^26 +-1", lw));
  v.expect(std::fabs(cw - 74.0) <= 1.0, fmt("channel-wise 10^%.2f, expected 10^74 +-1 (layer-wise 10^%.2f)", cw, lw));
  if (v.ok) v.detail = fmt("layer-wise 10^%.2f, channel-wise 10^%.2f", lw, cw);
  return v;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("chanmp_acceptance_" + name);
  std::filesystem::remove_all(p);
  return p;
}

exp::ExperimentConfig spirals_config() {
  return exp::load_experiment(std::string(CHANMP_SOURCE_DIR) + "/configs/spirals_size.json");
}

// Shared by criteria 6 and 7.
struct Sweeps {
  exp::SweepResult channel, tied;
  double seconds = 0.0;
};

const Sweeps& sweeps() {
  static const Sweeps s = [] {
    Sweeps r;
    exp::ExperimentConfig c = spirals_config();
    c.out_dir = scratch("channel").string();
    const auto t0 = std::chrono::steady_clock::now();
    r.channel = exp::run_sweep(c);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.space.granularity = nas::Granularity::Layer;
    c.out_dir = scratch("tied").string();
    r.tied = exp::run_sweep(c);
    return r;
  }();
  return s;
}

Verdict end_to_end() {
  Verdict v;
  const exp::ExperimentConfig c = spirals_config();
  v.expect(c.dataset.generator == "spirals" && c.lambdas.size() == 5, "config is not a 5-lambda spirals sweep");
  std::size_t fc = 0, widest = 0;
  for (const auto& l : c.model.layers) {
    if (l.is_weight_layer()) {
      fc += l.kind == LayerKind::Fc;
      widest = std::max(widest, l.out_channels);
    }
  }
  v.expect(fc == 3 && widest <= 64, "model is not a 3-layer FC net with <=64 neurons");
  const Sweeps& s = sweeps();
  v.expect(s.seconds <= 300.0, fmt("sweep took %.1f s", s.seconds));
  const auto& runs = s.channel.runs;
  std::vector<double> lam, size;
  for (const auto& r : runs) {
    lam.push_back(r.lambda);
    size.push_back(r.size_bits);
  }
  const double rho = oracle::spearman(lam, size);
  std::size_t two = 0, all = 0;
  for (const auto& l : runs.back().assignment.layers) {
    all += l.weight_bits.size();
    two += static_cast<std::size_t>(std::count(l.weight_bits.begin(), l.weight_bits.end(), 2));
  }
  const double frac = static_cast<double>(two) / static_cast<double>(all);
  v.expect(runs.front().val_score >= 0.95, fmt("lowest-lambda val accuracy %.4f", runs.front().val_score));
  v.expect(rho <= 0.0, fmt("spearman(lambda, size) = %.3f", rho));
  v.expect(frac >= 0.8, fmt("highest-lambda 2-bit fraction %.3f", frac));
  if (v.ok) {
    v.detail = fmt("val %.4f at lowest lambda, spearman %.3f, ", runs.front().val_score, rho) +
               fmt("2-bit fraction %.3f, %.1f s", frac, s.seconds);
  }
  return v;
}

Verdict containment() {
  Verdict v;
  // Tied rows give one assignment per layer.
  for (const auto& r : sweeps().tied.runs) {
    for (const auto& l : r.assignment.layers) {
      v.expect(std::all_of(l.weight_bits.begin(), l.weight_bits.end(),
                           [&](int b) { return b == l.weight_bits.front(); }),
               "tied run produced mixed bit-widths inside a layer");
    }
  }
  auto best = [](const std::vector<train::SearchResult>& runs, double min_acc) {
    double s = INFINITY;
    for (const auto& r : runs) {
      if (r.test_score >= min_acc) s = std::min(s, r.size_bits);
    }
    return s;
  };
  double acc = 0.0;
  for (const auto& r : sweeps().tied.runs) acc = std::max(acc, r.test_score);
  const double tied = best(sweeps().tied.runs, acc - 0.005);
  const double channel = best(sweeps().channel.runs, acc - 0.005);
  v.expect(channel <= tied, fmt("channel-wise %.0f bits > tied %.0f bits", channel, tied));
  if (v.ok) v.detail = fmt("at accuracy >= %.4f: channel-wise ", acc - 0.005) + fmt("%.0f bits, tied %.0f bits", channel, tied);
  return v;
}

Verdict phase_discipline() {
  Verdict v;
  exp::ExperimentConfig c = spirals_config();
  const auto data = data::load_dataset(c.dataset, c.model.input_shape);
  train::TrainConfig t = c.train;
  t.epochs_wu = 3;
  t.epochs_ft = 3;
  t.max_search_epochs = 12;
  t.patience = 1000;
  t.lambda = c.lambdas[2];
  Model m = Model::create(c.model, c.space, t.seed);
  probe::PhaseAudit audit;
  train::warmup(m, data, t, &audit);
  train::run_search(m, data, t, nullptr, &audit);
  v.expect(audit.violations.empty(), audit.violations.empty() ? "" : audit.violations.front());
  v.expect(audit.gate_batches > 0 && audit.weight_batches > 0 && audit.warmup_batches > 0 &&
               audit.finetune_batches > 0,
           "a phase never ran");
  v.expect(audit.gate_batches_that_moved_gates == audit.gate_batches, "a gate batch left the gates unchanged");
  v.expect(audit.search_taus.size() == t.max_search_epochs, "wrong number of search epochs");
  double worst = 0.0;
  for (std::size_t k = 0; k < audit.search_taus.size(); ++k) {
    worst = std::max(worst, std::fabs(audit.search_taus[k] - 5.0 * std::exp(-0.0045 * static_cast<double>(k + 1))));
  }
  v.expect(worst <= 1e-12, fmt("tau off by %.3g", worst));
  if (v.ok) {
    v.detail = fmt("%.0f gate / %.0f weight batches audited, ", double(audit.gate_batches), double(audit.weight_batches)) +
               fmt("max tau error %.3g", worst);
  }
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradients", gradients},
      {"quantizer-oracle", quantizer_oracle},
      {"regularizer-consistency", regularizer_consistency},
      {"lowering-equivalence", lowering_equivalence},
      {"search-space", search_space},
      {"end-to-end-spirals", end_to_end},
      {"channel-vs-tied", containment},
      {"phase-discipline", phase_discipline},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %zu %-24s %s (%.1fs)\n", v.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), sec);
    std::fflush(stdout);
    failed += !v.ok;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
