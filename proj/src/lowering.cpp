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

#include "chanmp/lowering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "chanmp/container.hpp"
#include "chanmp/error.hpp"
#include "chanmp/kernels.hpp"
#include "chanmp/quant.hpp"
#include "chanmp/serialize.hpp"

namespace chanmp::lower {

bool ChannelPermutation::is_identity() const {
  for (std::size_t k = 0; k < perm.size(); ++k) {
    if (perm[k] != k) return false;
  }
  return true;
}

ChannelPermutation plan_permutation(const nas::PrecisionAssignment& assignment, std::size_t layer) {
  const nas::LayerAssignment* a = assignment.find(layer);
  if (a == nullptr) throw ConfigError("no assignment for layer " + std::to_string(layer));
  ChannelPermutation p{layer, std::vector<std::size_t>(a->weight_bits.size())};
  std::iota(p.perm.begin(), p.perm.end(), std::size_t{0});
  std::stable_sort(p.perm.begin(), p.perm.end(),
                   [&](std::size_t x, std::size_t y) { return a->weight_bits[x] < a->weight_bits[y]; });
  return p;
}

std::optional<std::size_t> sole_consumer(const ModelSpec& spec, std::size_t layer, std::size_t* block,
                                         std::string* why) {
  const auto cons = consumers(spec);
  const auto shapes = infer_shapes(spec);
  auto fail = [&](const char* reason) -> std::optional<std::size_t> {
    if (why != nullptr) *why = reason;
    return std::nullopt;
  };
  std::size_t span = 1;
  std::size_t cur = layer;
  for (;;) {
    if (cons[cur].empty()) return fail("output reaches the network output");
    if (cons[cur].size() > 1) return fail("output fans out to several layers");
    const std::size_t c = cons[cur][0];
    switch (spec.layers[c].kind) {
      case LayerKind::Conv2d:
      case LayerKind::Fc:
        if (block != nullptr) *block = span;
        return c;
      case LayerKind::Add:
        return fail("output feeds a residual add");
      case LayerKind::Flatten: {
        const Shape& s = shapes[cur];
        for (std::size_t d = 1; d < s.size(); ++d) span *= s[d];
        break;
      }
      case LayerKind::Relu:
      case LayerKind::AvgPool:
      case LayerKind::MaxPool:
        break;
    }
    cur = c;
  }
}

namespace {

void check_permutation(const ChannelPermutation& p, std::size_t n) {
  if (p.perm.size() != n) {
    throw ConfigError("permutation for layer " + std::to_string(p.layer) + " has " +
                      std::to_string(p.perm.size()) + " entries, layer has " + std::to_string(n) +
                      " channels");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t v : p.perm) {
    if (v >= n || seen[v]) throw ConfigError("permutation for layer " + std::to_string(p.layer) + " is not a bijection");
    seen[v] = true;
  }
}

// Reorders the `groups` axis of data viewed as [outer, groups, inner].
void permute_blocks(std::vector<double>& data, std::size_t outer, std::size_t groups, std::size_t inner,
                    const std::vector<std::size_t>& perm) {
  const std::vector<double> src = data;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < groups; ++k) {
      const double* from = &src[(o * groups + perm[k]) * inner];
      std::copy(from, from + inner, &data[(o * groups + k) * inner]);
    }
  }
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& perm) {
  std::vector<T> out(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) out[k] = v[perm[k]];
  return out;
}

}  // namespace

PermutedModel apply_permutation(const Model& model, const nas::PrecisionAssignment& assignment,
                                std::span<const ChannelPermutation> perms) {
  PermutedModel out{model, assignment, {}};
  const ModelSpec& spec = model.spec;
  for (const ChannelPermutation& p : perms) {
    if (p.layer >= spec.layers.size() || !spec.layers[p.layer].is_weight_layer()) {
      throw ConfigError("permutation targets layer " + std::to_string(p.layer) + ", which has no weights");
    }
    const LayerSpec& producer = spec.layers[p.layer];
    check_permutation(p, producer.out_channels);
    std::size_t block = 1;
    std::string why;
    const auto consumer = sole_consumer(spec, p.layer, &block, &why);
    if (!consumer) {
      out.report.skipped.push_back({p.layer, why});
      continue;
    }
    if (p.is_identity()) continue;

    LayerParams& prod = out.model.params[p.layer];
    permute_blocks(prod.weight.data, 1, producer.out_channels, producer.weight_volume(), p.perm);
    if (producer.has_bias) permute_blocks(prod.bias.data, 1, producer.out_channels, 1, p.perm);
    if (nas::LayerGates* g = out.model.gates.find(p.layer); g != nullptr && g->gamma.dim(0) == producer.out_channels) {
      permute_blocks(g->gamma.data, 1, producer.out_channels, g->gamma.dim(1), p.perm);
    }
    for (auto& la : out.assignment.layers) {
      if (la.layer == p.layer) la.weight_bits = gather(la.weight_bits, p.perm);
    }

    const LayerSpec& cons = spec.layers[*consumer];
    const std::size_t inner = cons.weight_volume() / producer.out_channels;
    if (inner * producer.out_channels != cons.weight_volume() || inner % block != 0) {
      throw GraphError("layer '" + cons.name + "': input channels do not match producer '" + producer.name + "'");
    }
    permute_blocks(out.model.params[*consumer].weight.data, cons.out_channels, producer.out_channels, inner,
                   p.perm);
    out.report.applied.push_back(p.layer);
  }
  return out;
}

bool SubLayer::contiguous() const {
  for (std::size_t k = 1; k < channels.size(); ++k) {
    if (channels[k] != channels[k - 1] + 1) return false;
  }
  return true;
}

std::vector<SubLayer> split_layer(const LayerSpec& layer, const LayerParams& params,
                                  const nas::LayerAssignment& assignment) {
  if (assignment.weight_bits.size() != layer.out_channels) {
    throw ConfigError("layer '" + layer.name + "': assignment has " +
                      std::to_string(assignment.weight_bits.size()) + " channels, expected " +
                      std::to_string(layer.out_channels));
  }
  std::vector<int> levels = assignment.weight_bits;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  const std::vector<double> ranges = quant::channel_ranges(params.weight);
  const std::size_t vol = layer.weight_volume();
  std::vector<SubLayer> subs;
  for (int bits : levels) {
    SubLayer s;
    s.weight_bits = bits;
    for (std::size_t c = 0; c < layer.out_channels; ++c) {
      if (assignment.weight_bits[c] != bits) continue;
      s.channels.push_back(c);
      s.ranges.push_back(ranges[c]);
      for (std::size_t j = 0; j < vol; ++j) {
        s.codes.push_back(static_cast<std::uint8_t>(quant::weight_code(params.weight[c * vol + j], ranges[c], bits)));
      }
      if (layer.has_bias) s.bias.push_back(params.bias[c]);
    }
    subs.push_back(std::move(s));
  }
  return subs;
}

const LoweredLayer* LoweredModel::find(std::size_t layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return &l;
  }
  return nullptr;
}

LoweredModel lower_model(const Model& model, const nas::PrecisionAssignment& assignment,
                         PermutationReport* report) {
  validate_assignment(model.spec, model.space, assignment);
  std::vector<ChannelPermutation> perms;
  for (std::size_t i : weight_layers(model.spec)) perms.push_back(plan_permutation(assignment, i));
  const PermutedModel pm = apply_permutation(model, assignment, perms);
  if (report != nullptr) *report = pm.report;

  const std::vector<bool> nonneg = nonnegative_outputs(model.spec);
  LoweredModel out;
  out.spec = model.spec;
  for (std::size_t i : weight_layers(model.spec)) {
    const LayerSpec& l = model.spec.layers[i];
    const nas::LayerAssignment& a = *pm.assignment.find(i);
    const int src = resolved_inputs(model.spec, i)[0];
    LoweredLayer ll;
    ll.layer = i;
    ll.act_bits = a.act_bits;
    ll.clip = pm.model.params[i].clip[0];
    ll.act_signed = !(src < 0 ? model.spec.input_nonnegative : nonneg[static_cast<std::size_t>(src)]);
    ll.subs = split_layer(l, pm.model.params[i], a);
    out.layers.push_back(std::move(ll));
  }
  return out;
}

Tensor run_layer(const LayerSpec& spec, const LoweredLayer& layer, const Tensor& x) {
  const Tensor xq = quant::pact_fakequant(x, layer.clip, layer.act_bits, layer.act_signed);
  const std::size_t vol = spec.weight_volume();
  Tensor out;
  std::size_t spatial = 0;
  for (const SubLayer& s : layer.subs) {
    const std::size_t n = s.channels.size();
    if (s.ranges.size() != n || s.codes.size() != n * vol || (spec.has_bias && s.bias.size() != n)) {
      throw ShapeError("lowered layer '" + spec.name + "': inconsistent sub-layer sizes");
    }
    Shape wshape = spec.weight_shape();
    wshape[0] = n;
    Tensor w(wshape);
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t j = 0; j < vol; ++j) {
        w[c * vol + j] = quant::weight_dequantize(s.codes[c * vol + j], s.ranges[c], s.weight_bits);
      }
    }
    Tensor bias;
    if (spec.has_bias) bias = Tensor({n}, s.bias);
    const Tensor* bp = spec.has_bias ? &bias : nullptr;
    const Tensor y = spec.kind == LayerKind::Conv2d
                         ? kernels::conv2d(xq, w, bp, spec.conv_geometry(), kernels::Accumulation::Exact, spec.name)
                         : kernels::linear(xq, w, bp, kernels::Accumulation::Exact, spec.name);
    if (out.shape.empty()) {
      Shape os = y.shape;
      os[1] = spec.out_channels;
      out = Tensor(os);
      spatial = y.size() / (y.dim(0) * n);
    }
    const std::size_t batch = y.dim(0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t c = s.channels[k];
        if (c >= spec.out_channels) throw ShapeError("lowered layer '" + spec.name + "': channel out of range");
        std::copy_n(y.data.begin() + static_cast<std::ptrdiff_t>((b * n + k) * spatial), spatial,
                    out.data.begin() + static_cast<std::ptrdiff_t>((b * spec.out_channels + c) * spatial));
      }
    }
  }
  return out;
}

Tensor run(const LoweredModel& lowered, const Tensor& input) {
  const ModelSpec& spec = lowered.spec;
  if (input.rank() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), input.shape.begin() + 1)) {
    throw ShapeError("lowered model input: got " + to_string(input.shape));
  }
  std::vector<Tensor> outs(spec.layers.size());
  auto fetch = [&](int src) -> const Tensor& { return src < 0 ? input : outs[static_cast<std::size_t>(src)]; };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto ins = resolved_inputs(spec, i);
    const Tensor& x = fetch(ins[0]);
    switch (l.kind) {
      case LayerKind::Conv2d:
      case LayerKind::Fc: {
        const LoweredLayer* ll = lowered.find(i);
        if (ll == nullptr) throw GraphError("lowered model has no entry for layer '" + l.name + "'");
        outs[i] = run_layer(l, *ll, x);
        break;
      }
      case LayerKind::Relu:
        outs[i] = kernels::relu(x);
        break;
      case LayerKind::AvgPool:
        outs[i] = kernels::avgpool2d(x, l.pool_geometry(), l.name);
        break;
      case LayerKind::MaxPool:
        outs[i] = kernels::maxpool2d(x, l.pool_geometry(), nullptr, l.name);
        break;
      case LayerKind::Add:
        outs[i] = kernels::add(x, fetch(ins[1]), l.name);
        break;
      case LayerKind::Flatten:
        outs[i] = kernels::flatten(x);
        break;
    }
  }
  return outs.back();
}

double lowered_size_bits(const LoweredModel& lowered) {
  double bits = 0.0;
  for (const auto& l : lowered.layers) {
    for (const auto& s : l.subs) bits += static_cast<double>(s.codes.size()) * s.weight_bits;
  }
  return bits;
}

double verify_equivalence(const Model& model, const nas::PrecisionAssignment& assignment,
                          const LoweredModel& lowered, std::size_t n_inputs, std::uint64_t seed) {
  if (n_inputs == 0) throw ConfigError("verify_equivalence: need at least one input");
  Shape shape{n_inputs};
  shape.insert(shape.end(), model.spec.input_shape.begin(), model.spec.input_shape.end());
  Tensor x(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(model.spec.input_nonnegative ? 0.0 : -2.0, 2.0);
  for (double& v : x.data) v = dist(rng);

  ForwardOptions opts{QuantPhase::Discrete, &assignment, kernels::Accumulation::Exact};
  const Tensor ref = predict(model, x, opts);
  const Tensor got = run(lowered, x);
  if (ref.shape != got.shape) return std::numeric_limits<double>::infinity();
  double diff = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = std::fabs(ref[i] - got[i]);
    if (std::isnan(d)) return std::numeric_limits<double>::infinity();
    diff = std::max(diff, d);
  }
  return diff;
}

void export_lowered(const std::filesystem::path& path, const LoweredModel& lowered) {
  io::Container c;
  c.magic = kLoweredMagic;
  c.version = kLoweredVersion;
  io::BlobWriter blob;
  serial::Json m;
  m["model"] = serial::to_json(lowered.spec);
  serial::Json layers = serial::Json::array();
  for (const LoweredLayer& l : lowered.layers) {
    serial::Json jl;
    jl["layer"] = l.layer;
    jl["act_bits"] = l.act_bits;
    jl["act_signed"] = l.act_signed;
    jl["clip"] = blob.add_f64(std::span(&l.clip, 1));
    serial::Json subs = serial::Json::array();
    for (const SubLayer& s : l.subs) {
      serial::Json js;
      js["weight_bits"] = s.weight_bits;
      js["channels"] = s.channels;
      js["ranges"] = blob.add_f64(s.ranges);
      js["codes"] = blob.add_u8(s.codes);
      if (!s.bias.empty()) js["bias"] = blob.add_f64(s.bias);
      subs.push_back(js);
    }
    jl["subs"] = subs;
    layers.push_back(jl);
  }
  m["layers"] = layers;
  c.manifest = std::move(m);
  c.blob = std::move(blob.bytes());
  io::write_atomic(path, io::encode(c));
}

LoweredModel import_lowered(const std::filesystem::path& path) {
  const io::Container c = io::decode(io::read_file(path), kLoweredMagic);
  if (c.version != kLoweredVersion) {
    throw IoError(path.string() + ": unsupported lowered-model version " + std::to_string(c.version));
  }
  try {
    LoweredModel out;
    out.spec = serial::model_spec_from_json(c.manifest.at("model"));
    for (const serial::Json& jl : c.manifest.at("layers")) {
      LoweredLayer l;
      l.layer = jl.at("layer").get<std::size_t>();
      l.act_bits = jl.at("act_bits").get<int>();
      l.act_signed = jl.at("act_signed").get<bool>();
      l.clip = io::read_f64(jl.at("clip"), c.blob).at(0);
      for (const serial::Json& js : jl.at("subs")) {
        SubLayer s;
        s.weight_bits = js.at("weight_bits").get<int>();
        quant::check_bits(s.weight_bits);
        s.channels = js.at("channels").get<std::vector<std::size_t>>();
        s.ranges = io::read_f64(js.at("ranges"), c.blob);
        s.codes = io::read_u8(js.at("codes"), c.blob);
        if (js.contains("bias")) s.bias = io::read_f64(js.at("bias"), c.blob);
        l.subs.push_back(std::move(s));
      }
      out.layers.push_back(std::move(l));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed lowered model: " + e.what());
  }
}

}  // namespace chanmp::lower
