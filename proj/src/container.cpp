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

#include "chanmp/container.hpp"

#include <bit>
#include <fstream>

#include "chanmp/error.hpp"

namespace chanmp::io {

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int k = 0; k < bytes; ++k) v |= std::uint64_t{b[at + static_cast<std::size_t>(k)]} << (8 * k);
  return v;
}

serial::Json array_ref(const char* dtype, std::size_t offset, std::size_t count) {
  serial::Json j;
  j["dtype"] = dtype;
  j["offset"] = offset;
  j["count"] = count;
  return j;
}

std::pair<std::size_t, std::size_t> locate(const serial::Json& ref, const char* dtype, std::size_t elem,
                                           std::size_t blob_size) {
  if (!ref.is_object() || ref.value("dtype", "") != dtype) {
    throw IoError(std::string("container: expected a ") + dtype + " array reference");
  }
  const auto offset = ref.at("offset").get<std::size_t>();
  const auto count = ref.at("count").get<std::size_t>();
  if (offset > blob_size || count > (blob_size - offset) / elem) throw IoError("container: array out of bounds");
  return {offset, count};
}

}  // namespace

serial::Json BlobWriter::add_f64(std::span<const double> values) {
  const std::size_t offset = bytes_.size();
  for (double v : values) put_u64(bytes_, std::bit_cast<std::uint64_t>(v));
  return array_ref("f64le", offset, values.size());
}

serial::Json BlobWriter::add_u8(std::span<const std::uint8_t> values) {
  const std::size_t offset = bytes_.size();
  bytes_.insert(bytes_.end(), values.begin(), values.end());
  return array_ref("u8", offset, values.size());
}

std::vector<double> read_f64(const serial::Json& ref, std::span<const std::uint8_t> blob) {
  const auto [offset, count] = locate(ref, "f64le", 8, blob.size());
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<double>(get_le(blob, offset + 8 * i, 8));
  return out;
}

std::vector<std::uint8_t> read_u8(const serial::Json& ref, std::span<const std::uint8_t> blob) {
  const auto [offset, count] = locate(ref, "u8", 1, blob.size());
  return {blob.begin() + static_cast<std::ptrdiff_t>(offset),
          blob.begin() + static_cast<std::ptrdiff_t>(offset + count)};
}

std::vector<std::uint8_t> encode(const Container& c) {
  if (c.magic.size() != 8) throw IoError("container: magic must be 8 bytes");
  std::vector<std::uint8_t> out(c.magic.begin(), c.magic.end());
  put_u32(out, c.version);
  const std::string manifest = c.manifest.dump();
  put_u64(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  put_u64(out, c.blob.size());
  out.insert(out.end(), c.blob.begin(), c.blob.end());
  return out;
}

Container decode(std::span<const std::uint8_t> bytes, const std::string& expected_magic) {
  if (bytes.size() < 20) throw IoError("container: truncated header");
  Container c;
  c.magic.assign(bytes.begin(), bytes.begin() + 8);
  if (c.magic != expected_magic) throw IoError("container: expected '" + expected_magic + "', found '" + c.magic + "'");
  c.version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  const std::uint64_t mlen = get_le(bytes, 12, 8);
  if (mlen > bytes.size() - 20) throw IoError("container: truncated manifest");
  const std::size_t mend = 20 + static_cast<std::size_t>(mlen);
  try {
    c.manifest = serial::Json::parse(bytes.begin() + 20, bytes.begin() + static_cast<std::ptrdiff_t>(mend));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("container: bad manifest: ") + e.what());
  }
  if (bytes.size() < mend + 8) throw IoError("container: truncated blob header");
  const std::uint64_t blen = get_le(bytes, mend, 8);
  if (blen != bytes.size() - mend - 8) throw IoError("container: blob length mismatch");
  c.blob.assign(bytes.begin() + static_cast<std::ptrdiff_t>(mend + 8), bytes.end());
  return c;
}

void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  write_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

serial::Json tensor_ref(BlobWriter& blob, const Tensor& t) {
  serial::Json j;
  j["shape"] = t.shape;
  j["data"] = blob.add_f64(t.data);
  return j;
}

Tensor tensor_from(const serial::Json& j, std::span<const std::uint8_t> blob, bool requires_grad) {
  Tensor t(j.at("shape").get<Shape>(), read_f64(j.at("data"), blob));
  t.requires_grad = requires_grad;
  return t;
}

}  // namespace

void save_model(const std::filesystem::path& path, const Model& model) {
  Container c;
  c.magic = kCheckpointMagic;
  c.version = kCheckpointVersion;
  BlobWriter blob;
  serial::Json m;
  m["model"] = serial::to_json(model.spec);
  m["space"] = serial::to_json(model.space);
  m["tau"] = blob.add_f64(std::span(&model.gates.tau, 1));
  serial::Json params = serial::Json::array();
  for (std::size_t i : weight_layers(model.spec)) {
    const LayerParams& p = model.params[i];
    serial::Json e;
    e["layer"] = i;
    e["weight"] = tensor_ref(blob, p.weight);
    if (model.spec.layers[i].has_bias) e["bias"] = tensor_ref(blob, p.bias);
    e["clip"] = tensor_ref(blob, p.clip);
    params.push_back(e);
  }
  m["params"] = params;
  serial::Json gates = serial::Json::array();
  for (const auto& g : model.gates.layers) {
    serial::Json e;
    e["layer"] = g.layer;
    e["out_channels"] = g.out_channels;
    e["delta"] = tensor_ref(blob, g.delta);
    e["gamma"] = tensor_ref(blob, g.gamma);
    gates.push_back(e);
  }
  m["gates"] = gates;
  c.manifest = std::move(m);
  c.blob = std::move(blob.bytes());
  write_atomic(path, encode(c));
}

Model load_model(const std::filesystem::path& path) {
  const Container c = decode(read_file(path), kCheckpointMagic);
  if (c.version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(c.version));
  }
  try {
    const serial::Json& m = c.manifest;
    Model model;
    model.spec = serial::model_spec_from_json(m.at("model"));
    model.space = serial::search_space_from_json(m.at("space"));
    model.gates.tau = read_f64(m.at("tau"), c.blob).at(0);
    model.params.resize(model.spec.layers.size());
    for (const serial::Json& e : m.at("params")) {
      const auto i = e.at("layer").get<std::size_t>();
      if (i >= model.spec.layers.size() || !model.spec.layers[i].is_weight_layer()) {
        throw IoError("parameters for a layer without weights");
      }
      LayerParams& p = model.params[i];
      p.weight = tensor_from(e.at("weight"), c.blob, true);
      if (e.contains("bias")) p.bias = tensor_from(e.at("bias"), c.blob, true);
      p.clip = tensor_from(e.at("clip"), c.blob, true);
      if (p.weight.shape != model.spec.layers[i].weight_shape()) throw IoError("weight shape does not match layer");
    }
    for (const serial::Json& e : m.at("gates")) {
      nas::LayerGates g;
      g.layer = e.at("layer").get<std::size_t>();
      g.out_channels = e.at("out_channels").get<std::size_t>();
      g.delta = tensor_from(e.at("delta"), c.blob, true);
      g.gamma = tensor_from(e.at("gamma"), c.blob, true);
      model.gates.layers.push_back(std::move(g));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint: " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace chanmp::io
