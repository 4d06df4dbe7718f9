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

#include "chanmp/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "chanmp/error.hpp"

namespace chanmp::data {

Shape Dataset::sample_shape() const {
  if (inputs.rank() == 0) return {};
  return Shape(inputs.shape.begin() + 1, inputs.shape.end());
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() == 0) return {};
  const std::size_t row = t.size() / std::max<std::size_t>(t.dim(0), 1);
  Shape shape = t.shape;
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= t.dim(0)) throw ShapeError("gather: row index out of range");
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(rows[k] * row), row,
                out.data.begin() + static_cast<std::ptrdiff_t>(k * row));
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset d;
  d.inputs = gather_rows(inputs, rows);
  if (!labels.empty()) {
    d.labels.reserve(rows.size());
    for (std::size_t r : rows) d.labels.push_back(labels.at(r));
  }
  if (targets.size() > 0) d.targets = gather_rows(targets, rows);
  return d;
}

bool Dataset::operator==(const Dataset& o) const {
  return inputs.shape == o.inputs.shape && inputs.data == o.inputs.data && labels == o.labels &&
         targets.shape == o.targets.shape && targets.data == o.targets.data;
}

Dataset make_blobs(std::size_t n, std::uint64_t seed, double separation, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, stddev);
  Dataset d;
  d.inputs = Tensor({n, 2});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double cx = (label == 0 ? -0.5 : 0.5) * separation;
    d.inputs[2 * i] = cx + noise(rng);
    d.inputs[2 * i + 1] = noise(rng);
    d.labels[i] = label;
  }
  return d;
}

Dataset make_spirals(std::size_t n, std::uint64_t seed, double turns, double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset d;
  d.inputs = Tensor({n, 2});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    // sqrt spreads samples evenly along the arc length.
    const double t = 0.05 + 0.95 * std::sqrt(unit(rng));
    const double angle = 2.0 * std::numbers::pi * turns * t + (label == 0 ? 0.0 : std::numbers::pi);
    d.inputs[2 * i] = t * std::cos(angle) + jitter(rng);
    d.inputs[2 * i + 1] = t * std::sin(angle) + jitter(rng);
    d.labels[i] = label;
  }
  return d;
}

Shape IdxArray::shape() const { return Shape(dims.begin(), dims.end()); }

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::size_t element_size(std::uint8_t type) {
  switch (type) {
    case 0x08:
    case 0x09:
      return 1;
    case 0x0B:
      return 2;
    case 0x0C:
    case 0x0D:
      return 4;
    case 0x0E:
      return 8;
    default:
      throw IoError("idx: unknown element type 0x" + std::to_string(type));
  }
}

double decode(std::span<const std::uint8_t> b, std::size_t at, std::uint8_t type) {
  switch (type) {
    case 0x08:
      return b[at];
    case 0x09:
      return static_cast<std::int8_t>(b[at]);
    case 0x0B:
      return static_cast<std::int16_t>((b[at] << 8) | b[at + 1]);
    case 0x0C:
      return static_cast<std::int32_t>(read_be32(b, at));
    case 0x0D:
      return std::bit_cast<float>(read_be32(b, at));
    default: {
      const std::uint64_t hi = read_be32(b, at), lo = read_be32(b, at + 4);
      return std::bit_cast<double>((hi << 32) | lo);
    }
  }
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw IoError("idx: truncated header");
  if (bytes[0] != 0 || bytes[1] != 0) throw IoError("idx: bad magic (first two bytes must be zero)");
  IdxArray a;
  a.type = bytes[2];
  const std::size_t rank = bytes[3];
  const std::size_t esize = element_size(a.type);
  if (rank == 0) throw IoError("idx: rank must be positive");
  if (bytes.size() < 4 + 4 * rank) throw IoError("idx: truncated dimension list");
  std::size_t count = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    a.dims.push_back(read_be32(bytes, 4 + 4 * k));
    count *= a.dims.back();
  }
  const std::size_t offset = 4 + 4 * rank;
  if (bytes.size() != offset + count * esize) {
    throw IoError("idx: payload has " + std::to_string(bytes.size() - offset) + " bytes, header implies " +
                  std::to_string(count * esize));
  }
  a.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) a.values[i] = decode(bytes, offset + i * esize, a.type);
  return a;
}

IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("idx: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_idx(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_idx_u8(const std::vector<std::uint32_t>& dims,
                                        std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out{0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
  for (std::uint32_t d : dims) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(d >> s));
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const Shape& sample_shape) {
  const IdxArray img = read_idx(images);
  const IdxArray lab = read_idx(labels);
  if (lab.dims.size() != 1) throw IoError(labels.string() + ": labels must be 1-D");
  if (img.dims.front() != lab.dims.front()) {
    throw IoError("idx: " + std::to_string(img.dims.front()) + " images but " +
                  std::to_string(lab.dims.front()) + " labels");
  }
  Dataset d;
  Shape shape = img.shape();
  if (!sample_shape.empty()) {
    Shape want{shape[0]};
    want.insert(want.end(), sample_shape.begin(), sample_shape.end());
    if (numel(want) != numel(shape)) {
      throw IoError("idx: images " + to_string(shape) + " cannot be viewed as samples of " +
                    to_string(sample_shape));
    }
    shape = want;
  }
  d.inputs = Tensor(shape, img.values);
  if (img.type == 0x08) {
    for (double& v : d.inputs.data) v /= 255.0;
  }
  d.labels.reserve(lab.values.size());
  for (double v : lab.values) d.labels.push_back(static_cast<int>(v));
  return d;
}

namespace {

Dataset generate(const DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  if (spec.generator == "blobs") return make_blobs(n, seed, spec.separation);
  if (spec.generator == "spirals") return make_spirals(n, seed, spec.turns, spec.noise);
  throw ConfigError("unknown dataset generator '" + spec.generator + "'");
}

}  // namespace

DataSplits load_dataset(const DatasetSpec& spec, const Shape& sample_shape) {
  if (!(spec.val_fraction > 0.0 && spec.val_fraction < 1.0)) {
    throw ConfigError("dataset: validation fraction must lie in (0, 1)");
  }
  Dataset full;
  DataSplits out;
  if (spec.generator == "idx") {
    full = load_idx(spec.train_images, spec.train_labels, sample_shape);
    if (!spec.test_images.empty()) out.test = load_idx(spec.test_images, spec.test_labels, sample_shape);
  } else {
    full = generate(spec, spec.n_train, spec.seed);
    out.test = generate(spec, spec.n_test, spec.seed + 0x9E3779B97F4A7C15ULL);
  }
  std::vector<std::size_t> order(full.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed ^ 0xD1B54A32D192ED03ULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::round(spec.val_fraction * static_cast<double>(full.size())));
  if (n_val == 0 || n_val >= full.size()) throw ConfigError("dataset: too few samples to hold out validation data");
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  out.val = full.subset(val);
  out.train = full.subset(train);
  return out;
}

}  // namespace chanmp::data
