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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chanmp/tensor.hpp"

namespace chanmp::data {

// Inputs [N, ...] with either integer class labels or real-valued targets.
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  Tensor targets;  // regression only

  std::size_t size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
  Shape sample_shape() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  bool operator==(const Dataset&) const;
};

struct DataSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Two isotropic Gaussian clusters in 2-D, centred at (-sep/2, 0) and (+sep/2, 0).
Dataset make_blobs(std::size_t n, std::uint64_t seed, double separation = 4.0, double stddev = 0.5);

// Two interleaved spirals of `turns` revolutions each, coordinates in about [-1, 1].
Dataset make_spirals(std::size_t n, std::uint64_t seed, double turns = 1.0, double noise = 0.03);

// Raw IDX array: big-endian magic (0x0000, type, rank), big-endian u32
// extents, then the payload.
struct IdxArray {
  std::uint8_t type = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // decoded payload

  Shape shape() const;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);
IdxArray read_idx(const std::filesystem::path& path);
// Only unsigned-byte payloads are written.
std::vector<std::uint8_t> encode_idx_u8(const std::vector<std::uint32_t>& dims,
                                        std::span<const std::uint8_t> payload);

// Images scaled to [0, 1] and reshaped to [N, sample_shape...] (when given).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const Shape& sample_shape = {});

struct DatasetSpec {
  std::string generator;  // "blobs", "spirals", or "idx"
  std::size_t n_train = 1000;
  std::size_t n_test = 500;
  std::uint64_t seed = 1;
  double turns = 1.0;
  double noise = 0.03;
  double separation = 4.0;
  std::string train_images, train_labels, test_images, test_labels;
  double val_fraction = 0.1;

  bool operator==(const DatasetSpec&) const = default;
};

// Deterministic train/val/test split; the validation rows are a seeded
// random `val_fraction` of the training data.
DataSplits load_dataset(const DatasetSpec& spec, const Shape& sample_shape = {});

// Batch of rows gathered into one tensor.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace chanmp::data
