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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chanmp/model.hpp"
#include "chanmp/serialize.hpp"

// Self-describing binary container:
//
//   magic      8 bytes   (file kind, e.g. "CHMPCKPT")
//   version    u32 LE
//   manifest   u64 LE byte length, then UTF-8 JSON
//   blob       u64 LE byte length, then raw arrays
//
// Arrays live in the blob and are referenced from the manifest as
// {"dtype": "f64le" | "u8", "offset": bytes, "count": elements}.
namespace chanmp::io {

struct Container {
  std::string magic;
  std::uint32_t version = 1;
  serial::Json manifest;
  std::vector<std::uint8_t> blob;
};

class BlobWriter {
 public:
  serial::Json add_f64(std::span<const double> values);
  serial::Json add_u8(std::span<const std::uint8_t> values);
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

std::vector<double> read_f64(const serial::Json& ref, std::span<const std::uint8_t> blob);
std::vector<std::uint8_t> read_u8(const serial::Json& ref, std::span<const std::uint8_t> blob);

std::vector<std::uint8_t> encode(const Container& c);
Container decode(std::span<const std::uint8_t> bytes, const std::string& expected_magic);

// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

inline constexpr const char* kCheckpointMagic = "CHMPCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Float64 parameters round-trip bit-exactly.
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace chanmp::io
