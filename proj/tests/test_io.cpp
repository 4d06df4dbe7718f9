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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "chanmp/container.hpp"
#include "chanmp/data.hpp"
#include "chanmp/error.hpp"
#include "chanmp/experiment.hpp"
#include "chanmp/serialize.hpp"
#include "support/oracles.hpp"
#include "support/toy.hpp"

using namespace chanmp;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("chanmp_io_" + name);
}

const char* kConfig = R"({
  "model": {"input_shape": [2], "layers": [
    {"kind": "fc", "in": 2, "out": 8}, {"kind": "relu"}, {"kind": "fc", "in": 8, "out": 2}]},
  "dataset": {"generator": "spirals", "n_train": 200, "n_test": 100, "seed": 4},
  "precisions": {"weights": [2, 4, 8], "activations": [2, 4, 8], "search_activations": false},
  "reg_mode": "size",
  "lambdas": [1e-6, 1e-3],
  "train": {"epochs_wu": 3, "batch_size": 16},
  "out_dir": "runs/test"
})";

}  // namespace

TEST(Data, GeneratorsAreDeterministic) {
  EXPECT_TRUE(data::make_blobs(100, 1) == data::make_blobs(100, 1));
  EXPECT_FALSE(data::make_blobs(100, 1) == data::make_blobs(100, 2));
  const auto s = data::make_spirals(200, 7);
  EXPECT_TRUE(s == data::make_spirals(200, 7));
  EXPECT_EQ(s.inputs.shape, (Shape{200, 2}));
  int ones = 0;
  for (int l : s.labels) ones += l;
  EXPECT_EQ(ones, 100);
}

TEST(Data, SplitsAreDisjointAndSeeded) {
  data::DatasetSpec d;
  d.generator = "blobs";
  d.n_train = 100;
  d.seed = 3;
  const auto a = data::load_dataset(d, {2});
  const auto b = data::load_dataset(d, {2});
  EXPECT_EQ(a.train.size(), 90u);
  EXPECT_EQ(a.val.size(), 10u);
  EXPECT_TRUE(a.val == b.val);
  EXPECT_FALSE(a.test == a.train.subset(std::vector<std::size_t>{0}));
}

TEST(Data, IdxHeaderAndPayload) {
  std::vector<std::uint8_t> payload(160);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(i);
  const auto bytes = data::encode_idx_u8({10, 4, 4}, payload);
  EXPECT_EQ(bytes[0], 0);
  EXPECT_EQ(bytes[2], 0x08);
  EXPECT_EQ(bytes[3], 3);
  const auto arr = data::parse_idx(bytes);
  EXPECT_EQ(arr.shape(), (Shape{10, 4, 4}));
  EXPECT_EQ(arr.values[159], 159.0);

  // Big-endian int32 payload: 0x00000102 = 258, 0xFFFFFFFF = -1.
  const std::vector<std::uint8_t> i32{0, 0, 0x0C, 1, 0, 0, 0, 2, 0, 0, 1, 2, 0xFF, 0xFF, 0xFF, 0xFF};
  const auto a32 = data::parse_idx(i32);
  EXPECT_EQ(a32.values, (std::vector<double>{258.0, -1.0}));

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(data::parse_idx(truncated), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 1;
  EXPECT_THROW(data::parse_idx(bad_magic), IoError);
}

TEST(Data, IdxLabelCountMismatch) {
  const auto img = temp_path("img.idx"), lab = temp_path("lab.idx");
  const std::vector<std::uint8_t> pixels(10 * 4, 7), labels(9, 1);
  for (const auto& [p, b] : {std::pair{img, data::encode_idx_u8({10, 2, 2}, pixels)},
                             std::pair{lab, data::encode_idx_u8({9}, labels)}}) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
  EXPECT_THROW(data::load_idx(img, lab), IoError);
  std::filesystem::remove(img);
  std::filesystem::remove(lab);
}

TEST(Config, RoundTripAndValidation) {
  const auto j = serial::Json::parse(kConfig);
  const exp::ExperimentConfig c = exp::experiment_from_json(j);
  EXPECT_EQ(c.lambdas.size(), 2u);
  EXPECT_EQ(c.train.epochs_wu, 3u);
  EXPECT_EQ(c.model.layers[1].name, "relu1");
  const exp::ExperimentConfig back = exp::experiment_from_json(exp::to_json(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(exp::to_json(back).dump(), exp::to_json(c).dump());

  auto energy = j;
  energy["reg_mode"] = "energy";
  energy["precisions"]["search_activations"] = true;
  EXPECT_THROW(exp::experiment_from_json(energy), ConfigError);  // no LUT
  auto act = j;
  act["precisions"]["search_activations"] = true;
  EXPECT_THROW(exp::experiment_from_json(act), ConfigError);  // size mode searches activations
  auto typo = j;
  typo["lamdbas"] = {1};
  EXPECT_THROW(exp::experiment_from_json(typo), ConfigError);
  auto shape = j;
  shape["model"]["layers"][2]["in"] = 7;
  try {
    exp::experiment_from_json(shape);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("fc2"), std::string::npos);
  }
}

TEST(Config, WarmupKeyIgnoresSearchSettings) {
  exp::ExperimentConfig c = exp::experiment_from_json(serial::Json::parse(kConfig));
  const std::string k = exp::warmup_key(c);
  c.lambdas = {5.0};
  c.train.lr_gates = 0.5;
  EXPECT_EQ(exp::warmup_key(c), k);
  c.train.seed = 99;
  EXPECT_NE(exp::warmup_key(c), k);
}

TEST(Pareto, DominanceExamples) {
  std::vector<exp::ParetoRecord> r(2);
  r[0].score = 0.9;
  r[0].size_bits = 10;
  r[1].score = 0.8;
  r[1].size_bits = 12;
  EXPECT_EQ(exp::pareto_front(r, cost::RegMode::Size), (std::vector<std::size_t>{0}));
  EXPECT_EQ(exp::pareto_front(std::span(r).first(1), cost::RegMode::Size), (std::vector<std::size_t>{0}));
}

TEST(Pareto, MatchesBruteForce) {
  std::mt19937_64 rng(61);
  for (int t = 0; t < 200; ++t) {
    std::vector<exp::ParetoRecord> r(1 + rng() % 12);
    for (auto& x : r) {
      x.score = static_cast<double>(rng() % 6) / 5.0;  // coarse values force ties
      x.size_bits = static_cast<double>(rng() % 8);
      x.energy_uj = static_cast<double>(rng() % 8) * 0.5;
    }
    for (auto mode : {cost::RegMode::Size, cost::RegMode::Energy}) {
      EXPECT_EQ(exp::pareto_front(r, mode), oracle::pareto_brute_force(r, mode));
    }
  }
}

TEST(Results, CsvRoundTrip) {
  const ModelSpec spec = toy::mlp(2, {3}, 2);
  nas::PrecisionAssignment a;
  a.layers.push_back({0, 8, {2, 4, 4}});
  a.layers.push_back({2, 4, {8, 8}});
  const auto rec = exp::make_record(1e-4, 0.875, spec, a, nullptr);
  EXPECT_EQ(rec.size_bits, 2.0 * (2 + 4 + 4) + 3.0 * 16);
  EXPECT_EQ(exp::format_hist(rec.weight_hist), "2:1|4:2;8:2");
  std::ostringstream out;
  std::vector<exp::ParetoRecord> recs{rec, rec};
  recs[1].lambda = 0.1;
  exp::write_results_csv(out, recs);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "lambda,score,size_bits,energy_uJ,act_bits,per_layer_w_hist");
  std::istringstream in(out.str());
  EXPECT_EQ(exp::read_results_csv(in), recs);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(62);
  const auto path = temp_path("model.ckpt");
  for (int t = 0; t < 5; ++t) {
    nas::SearchSpace space;
    if (t % 2) space.granularity = nas::Granularity::Layer;
    Model m = Model::create(toy::random_net(rng), space, rng());
    toy::randomize(m, rng);
    for (auto& g : m.gates.layers) g.gamma = oracle::random_tensor(g.gamma.shape, rng);
    m.gates.tau = 0.1 + 1.0 / 3.0;
    io::save_model(path, m);
    EXPECT_TRUE(io::load_model(path) == m);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto path = temp_path("bad.ckpt");
  io::write_atomic(path, std::string("CHMPCKPT\x01\x00\x00\x00", 12));
  EXPECT_THROW(io::load_model(path), IoError);
  EXPECT_THROW(io::load_model(temp_path("missing.ckpt")), IoError);
  std::filesystem::remove(path);
}
