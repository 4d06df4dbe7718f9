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
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chanmp/cost.hpp"
#include "chanmp/data.hpp"
#include "chanmp/gates.hpp"
#include "chanmp/model.hpp"
#include "chanmp/serialize.hpp"
#include "chanmp/trainer.hpp"

namespace chanmp::exp {

// One JSON document:
//
//   {"model": {...}, "dataset": {...}, "precisions": {...},
//    "reg_mode": "size" | "energy", "lambdas": [...], "train": {...},
//    "lut": "path.csv", "out_dir": "runs/x"}
//
// `train.lambda` and `train.reg_mode` are taken from the top level.
struct ExperimentConfig {
  ModelSpec model;
  data::DatasetSpec dataset;
  nas::SearchSpace space;
  std::vector<double> lambdas;
  train::TrainConfig train;
  std::string lut;  // relative paths resolve against the config file
  std::string out_dir = "out";

  // Throws ConfigError; runs before any training.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

serial::Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const serial::Json& j);
// Parses and validates; relative `lut` is rewritten against the file's directory.
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Identifies a warmup checkpoint: depends on the architecture, dataset,
// precisions and the warmup-relevant training settings.
std::string warmup_key(const ExperimentConfig& c);

struct ParetoRecord {
  double lambda = 0.0;
  double score = 0.0;
  double size_bits = 0.0;
  double energy_uj = 0.0;
  std::vector<int> act_bits;                              // per weight layer
  std::vector<std::map<int, std::size_t>> weight_hist;    // per weight layer: bits -> channels

  bool operator==(const ParetoRecord&) const = default;
};

ParetoRecord make_record(double lambda, double score, const ModelSpec& spec,
                         const nas::PrecisionAssignment& assignment, const cost::CostLut* lut);

// `2:3|4:5|8:8`, layers separated by ';'.
std::string format_hist(const std::vector<std::map<int, std::size_t>>& hist);
std::vector<std::map<int, std::size_t>> parse_hist(const std::string& s);

inline constexpr const char* kResultsHeader = "lambda,score,size_bits,energy_uJ,act_bits,per_layer_w_hist";

void write_results_csv(std::ostream& out, std::span<const ParetoRecord> records);
std::vector<ParetoRecord> read_results_csv(std::istream& in);

// Indices of the records no other record dominates (score >= and cost <=,
// one of them strict). Cost is size_bits or energy_uJ.
std::vector<std::size_t> pareto_front(std::span<const ParetoRecord> records, cost::RegMode cost);

struct SweepOptions {
  std::size_t jobs = 1;
  bool reuse_warmup = true;
};

struct SweepResult {
  std::vector<train::SearchResult> runs;  // in lambda order
  std::vector<ParetoRecord> records;
};

// Shared warmup (cached under out_dir), then one isolated search per
// lambda. Writes results.csv plus per-lambda assignment, curve and
// checkpoint files.
SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options = {});

}  // namespace chanmp::exp
