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

// chanmp: channel-wise mixed-precision search, Pareto extraction,
// search-space counting and lowering.
//
// Exit codes: 0 ok, 1 other failure, 2 bad config or usage,
// 3 training diverged, 4 lowered model not equivalent.
// Log verbosity: CHANMP_LOG=error|warn|info|debug.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "chanmp/container.hpp"
#include "chanmp/cost.hpp"
#include "chanmp/error.hpp"
#include "chanmp/experiment.hpp"
#include "chanmp/log.hpp"
#include "chanmp/lowering.hpp"
#include "chanmp/serialize.hpp"

using namespace chanmp;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kDiverged = 3, kNotEquivalent = 4 };

// Output channels of the width-0.25 MobileNetV1 weight layers (2-class head).
std::vector<std::size_t> mobilenet_v1_025() {
  std::vector<std::size_t> c{8, 8, 16, 16, 32, 32, 32, 32, 64, 64, 64, 64, 128};
  for (int i = 0; i < 5; ++i) c.insert(c.end(), {128, 128});
  c.insert(c.end(), {128, 256, 256, 256, 2});
  return c;
}

int cmd_search(const std::string& config_path, const std::string& out, const std::int64_t seed, std::size_t jobs) {
  exp::ExperimentConfig c = exp::load_experiment(config_path);
  if (!out.empty()) c.out_dir = out;
  if (seed >= 0) c.train.seed = static_cast<std::uint64_t>(seed);
  const exp::SweepResult r = exp::run_sweep(c, {jobs});
  std::printf("%-12s %-8s %-8s %-14s %s\n", "lambda", "val", "test", "size_bits", "energy_uJ");
  for (const auto& run : r.runs) {
    std::printf("%-12.4g %-8.4f %-8.4f %-14.0f %.6g\n", run.lambda, run.val_score, run.test_score, run.size_bits,
                run.energy_uj);
  }
  std::printf("wrote %s/results.csv\n", c.out_dir.c_str());
  return kOk;
}

int cmd_pareto(const std::string& results, const std::string& out, const std::string& mode) {
  std::ifstream in(results);
  if (!in) throw ConfigError("cannot open " + results);
  const auto records = exp::read_results_csv(in);
  const auto front = exp::pareto_front(records, cost::parse_reg_mode(mode));
  std::vector<exp::ParetoRecord> kept;
  for (std::size_t i : front) kept.push_back(records[i]);
  std::ostringstream csv;
  exp::write_results_csv(csv, kept);
  const std::string dest = out.empty() ? (std::filesystem::path(results).parent_path() / "pareto.csv").string() : out;
  io::write_atomic(dest, csv.str());
  std::printf("%zu of %zu records are Pareto-optimal; wrote %s\n", kept.size(), records.size(), dest.c_str());
  return kOk;
}

int cmd_space(const std::string& config_path, const std::string& preset) {
  std::vector<std::size_t> channels;
  std::size_t nw = 3, nx = 3;
  if (!preset.empty()) {
    if (preset != "mobilenet_v1_025") throw ConfigError("unknown preset '" + preset + "'");
    channels = mobilenet_v1_025();
  } else {
    const exp::ExperimentConfig c = exp::load_experiment(config_path);
    for (std::size_t i : weight_layers(c.model)) {
      if (c.model.layers[i].searchable) channels.push_back(c.model.layers[i].out_channels);
    }
    nw = c.space.weights.size();
    nx = c.space.activations.size();
  }
  std::printf("layers: %zu\n", channels.size());
  std::printf("layer-wise   log10: %.3f\n", cost::count_search_space(channels, nw, nx, cost::SpaceMode::LayerWise));
  std::printf("channel-wise log10: %.3f\n", cost::count_search_space(channels, nw, nx, cost::SpaceMode::ChannelWise));
  return kOk;
}

int cmd_lower(const std::string& checkpoint, const std::string& assignment_path, const std::string& out,
              std::size_t inputs, std::int64_t seed) {
  const Model model = io::load_model(checkpoint);
  std::ifstream in(assignment_path);
  if (!in) throw ConfigError("cannot open " + assignment_path);
  serial::Json j;
  try {
    j = serial::Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(assignment_path + ": " + e.what());
  }
  const nas::PrecisionAssignment a = serial::assignment_from_json(j.contains("assignment") ? j.at("assignment") : j);
  lower::PermutationReport report;
  const lower::LoweredModel lowered = lower::lower_model(model, a, &report);
  for (std::size_t l : report.applied) std::printf("permuted  %s\n", model.spec.layers[l].name.c_str());
  for (const auto& s : report.skipped) {
    std::printf("kept      %s (%s)\n", model.spec.layers[s.layer].name.c_str(), s.reason.c_str());
  }
  const double diff =
      lower::verify_equivalence(model, a, lowered, inputs, seed < 0 ? 0 : static_cast<std::uint64_t>(seed));
  std::printf("max |original - lowered| over %zu inputs: %.17g\n", inputs, diff);
  if (diff != 0.0) {
    log::error("lowered model is not equivalent; nothing written");
    return kNotEquivalent;
  }
  const std::string dest = out.empty() ? "lowered.chmp" : out;
  lower::export_lowered(dest, lowered);
  std::printf("wrote %s (%.0f weight bits)\n", dest.c_str(), lower::lowered_size_bits(lowered));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-wise mixed-precision search"};
  app.require_subcommand(1);

  std::string config, out, results, mode = "size", preset, checkpoint, assignment;
  std::int64_t seed = -1;
  std::size_t jobs = 1, inputs = 100;

  auto* search = app.add_subcommand("search", "run warmup and one search per lambda");
  search->add_option("--config", config, "experiment JSON")->required();
  search->add_option("--out", out, "output directory (overrides out_dir)");
  search->add_option("--seed", seed, "training seed (overrides train.seed)");
  search->add_option("--jobs", jobs, "concurrent lambda runs")->check(CLI::PositiveNumber);

  auto* pareto = app.add_subcommand("pareto", "keep the non-dominated rows of a results.csv");
  pareto->add_option("results", results, "results.csv")->required();
  pareto->add_option("--out", out, "output CSV (default: pareto.csv next to the input)");
  pareto->add_option("--cost", mode, "size or energy");

  auto* space = app.add_subcommand("space", "log10 size of the layer-wise and channel-wise search spaces");
  space->add_option("--config", config, "experiment JSON");
  space->add_option("--preset", preset, "built-in shape table: mobilenet_v1_025");

  auto* lower_cmd = app.add_subcommand("lower", "permute, split, verify and export a searched model");
  lower_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  lower_cmd->add_option("--assignment", assignment, "assignment JSON")->required();
  lower_cmd->add_option("--out", out, "lowered model file");
  lower_cmd->add_option("--inputs", inputs, "random inputs for the equivalence check")->check(CLI::PositiveNumber);
  lower_cmd->add_option("--seed", seed, "seed of the random inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*search) return cmd_search(config, out, seed, jobs);
    if (*pareto) return cmd_pareto(results, out, mode);
    if (*space) {
      if (config.empty() == preset.empty()) throw ConfigError("space: give exactly one of --config or --preset");
      return cmd_space(config, preset);
    }
    if (*lower_cmd) return cmd_lower(checkpoint, assignment, out, inputs, seed);
  } catch (const ConfigError& e) {
    log::error(e.what());
    return kConfig;
  } catch (const UnsupportedPrecision& e) {
    log::error(e.what());
    return kConfig;
  } catch (const DivergenceError& e) {
    log::error(e.what());
    return kDiverged;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kOther;
  }
  return kOther;
}
