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

#include "chanmp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "chanmp/container.hpp"
#include "chanmp/error.hpp"
#include "chanmp/log.hpp"

namespace chanmp::exp {

void ExperimentConfig::validate() const {
  infer_shapes(model);
  if (lambdas.empty()) throw ConfigError("config: 'lambdas' must list at least one value");
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("config: lambda values must be finite and >= 0");
  }
  train.validate();
  if (train.reg_mode == cost::RegMode::Energy && lut.empty()) {
    throw ConfigError("config: energy mode requires a 'lut' path");
  }
  if (train.reg_mode == cost::RegMode::Size && space.search_activations) {
    throw ConfigError("config: size mode keeps activations at the maximum precision; set "
                      "precisions.search_activations to false");
  }
  if (dataset.generator != "blobs" && dataset.generator != "spirals" && dataset.generator != "idx") {
    throw ConfigError("config: unknown dataset generator '" + dataset.generator + "'");
  }
  if (out_dir.empty()) throw ConfigError("config: 'out_dir' must not be empty");
}

serial::Json to_json(const ExperimentConfig& c) {
  serial::Json j;
  j["model"] = serial::to_json(c.model);
  j["dataset"] = serial::to_json(c.dataset);
  j["precisions"] = serial::to_json(c.space);
  j["reg_mode"] = cost::to_string(c.train.reg_mode);
  j["lambdas"] = c.lambdas;
  j["train"] = serial::to_json(c.train);
  if (!c.lut.empty()) j["lut"] = c.lut;
  j["out_dir"] = c.out_dir;
  return j;
}

ExperimentConfig experiment_from_json(const serial::Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::set<std::string> allowed{"model", "dataset", "precisions", "reg_mode", "lambdas",
                                             "train", "lut", "out_dir"};
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError("config: unknown key '" + item.key() + "'");
  }
  for (const char* key : {"model", "dataset", "lambdas"}) {
    if (!j.contains(key)) throw ConfigError(std::string("config: missing key '") + key + "'");
  }
  ExperimentConfig c;
  try {
    c.model = serial::model_spec_from_json(j.at("model"));
    c.dataset = serial::dataset_spec_from_json(j.at("dataset"));
    if (j.contains("precisions")) c.space = serial::search_space_from_json(j.at("precisions"));
    if (j.contains("train")) c.train = serial::train_config_from_json(j.at("train"));
    if (j.contains("reg_mode")) c.train.reg_mode = cost::parse_reg_mode(j.at("reg_mode").get<std::string>());
    c.lambdas = j.at("lambdas").get<std::vector<double>>();
    if (j.contains("lut")) c.lut = j.at("lut").get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  serial::Json j;
  try {
    j = serial::Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = experiment_from_json(j);
  const auto base = path.parent_path();
  if (!c.lut.empty() && std::filesystem::path(c.lut).is_relative()) c.lut = (base / c.lut).string();
  for (std::string* p : {&c.dataset.train_images, &c.dataset.train_labels, &c.dataset.test_images,
                         &c.dataset.test_labels}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  }
  return c;
}

std::string warmup_key(const ExperimentConfig& c) {
  serial::Json j;
  j["model"] = serial::to_json(c.model);
  j["dataset"] = serial::to_json(c.dataset);
  j["precisions"] = serial::to_json(c.space);
  const train::TrainConfig& t = c.train;
  j["warmup"] = {t.epochs_wu, t.batch_size, t.lr_weights, t.momentum, t.lr_clip, t.clip_init, t.seed,
                 train::to_string(t.task)};
  // FNV-1a, 64 bit.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ParetoRecord make_record(double lambda, double score, const ModelSpec& spec,
                         const nas::PrecisionAssignment& assignment, const cost::CostLut* lut) {
  ParetoRecord r;
  r.lambda = lambda;
  r.score = score;
  r.size_bits = cost::exact_model_size(spec, assignment);
  if (lut != nullptr) r.energy_uj = cost::exact_model_energy(spec, assignment, *lut);
  for (const auto& l : assignment.layers) {
    r.act_bits.push_back(l.act_bits);
    std::map<int, std::size_t> h;
    for (int b : l.weight_bits) ++h[b];
    r.weight_hist.push_back(std::move(h));
  }
  return r;
}

std::string format_hist(const std::vector<std::map<int, std::size_t>>& hist) {
  std::string s;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (i) s += ';';
    bool first = true;
    for (const auto& [bits, n] : hist[i]) {
      if (!first) s += '|';
      first = false;
      s += std::to_string(bits) + ":" + std::to_string(n);
    }
  }
  return s;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError(std::string("results: bad ") + what + " '" + s + "'");
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::map<int, std::size_t>> parse_hist(const std::string& s) {
  std::vector<std::map<int, std::size_t>> out;
  if (s.empty()) return out;
  for (const std::string& layer : split(s, ';')) {
    std::map<int, std::size_t> h;
    for (const std::string& entry : split(layer, '|')) {
      const auto colon = entry.find(':');
      if (colon == std::string::npos) throw ConfigError("results: bad histogram entry '" + entry + "'");
      h[parse_number<int>(entry.substr(0, colon), "bit-width")] =
          parse_number<std::size_t>(entry.substr(colon + 1), "channel count");
    }
    out.push_back(std::move(h));
  }
  return out;
}

void write_results_csv(std::ostream& out, std::span<const ParetoRecord> records) {
  out << kResultsHeader << '\n';
  for (const ParetoRecord& r : records) {
    std::string act;
    for (std::size_t i = 0; i < r.act_bits.size(); ++i) act += (i ? "|" : "") + std::to_string(r.act_bits[i]);
    out << fmt(r.lambda) << ',' << fmt(r.score) << ',' << fmt(r.size_bits) << ',' << fmt(r.energy_uj) << ','
        << act << ',' << format_hist(r.weight_hist) << '\n';
  }
}

std::vector<ParetoRecord> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw ConfigError(std::string("results: expected header '") + kResultsHeader + "'");
  }
  std::vector<ParetoRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 6) throw ConfigError("results: expected 6 columns in '" + line + "'");
    ParetoRecord r;
    r.lambda = parse_number<double>(cols[0], "lambda");
    r.score = parse_number<double>(cols[1], "score");
    r.size_bits = parse_number<double>(cols[2], "size");
    r.energy_uj = parse_number<double>(cols[3], "energy");
    if (!cols[4].empty()) {
      for (const std::string& a : split(cols[4], '|')) r.act_bits.push_back(parse_number<int>(a, "act bits"));
    }
    r.weight_hist = parse_hist(cols[5]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> pareto_front(std::span<const ParetoRecord> records, cost::RegMode mode) {
  auto cost_of = [&](const ParetoRecord& r) { return mode == cost::RegMode::Size ? r.size_bits : r.energy_uj; };
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Best score first, ties by lower cost; a point survives when it is
  // strictly cheaper than everything ranked above it.
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].score != records[b].score) return records[a].score > records[b].score;
    return cost_of(records[a]) < cost_of(records[b]);
  });
  std::vector<std::size_t> front;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const ParetoRecord& r = records[idx[k]];
    const double c = cost_of(r);
    const bool duplicate = !front.empty() && records[front.back()].score == r.score && cost_of(records[front.back()]) == c;
    if (c < best_cost || duplicate) {
      front.push_back(idx[k]);
      best_cost = std::min(best_cost, c);
    }
  }
  std::sort(front.begin(), front.end());
  return front;
}

namespace {

std::string curve_csv(const std::vector<train::EpochLog>& curve) {
  std::ostringstream out;
  out << "phase,epoch,task_loss,reg,total,val_score,tau\n";
  for (const auto& e : curve) {
    out << train::to_string(e.phase) << ',' << e.epoch << ',' << fmt(e.task_loss) << ',' << fmt(e.reg) << ','
        << fmt(e.total) << ',' << fmt(e.val_score) << ',' << fmt(e.tau) << '\n';
  }
  return out.str();
}

Model warmed_model(const ExperimentConfig& config, const data::DataSplits& data, const SweepOptions& options) {
  const auto ckpt = std::filesystem::path(config.out_dir) / ("warmup-" + warmup_key(config) + ".ckpt");
  if (options.reuse_warmup && std::filesystem::exists(ckpt)) {
    log::info("reusing warmup checkpoint " + ckpt.string());
    return io::load_model(ckpt);
  }
  Model model = Model::create(config.model, config.space, config.train.seed, config.train.clip_init);
  std::vector<train::EpochLog> curve = train::warmup(model, data, config.train);
  io::save_model(ckpt, model);
  io::write_atomic(std::filesystem::path(config.out_dir) / "warmup_curve.csv", curve_csv(curve));
  return model;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, const SweepOptions& options) {
  config.validate();
  cost::CostLut lut;
  const cost::CostLut* lut_ptr = nullptr;
  if (!config.lut.empty()) {
    lut = cost::CostLut::load_csv(config.lut);
    lut.validate(config.space.activations, config.space.weights);
    lut_ptr = &lut;
  }
  const std::filesystem::path out_dir(config.out_dir);
  std::filesystem::create_directories(out_dir);
  const data::DataSplits data = data::load_dataset(config.dataset, config.model.input_shape);
  const Model warm = warmed_model(config, data, options);

  const std::size_t n = config.lambdas.size();
  SweepResult result;
  result.runs.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        train::TrainConfig tc = config.train;
        tc.lambda = config.lambdas[k];
        log::info("search lambda=" + fmt(tc.lambda));
        train::SearchResult r = train::run_search(warm, data, tc, lut_ptr);
        const std::string tag = "lambda_" + std::to_string(k);
        serial::Json a;
        a["lambda"] = tc.lambda;
        a["model"] = serial::to_json(config.model);
        a["precisions"] = serial::to_json(config.space);
        a["assignment"] = serial::to_json(r.assignment);
        io::write_atomic(out_dir / (tag + ".assignment.json"), a.dump(2) + "\n");
        io::write_atomic(out_dir / (tag + ".curve.csv"), curve_csv(r.curve));
        io::save_model(out_dir / (tag + ".ckpt"), r.model);
        result.runs[k] = std::move(r);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& r : result.runs) {
    result.records.push_back(make_record(r.lambda, r.test_score, config.model, r.assignment, lut_ptr));
  }
  std::ostringstream csv;
  write_results_csv(csv, result.records);
  io::write_atomic(out_dir / "results.csv", csv.str());
  return result;
}

}  // namespace chanmp::exp
