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

#include "chanmp/serialize.hpp"

#include <set>

#include "chanmp/error.hpp"

namespace chanmp::serial {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.count(item.key())) throw ConfigError(what + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
T get(const Json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) throw ConfigError(what + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + ": bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
void get_opt(const Json& j, const char* key, T& out, const std::string& what) {
  if (j.contains(key)) out = get<T>(j, key, what);
}

std::size_t get_count(const Json& j, const char* key, const std::string& what) {
  const auto v = get<std::int64_t>(j, key, what);
  if (v < 0) throw ConfigError(what + ": '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

void get_count_opt(const Json& j, const char* key, std::size_t& out, const std::string& what) {
  if (j.contains(key)) out = get_count(j, key, what);
}

}  // namespace

Json to_json(const LayerSpec& l) {
  Json j;
  j["kind"] = to_string(l.kind);
  if (!l.name.empty()) j["name"] = l.name;
  if (!l.inputs.empty()) j["inputs"] = l.inputs;
  if (l.is_weight_layer()) {
    j["in"] = l.in_channels;
    j["out"] = l.out_channels;
    if (l.kind == LayerKind::Conv2d) {
      j["kernel_h"] = l.kernel_h;
      j["kernel_w"] = l.kernel_w;
      j["stride"] = l.stride;
      j["padding"] = l.padding;
    }
    j["bias"] = l.has_bias;
    j["searchable"] = l.searchable;
  }
  if (l.kind == LayerKind::AvgPool || l.kind == LayerKind::MaxPool) {
    j["window"] = l.window;
    j["stride"] = l.pool_stride;
  }
  return j;
}

LayerSpec layer_from_json(const Json& j) {
  const std::string what = "layer";
  check_keys(j, {"kind", "name", "inputs", "in", "out", "kernel", "kernel_h", "kernel_w", "stride", "padding",
                 "bias", "searchable", "window"},
             what);
  LayerSpec l;
  l.kind = parse_layer_kind(get<std::string>(j, "kind", what));
  get_opt(j, "name", l.name, what);
  get_opt(j, "inputs", l.inputs, what);
  if (l.is_weight_layer()) {
    l.in_channels = get_count(j, "in", what);
    l.out_channels = get_count(j, "out", what);
    if (l.kind == LayerKind::Conv2d) {
      if (j.contains("kernel")) l.kernel_h = l.kernel_w = get_count(j, "kernel", what);
      get_count_opt(j, "kernel_h", l.kernel_h, what);
      get_count_opt(j, "kernel_w", l.kernel_w, what);
      get_count_opt(j, "stride", l.stride, what);
      get_count_opt(j, "padding", l.padding, what);
    }
    get_opt(j, "bias", l.has_bias, what);
    get_opt(j, "searchable", l.searchable, what);
  }
  if (l.kind == LayerKind::AvgPool || l.kind == LayerKind::MaxPool) {
    get_count_opt(j, "window", l.window, what);
    get_count_opt(j, "stride", l.pool_stride, what);
  }
  return l;
}

Json to_json(const ModelSpec& spec) {
  Json j;
  j["input_shape"] = spec.input_shape;
  j["input_nonnegative"] = spec.input_nonnegative;
  Json layers = Json::array();
  for (const auto& l : spec.layers) layers.push_back(to_json(l));
  j["layers"] = layers;
  return j;
}

ModelSpec model_spec_from_json(const Json& j) {
  const std::string what = "model";
  check_keys(j, {"input_shape", "input_nonnegative", "layers"}, what);
  ModelSpec spec;
  spec.input_shape = get<Shape>(j, "input_shape", what);
  get_opt(j, "input_nonnegative", spec.input_nonnegative, what);
  const Json& layers = j.at("layers");
  if (!layers.is_array()) throw ConfigError("model: 'layers' must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerSpec l = layer_from_json(layers[i]);
    if (l.name.empty()) l.name = to_string(l.kind) + std::to_string(i);
    spec.layers.push_back(std::move(l));
  }
  infer_shapes(spec);
  return spec;
}

Json to_json(const nas::SearchSpace& s) {
  Json j;
  j["weights"] = s.weights.bits();
  j["activations"] = s.activations.bits();
  j["search_activations"] = s.search_activations;
  j["granularity"] = s.granularity == nas::Granularity::Channel ? "channel" : "layer";
  return j;
}

nas::SearchSpace search_space_from_json(const Json& j) {
  const std::string what = "precisions";
  check_keys(j, {"weights", "activations", "search_activations", "granularity"}, what);
  nas::SearchSpace s;
  if (j.contains("weights")) s.weights = nas::PrecisionSet(get<std::vector<int>>(j, "weights", what));
  if (j.contains("activations")) s.activations = nas::PrecisionSet(get<std::vector<int>>(j, "activations", what));
  get_opt(j, "search_activations", s.search_activations, what);
  if (j.contains("granularity")) {
    const auto g = get<std::string>(j, "granularity", what);
    if (g == "channel") {
      s.granularity = nas::Granularity::Channel;
    } else if (g == "layer") {
      s.granularity = nas::Granularity::Layer;
    } else {
      throw ConfigError("precisions: granularity must be 'channel' or 'layer'");
    }
  }
  return s;
}

Json to_json(const nas::PrecisionAssignment& a) {
  Json layers = Json::array();
  for (const auto& l : a.layers) {
    Json e;
    e["layer"] = l.layer;
    e["act_bits"] = l.act_bits;
    e["weight_bits"] = l.weight_bits;
    layers.push_back(e);
  }
  Json j;
  j["layers"] = layers;
  return j;
}

nas::PrecisionAssignment assignment_from_json(const Json& j) {
  const std::string what = "assignment";
  if (!j.is_object() || !j.contains("layers") || !j.at("layers").is_array()) {
    throw ConfigError(what + ": expected an object with a 'layers' array");
  }
  nas::PrecisionAssignment a;
  for (const Json& e : j.at("layers")) {
    check_keys(e, {"layer", "act_bits", "weight_bits", "name"}, what);
    nas::LayerAssignment l;
    l.layer = get_count(e, "layer", what);
    l.act_bits = get<int>(e, "act_bits", what);
    l.weight_bits = get<std::vector<int>>(e, "weight_bits", what);
    a.layers.push_back(std::move(l));
  }
  return a;
}

Json to_json(const train::TrainConfig& c) {
  Json j;
  j["epochs_wu"] = c.epochs_wu;
  j["epochs_ft"] = c.epochs_ft;
  j["max_search_epochs"] = c.max_search_epochs;
  j["task"] = train::to_string(c.task);
  j["batch_size"] = c.batch_size;
  j["lr_weights"] = c.lr_weights;
  j["momentum"] = c.momentum;
  j["lr_gates"] = c.lr_gates;
  j["lr_clip"] = c.lr_clip;
  j["clip_init"] = c.clip_init;
  j["seed"] = c.seed;
  j["patience"] = c.patience;
  j["gate_split"] = c.gate_split;
  j["tau0"] = c.tau0;
  j["anneal_rate"] = c.anneal_rate;
  return j;
}

train::TrainConfig train_config_from_json(const Json& j, const train::TrainConfig& defaults) {
  const std::string what = "train";
  check_keys(j, {"epochs_wu", "epochs_ft", "max_search_epochs", "task", "batch_size", "lr_weights", "momentum",
                 "lr_gates", "lr_clip", "clip_init", "seed", "patience", "gate_split", "tau0", "anneal_rate"},
             what);
  train::TrainConfig c = defaults;
  get_count_opt(j, "epochs_wu", c.epochs_wu, what);
  get_count_opt(j, "epochs_ft", c.epochs_ft, what);
  get_count_opt(j, "max_search_epochs", c.max_search_epochs, what);
  if (j.contains("task")) c.task = train::parse_task(get<std::string>(j, "task", what));
  get_count_opt(j, "batch_size", c.batch_size, what);
  get_opt(j, "lr_weights", c.lr_weights, what);
  get_opt(j, "momentum", c.momentum, what);
  get_opt(j, "lr_gates", c.lr_gates, what);
  get_opt(j, "lr_clip", c.lr_clip, what);
  get_opt(j, "clip_init", c.clip_init, what);
  get_opt(j, "seed", c.seed, what);
  get_count_opt(j, "patience", c.patience, what);
  get_opt(j, "gate_split", c.gate_split, what);
  get_opt(j, "tau0", c.tau0, what);
  get_opt(j, "anneal_rate", c.anneal_rate, what);
  c.validate();
  return c;
}

Json to_json(const data::DatasetSpec& d) {
  Json j;
  j["generator"] = d.generator;
  j["seed"] = d.seed;
  j["val_fraction"] = d.val_fraction;
  if (d.generator == "idx") {
    j["train_images"] = d.train_images;
    j["train_labels"] = d.train_labels;
    j["test_images"] = d.test_images;
    j["test_labels"] = d.test_labels;
  } else {
    j["n_train"] = d.n_train;
    j["n_test"] = d.n_test;
    j["turns"] = d.turns;
    j["noise"] = d.noise;
    j["separation"] = d.separation;
  }
  return j;
}

data::DatasetSpec dataset_spec_from_json(const Json& j) {
  const std::string what = "dataset";
  check_keys(j, {"generator", "seed", "val_fraction", "train_images", "train_labels", "test_images", "test_labels",
                 "n_train", "n_test", "turns", "noise", "separation"},
             what);
  data::DatasetSpec d;
  d.generator = get<std::string>(j, "generator", what);
  if (d.generator != "idx" && d.generator != "blobs" && d.generator != "spirals") {
    throw ConfigError("dataset: unknown generator '" + d.generator + "'");
  }
  get_opt(j, "seed", d.seed, what);
  get_opt(j, "val_fraction", d.val_fraction, what);
  get_opt(j, "train_images", d.train_images, what);
  get_opt(j, "train_labels", d.train_labels, what);
  get_opt(j, "test_images", d.test_images, what);
  get_opt(j, "test_labels", d.test_labels, what);
  get_count_opt(j, "n_train", d.n_train, what);
  get_count_opt(j, "n_test", d.n_test, what);
  get_opt(j, "turns", d.turns, what);
  get_opt(j, "noise", d.noise, what);
  get_opt(j, "separation", d.separation, what);
  if (d.generator == "idx" && (d.train_images.empty() || d.train_labels.empty())) {
    throw ConfigError("dataset: idx format needs train_images and train_labels");
  }
  return d;
}

}  // namespace chanmp::serial
