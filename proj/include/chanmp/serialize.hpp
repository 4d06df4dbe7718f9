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

#include <json.hpp>

#include "chanmp/data.hpp"
#include "chanmp/gates.hpp"
#include "chanmp/layer.hpp"
#include "chanmp/model.hpp"
#include "chanmp/trainer.hpp"

// JSON forms of the domain types. Parsing is strict: unknown keys and
// wrongly typed values raise ConfigError.
namespace chanmp::serial {

using Json = nlohmann::ordered_json;

Json to_json(const LayerSpec& layer);
LayerSpec layer_from_json(const Json& j);

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j);

Json to_json(const nas::SearchSpace& space);
nas::SearchSpace search_space_from_json(const Json& j);

Json to_json(const nas::PrecisionAssignment& a);
nas::PrecisionAssignment assignment_from_json(const Json& j);

Json to_json(const train::TrainConfig& c);
// Missing keys keep the values of `defaults`.
train::TrainConfig train_config_from_json(const Json& j, const train::TrainConfig& defaults = {});

Json to_json(const data::DatasetSpec& d);
data::DatasetSpec dataset_spec_from_json(const Json& j);

}  // namespace chanmp::serial
