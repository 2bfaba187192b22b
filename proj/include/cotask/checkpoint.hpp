// Copyright 2026 The Cotask Authors. All Rights Reserved.
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

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cotask/data.hpp"
#include "cotask/model.hpp"
#include "cotask/training.hpp"

namespace cotask {

inline constexpr int kCheckpointFormatVersion = 1;

// Contents of a --config file: {"encoder": {...}, "train": {...},
// "model": {"proj_dim": ..., "share_form": ...}}. Every key is optional.
struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  int proj_dim = 256;
  ShareForm share_form = ShareForm::symmetric;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::ordered_json to_json(const EncoderConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const RunConfig& c);
nlohmann::ordered_json to_json(const LabelSchema& s);

// Fields absent from `j` keep the values already in `c`; unknown keys raise
// ConfigError.
void update_from_json(EncoderConfig& c, const nlohmann::json& j);
void update_from_json(TrainConfig& c, const nlohmann::json& j);
void update_from_json(RunConfig& c, const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);

// Everything needed to rebuild a trained model bit for bit.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  ModelConfig model_config;
  TrainConfig train_config;
  LabelSchema schema;
  Vocabulary vocabulary;
  ParameterList parameters;
  double selected_threshold = 0.5;
};

Checkpoint make_checkpoint(const MultiTaskModel& model, const TrainConfig& train_config,
                           const LabelSchema& schema, const Vocabulary& vocabulary,
                           double threshold);

// ConfigError when a parameter is missing, repeated, unexpected for the
// strategy, or has the wrong shape.
MultiTaskModel model_from_checkpoint(const Checkpoint& checkpoint);

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cotask
