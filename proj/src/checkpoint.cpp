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

#include "cotask/checkpoint.hpp"

#include <fstream>
#include <map>
#include <set>

#include "cotask/errors.hpp"

namespace cotask {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string("unknown ") + where + " field '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

ordered_json to_json(const EncoderConfig& c) {
  ordered_json j;
  j["num_layers"] = c.num_layers;
  j["hidden_dim"] = c.hidden_dim;
  j["num_heads"] = c.num_heads;
  j["ffn_dim"] = c.ffn_dim;
  j["max_len"] = c.max_len;
  j["vocab_size"] = c.vocab_size;
  j["tap_top_k"] = c.tap_top_k;
  return j;
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["dropout_p"] = c.dropout_p;
  j["loss_weight_primary"] = c.loss_weight_primary;
  j["loss_weight_aux"] = c.loss_weight_aux;
  j["seed"] = c.seed;
  j["threshold_grid"] = c.threshold_grid;
  j["split"] = {{"train", c.split.train}, {"dev", c.split.dev}, {"test", c.split.test}};
  return j;
}

ordered_json to_json(const ModelConfig& c) {
  ordered_json j;
  j["encoder"] = to_json(c.encoder);
  j["tasks"] = ordered_json::array();
  for (const auto& t : c.tasks) j["tasks"].push_back({{"name", t.name}, {"num_classes", t.num_classes}});
  j["proj_dim"] = c.proj_dim;
  j["strategy"] = std::string(to_string(c.strategy));
  j["share_form"] = std::string(to_string(c.share_form));
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["encoder"] = to_json(c.encoder);
  j["train"] = to_json(c.train);
  j["model"] = {{"proj_dim", c.proj_dim}, {"share_form", std::string(to_string(c.share_form))}};
  return j;
}

ordered_json to_json(const LabelSchema& s) {
  ordered_json j;
  j["primary"] = s.primary_names;
  j["aux"] = s.aux_names;
  return j;
}

void update_from_json(EncoderConfig& c, const json& j) {
  reject_unknown(j,
                 {"num_layers", "hidden_dim", "num_heads", "ffn_dim", "max_len", "vocab_size",
                  "tap_top_k"},
                 "encoder");
  read(j, "num_layers", c.num_layers);
  read(j, "hidden_dim", c.hidden_dim);
  read(j, "num_heads", c.num_heads);
  read(j, "ffn_dim", c.ffn_dim);
  read(j, "max_len", c.max_len);
  read(j, "vocab_size", c.vocab_size);
  read(j, "tap_top_k", c.tap_top_k);
}

void update_from_json(TrainConfig& c, const json& j) {
  reject_unknown(j,
                 {"epochs", "batch_size", "learning_rate", "dropout_p", "loss_weight_primary",
                  "loss_weight_aux", "seed", "threshold_grid", "split"},
                 "train");
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "dropout_p", c.dropout_p);
  read(j, "loss_weight_primary", c.loss_weight_primary);
  read(j, "loss_weight_aux", c.loss_weight_aux);
  read(j, "seed", c.seed);
  read(j, "threshold_grid", c.threshold_grid);
  if (const auto it = j.find("split"); it != j.end()) {
    reject_unknown(*it, {"train", "dev", "test"}, "split");
    read(*it, "train", c.split.train);
    read(*it, "dev", c.split.dev);
    read(*it, "test", c.split.test);
  }
}

void update_from_json(RunConfig& c, const json& j) {
  reject_unknown(j, {"encoder", "train", "model"}, "config");
  if (const auto it = j.find("encoder"); it != j.end()) update_from_json(c.encoder, *it);
  if (const auto it = j.find("train"); it != j.end()) update_from_json(c.train, *it);
  if (const auto it = j.find("model"); it != j.end()) {
    reject_unknown(*it, {"proj_dim", "share_form"}, "model");
    read(*it, "proj_dim", c.proj_dim);
    std::string form(to_string(c.share_form));
    read(*it, "share_form", form);
    c.share_form = parse_share_form(form);
  }
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"encoder", "tasks", "proj_dim", "strategy", "share_form"}, "model_config");
  ModelConfig c;
  if (const auto it = j.find("encoder"); it != j.end()) update_from_json(c.encoder, *it);
  if (const auto it = j.find("tasks"); it != j.end()) {
    for (const auto& t : *it) {
      TaskSpec spec;
      read(t, "name", spec.name);
      read(t, "num_classes", spec.num_classes);
      c.tasks.push_back(std::move(spec));
    }
  }
  read(j, "proj_dim", c.proj_dim);
  std::string strategy(to_string(c.strategy)), form(to_string(c.share_form));
  read(j, "strategy", strategy);
  read(j, "share_form", form);
  c.strategy = parse_strategy(strategy);
  c.share_form = parse_share_form(form);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  RunConfig c;
  update_from_json(c, j);
  return c;
}

// ---- checkpoint ---------------------------------------------------------------------

Checkpoint make_checkpoint(const MultiTaskModel& model, const TrainConfig& train_config,
                           const LabelSchema& schema, const Vocabulary& vocabulary,
                           double threshold) {
  Checkpoint c;
  c.model_config = model.config();
  c.train_config = train_config;
  c.schema = schema;
  c.vocabulary = vocabulary;
  for (const auto& p : model.parameters()) c.parameters.push_back({p.name, p.tensor.clone(p.tensor.requires_grad())});
  c.selected_threshold = threshold;
  return c;
}

MultiTaskModel model_from_checkpoint(const Checkpoint& checkpoint) {
  MultiTaskModel model = MultiTaskModel::create(checkpoint.model_config, 0);
  std::map<std::string, const NamedTensor*> saved;
  for (const auto& p : checkpoint.parameters) {
    if (!saved.emplace(p.name, &p).second) {
      throw ConfigError("checkpoint names parameter '" + p.name + "' twice");
    }
  }
  std::set<std::string> used;
  for (auto& p : model.parameters()) {
    const auto it = saved.find(p.name);
    if (it == saved.end()) throw ConfigError("checkpoint lacks parameter '" + p.name + "'");
    const Tensor& src = it->second->tensor;
    if (src.shape() != p.tensor.shape()) {
      throw ConfigError("checkpoint parameter '" + p.name + "' has shape " +
                        shape_to_string(src.shape()) + ", expected " +
                        shape_to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(src.values().begin(), src.values().end(), dst.begin());
    used.insert(p.name);
  }
  for (const auto& [name, _] : saved) {
    if (!used.count(name)) {
      throw ConfigError("checkpoint parameter '" + name + "' does not belong to a " +
                        std::string(to_string(checkpoint.model_config.strategy)) + " model");
    }
  }
  return model;
}

ordered_json checkpoint_to_json(const Checkpoint& c) {
  ordered_json j;
  j["format_version"] = c.format_version;
  j["model_config"] = to_json(c.model_config);
  j["train_config"] = to_json(c.train_config);
  j["schema"] = to_json(c.schema);
  j["vocabulary"] = c.vocabulary.tokens();
  j["parameters"] = ordered_json::array();
  for (const auto& p : c.parameters) {
    ordered_json e;
    e["name"] = p.name;
    e["shape"] = p.tensor.shape();
    e["trainable"] = p.tensor.requires_grad();
    e["values"] = std::vector<double>(p.tensor.values().begin(), p.tensor.values().end());
    j["parameters"].push_back(std::move(e));
  }
  j["selected_threshold"] = c.selected_threshold;
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    Checkpoint c;
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion) {
      throw ConfigError("unsupported checkpoint format_version " +
                        std::to_string(c.format_version));
    }
    c.model_config = model_config_from_json(j.at("model_config"));
    update_from_json(c.train_config, j.at("train_config"));
    c.schema.primary_names = j.at("schema").at("primary").get<std::vector<std::string>>();
    c.schema.aux_names = j.at("schema").at("aux").get<std::vector<std::string>>();
    c.schema.validate();
    c.vocabulary = Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
    for (const auto& e : j.at("parameters")) {
      auto shape = e.at("shape").get<Shape>();
      auto values = e.at("values").get<std::vector<double>>();
      c.parameters.push_back({e.at("name").get<std::string>(),
                              Tensor::from(std::move(shape), std::move(values),
                                           e.value("trainable", true))});
    }
    c.selected_threshold = j.at("selected_threshold").get<double>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << checkpoint_to_json(checkpoint).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace cotask
