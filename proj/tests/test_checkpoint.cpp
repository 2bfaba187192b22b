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

#include <gtest/gtest.h>

#include <fstream>
#include <string>
#include <vector>

#include "cotask/checkpoint.hpp"
#include "cotask/errors.hpp"
#include "cotask/synth.hpp"
#include "test_util.hpp"

namespace cotask {
namespace {

using testing::to_vector;

struct Fixture {
  Vocabulary vocab;
  MultiTaskModel model;
};

Fixture trained_fixture(SharingStrategy strategy) {
  const Dataset data = synth_generate(60, 4);
  Vocabulary vocab = Vocabulary::build(texts_of(data), 1);
  auto cfg = testing::tiny_model(strategy, 9, 3);
  cfg.encoder.vocab_size = static_cast<int>(vocab.size());
  auto model = MultiTaskModel::create(cfg, 11);
  Rng rng(12);
  testing::randomize(model, rng);
  return {std::move(vocab), std::move(model)};
}

std::vector<std::vector<int>> random_inputs(const Fixture& f, std::size_t count) {
  const std::vector<std::string> texts = texts_of(synth_generate(count, 99));
  std::vector<std::vector<int>> out;
  for (const auto& t : texts) out.push_back(f.vocab.encode(t, static_cast<std::size_t>(f.model.config().encoder.max_len)));
  return out;
}

TEST(CheckpointTest, RoundTripGivesBitwiseEqualPredictions) {
  for (const auto s : kAllStrategies) {
    const auto f = trained_fixture(s);
    testing::TempDir dir;
    const auto ckpt = make_checkpoint(f.model, TrainConfig{}, LabelSchema::standard(), f.vocab, 0.35);
    save_checkpoint(dir / "m.json", ckpt);
    const auto loaded = load_checkpoint(dir / "m.json");
    const auto reloaded = model_from_checkpoint(loaded);
    EXPECT_EQ(loaded.selected_threshold, 0.35);
    EXPECT_EQ(loaded.vocabulary, f.vocab);
    EXPECT_EQ(loaded.schema, LabelSchema::standard());
    EXPECT_EQ(loaded.model_config, f.model.config());
    EXPECT_EQ(loaded.train_config, TrainConfig{});
    for (const auto& ids : random_inputs(f, 20)) {
      const auto a = f.model.forward(ids);
      const auto b = reloaded.forward(ids);
      for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(to_vector(a[t]), to_vector(b[t])) << to_string(s);
    }
    const auto pa = f.model.parameters(), pb = reloaded.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      EXPECT_EQ(pa[i].name, pb[i].name);
      EXPECT_EQ(pa[i].tensor.requires_grad(), pb[i].tensor.requires_grad()) << pa[i].name;
    }
  }
}

TEST(CheckpointTest, SingleTaskHasNoFactorArrays) {
  const auto f = trained_fixture(SharingStrategy::single_task);
  const auto j = checkpoint_to_json(make_checkpoint(f.model, TrainConfig{}, LabelSchema::standard(), f.vocab, 0.5));
  for (const auto& p : j["parameters"]) {
    EXPECT_NE(p["name"], "alpha");
    EXPECT_NE(p["name"], "beta");
  }
  const auto co = trained_fixture(SharingStrategy::co_task_aware);
  const auto jc = checkpoint_to_json(make_checkpoint(co.model, TrainConfig{}, LabelSchema::standard(), co.vocab, 0.5));
  int factors = 0;
  for (const auto& p : jc["parameters"]) factors += p["name"] == "alpha" || p["name"] == "beta";
  EXPECT_EQ(factors, 2);
}

TEST(CheckpointTest, DefaultConfigSerializesPaperValues) {
  const auto j = to_json(RunConfig{});
  EXPECT_EQ(j["train"]["epochs"], 10);
  EXPECT_EQ(j["train"]["batch_size"], 32);
  EXPECT_EQ(j["train"]["learning_rate"].get<double>(), 0.0001);
  EXPECT_EQ(j["train"]["dropout_p"].get<double>(), 0.5);
  EXPECT_EQ(j["train"]["loss_weight_primary"].get<double>(), 0.7);
  EXPECT_EQ(j["train"]["loss_weight_aux"].get<double>(), 0.3);
  EXPECT_EQ(j["train"]["split"]["train"].get<double>(), 0.7);
  EXPECT_EQ(j["train"]["split"]["dev"].get<double>(), 0.1);
  EXPECT_EQ(j["train"]["split"]["test"].get<double>(), 0.2);
  EXPECT_EQ(j["model"]["proj_dim"], 256);
  EXPECT_EQ(j["encoder"]["tap_top_k"], 3);
  EXPECT_EQ(j["train"]["threshold_grid"].size(), 19u);
}

TEST(CheckpointTest, RunConfigJsonRoundTrip) {
  RunConfig c;
  c.encoder.hidden_dim = 16;
  c.train.epochs = 3;
  c.train.split = {0.8, 0.1, 0.1};
  c.proj_dim = 12;
  c.share_form = ShareForm::printed;
  RunConfig back;
  update_from_json(back, nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(back, c);
}

TEST(CheckpointTest, ConfigFileOverridesOnlyGivenFields) {
  testing::TempDir dir;
  std::ofstream(dir / "c.json") << R"({"train": {"epochs": 2}, "encoder": {"num_layers": 3}})";
  const auto c = load_run_config(dir / "c.json");
  EXPECT_EQ(c.train.epochs, 2);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.encoder.num_layers, 3);
  EXPECT_EQ(c.encoder.hidden_dim, 32);

  std::ofstream(dir / "bad.json") << R"({"train": {"epoch": 2}})";
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_THROW(load_run_config(dir / "broken.json"), ConfigError);
  std::ofstream(dir / "type.json") << R"({"train": {"epochs": "ten"}})";
  EXPECT_THROW(load_run_config(dir / "type.json"), ConfigError);
  EXPECT_THROW(load_run_config(dir / "missing.json"), IoError);
}

TEST(CheckpointTest, MismatchedParametersAreRejected) {
  const auto f = trained_fixture(SharingStrategy::co_task_aware);
  const auto base = make_checkpoint(f.model, TrainConfig{}, LabelSchema::standard(), f.vocab, 0.5);

  auto missing = base;
  missing.parameters.pop_back();
  EXPECT_THROW(model_from_checkpoint(missing), ConfigError);

  auto duplicate = base;
  duplicate.parameters.push_back(duplicate.parameters.front());
  EXPECT_THROW(model_from_checkpoint(duplicate), ConfigError);

  auto wrong_shape = base;
  wrong_shape.parameters[0].tensor = Tensor::zeros({2, 2});
  EXPECT_THROW(model_from_checkpoint(wrong_shape), ConfigError);

  auto stl = base;
  stl.model_config.strategy = SharingStrategy::single_task;
  EXPECT_THROW(model_from_checkpoint(stl), ConfigError);
}

TEST(CheckpointTest, FormatAndFileErrors) {
  const auto f = trained_fixture(SharingStrategy::hard_shared);
  auto j = nlohmann::json::parse(
      checkpoint_to_json(make_checkpoint(f.model, TrainConfig{}, LabelSchema::standard(), f.vocab, 0.5)).dump());
  EXPECT_NO_THROW(checkpoint_from_json(j));
  j["format_version"] = kCheckpointFormatVersion + 1;
  EXPECT_ANY_THROW(checkpoint_from_json(j));
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), IoError);
}

TEST(CheckpointTest, ParameterRecordsCarryShapeAndValues) {
  const auto f = trained_fixture(SharingStrategy::cross_stitch);
  const auto j = checkpoint_to_json(make_checkpoint(f.model, TrainConfig{}, LabelSchema::standard(), f.vocab, 0.5));
  const auto params = f.model.parameters();
  ASSERT_EQ(j["parameters"].size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& rec = j["parameters"][i];
    EXPECT_EQ(rec["name"], params[i].name);
    EXPECT_EQ(rec["shape"].get<Shape>(), params[i].tensor.shape());
    EXPECT_EQ(rec["values"].get<std::vector<double>>(), to_vector(params[i].tensor));
    EXPECT_EQ(rec["trainable"].get<bool>(), params[i].tensor.requires_grad());
  }
}

}  // namespace
}  // namespace cotask
