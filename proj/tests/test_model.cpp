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

#include <set>
#include <string>
#include <vector>

#include "cotask/errors.hpp"
#include "cotask/model.hpp"
#include "properties.hpp"
#include "test_util.hpp"

namespace cotask {
namespace {

using testing::to_vector;

TEST(ModelForward, IdentitySharingReducesToSingleTask) {
  EXPECT_LE(properties::identity_sharing_reduction(20, 21), 1e-12);
}

TEST(ModelForward, HardSharingAuxHeadDoesNotTouchPrimary) {
  Rng rng(22);
  const auto model = MultiTaskModel::create(testing::tiny_model(SharingStrategy::hard_shared), 1);
  ASSERT_EQ(model.towers().size(), 1u);
  for (int trial = 0; trial < 10; ++trial) {
    auto perturbed = model.clone();
    auto& aux = perturbed.heads()[1];
    for (Tensor* t : {&aux.proj_weight, &aux.proj_bias, &aux.head_weight, &aux.head_bias}) {
      for (auto& v : t->mutable_values()) v += rng.uniform(-1, 1);
    }
    const auto ids = testing::random_ids(rng, 2 + rng.below(8), 16);
    const auto a = model.forward(ids);
    const auto b = perturbed.forward(ids);
    EXPECT_EQ(to_vector(a[0]), to_vector(b[0]));
    EXPECT_NE(to_vector(a[1]), to_vector(b[1]));
  }
}

TEST(ModelForward, SingleTaskTowersAreIndependent) {
  Rng rng(23);
  const auto model = MultiTaskModel::create(testing::tiny_model(SharingStrategy::single_task), 2);
  ASSERT_EQ(model.towers().size(), 2u);
  auto perturbed = model.clone();
  for (auto& v : perturbed.towers()[1].token_embedding.mutable_values()) v += 0.3;
  const auto ids = testing::random_ids(rng, 6, 16);
  EXPECT_EQ(to_vector(model.forward(ids)[0]), to_vector(perturbed.forward(ids)[0]));
  EXPECT_NE(to_vector(model.forward(ids)[1]), to_vector(perturbed.forward(ids)[1]));
}

TEST(ModelForward, CotaskAuxTowerReachesPrimary) {
  Rng rng(24);
  const auto model = MultiTaskModel::create(testing::tiny_model(SharingStrategy::co_task_aware), 3);
  auto perturbed = model.clone();
  for (auto& v : perturbed.towers()[1].token_embedding.mutable_values()) v += 0.3;
  const auto ids = testing::random_ids(rng, 6, 16);
  EXPECT_NE(to_vector(model.forward(ids)[0]), to_vector(perturbed.forward(ids)[0]));
}

TEST(ModelForward, ProbabilitiesInOpenUnitInterval) {
  Rng rng(25);
  for (const auto s : kAllStrategies) {
    const auto model = MultiTaskModel::create(testing::tiny_model(s), 4);
    testing::randomize(model, rng, -2.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
      const auto out = model.forward(testing::random_ids(rng, 1 + rng.below(10), 16));
      ASSERT_EQ(out.size(), 2u);
      EXPECT_EQ(out[0].shape(), (Shape{1, 3}));
      EXPECT_EQ(out[1].shape(), (Shape{1, 2}));
      for (const auto& t : out) {
        for (const double p : t.values()) {
          EXPECT_GT(p, 0.0);
          EXPECT_LT(p, 1.0);
        }
      }
    }
  }
}

TEST(ModelForward, BatchMatchesSingle) {
  Rng rng(26);
  for (const auto s : kAllStrategies) {
    const auto model = MultiTaskModel::create(testing::tiny_model(s), 5);
    std::vector<std::vector<int>> batch;
    for (int i = 0; i < 7; ++i) batch.push_back(testing::random_ids(rng, 1 + rng.below(10), 16));
    const auto packed = model.forward_batch(batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto single = model.forward(batch[b]);
      for (std::size_t t = 0; t < 2; ++t) {
        const std::size_t c = single[t].shape()[1];
        for (std::size_t k = 0; k < c; ++k) EXPECT_NEAR(packed[t][b * c + k], single[t][k], 1e-12);
      }
    }
  }
}

TEST(ModelForward, DropoutOnlyChangesTrainingPass) {
  Rng rng(27);
  const auto model = MultiTaskModel::create(testing::tiny_model(SharingStrategy::co_task_aware), 6);
  const auto ids = testing::random_ids(rng, 6, 16);
  Rng d1(1), d2(1);
  const auto eval = model.forward(ids, {}, false, 0.5, &d1);
  const auto plain = model.forward(ids);
  EXPECT_EQ(to_vector(eval[0]), to_vector(plain[0]));
  const auto train = model.forward(ids, {}, true, 0.5, &d2);
  EXPECT_NE(to_vector(train[0]), to_vector(plain[0]));
}

TEST(ModelCreate, DeterministicPerSeed) {
  const auto cfg = testing::tiny_model(SharingStrategy::co_task_aware);
  const auto a = MultiTaskModel::create(cfg, 7).parameters();
  const auto b = MultiTaskModel::create(cfg, 7).parameters();
  const auto c = MultiTaskModel::create(cfg, 8).parameters();
  ASSERT_EQ(a.size(), b.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(to_vector(a[i].tensor), to_vector(b[i].tensor));
    any_diff |= to_vector(a[i].tensor) != to_vector(c[i].tensor);
  }
  EXPECT_TRUE(any_diff);
}

TEST(ModelCreate, ParameterNamesAreUnique) {
  for (const auto s : kAllStrategies) {
    std::set<std::string> names;
    for (const auto& p : MultiTaskModel::create(testing::tiny_model(s), 1).parameters()) {
      EXPECT_TRUE(names.insert(p.name).second) << p.name;
    }
  }
}

TEST(ModelCreate, StrategyParameterLayout) {
  const auto stl = MultiTaskModel::create(testing::tiny_model(SharingStrategy::single_task), 1);
  EXPECT_EQ(stl.towers().size(), 2u);
  EXPECT_FALSE(stl.alpha().has_value());
  EXPECT_FALSE(stl.beta().has_value());

  const auto hard = MultiTaskModel::create(testing::tiny_model(SharingStrategy::hard_shared), 1);
  EXPECT_EQ(hard.towers().size(), 1u);
  EXPECT_FALSE(hard.alpha().has_value());

  const auto cs = MultiTaskModel::create(testing::tiny_model(SharingStrategy::cross_stitch), 1);
  ASSERT_TRUE(cs.alpha() && cs.beta());
  EXPECT_TRUE(cs.alpha()->requires_grad());
  EXPECT_FALSE(cs.beta()->requires_grad());
  for (const auto& p : cs.trainable_parameters()) EXPECT_NE(p.name, "beta");

  const auto co = MultiTaskModel::create(testing::tiny_model(SharingStrategy::co_task_aware), 1);
  ASSERT_TRUE(co.alpha() && co.beta());
  EXPECT_EQ(co.beta()->shape(), (Shape{2, 2, 2}));
  EXPECT_EQ(to_vector(*co.alpha()), (std::vector<double>{0.9, 0.1, 0.1, 0.9}));
  bool has_beta = false;
  for (const auto& p : co.trainable_parameters()) has_beta |= p.name == "beta";
  EXPECT_TRUE(has_beta);
}

TEST(ModelClone, IsDeep) {
  const auto model = MultiTaskModel::create(testing::tiny_model(SharingStrategy::co_task_aware), 1);
  auto copy = model.clone();
  const double before = model.heads()[0].head_bias[0];
  copy.heads()[0].head_bias.mutable_values()[0] += 1.0;
  EXPECT_EQ(model.heads()[0].head_bias[0], before);
  EXPECT_EQ(copy.beta()->requires_grad(), model.beta()->requires_grad());
}

TEST(ModelAssemble, MismatchesAreConfigErrors) {
  const auto co = MultiTaskModel::create(testing::tiny_model(SharingStrategy::co_task_aware), 1);
  const auto hard = MultiTaskModel::create(testing::tiny_model(SharingStrategy::hard_shared), 1);
  auto cfg = co.config();

  // factor matrices missing
  EXPECT_THROW(MultiTaskModel::assemble(cfg, co.towers(), co.heads(), std::nullopt, std::nullopt),
               ConfigError);
  // wrong tower count
  EXPECT_THROW(MultiTaskModel::assemble(cfg, hard.towers(), co.heads(), co.alpha(), co.beta()),
               ConfigError);
  // wrong alpha / beta shapes
  EXPECT_THROW(MultiTaskModel::assemble(cfg, co.towers(), co.heads(), Tensor::zeros({3, 3}), co.beta()),
               ConfigError);
  EXPECT_THROW(
      MultiTaskModel::assemble(cfg, co.towers(), co.heads(), co.alpha(), Tensor::zeros({3, 2, 2})),
      ConfigError);
  // one head missing
  EXPECT_THROW(MultiTaskModel::assemble(cfg, co.towers(), {co.heads()[0]}, co.alpha(), co.beta()),
               ConfigError);
  // factor matrices on a model that has none
  auto stl_cfg = cfg;
  stl_cfg.strategy = SharingStrategy::single_task;
  EXPECT_THROW(MultiTaskModel::assemble(stl_cfg, co.towers(), co.heads(), co.alpha(), co.beta()),
               ConfigError);
  // cross-stitch with a trainable beta
  auto cs_cfg = cfg;
  cs_cfg.strategy = SharingStrategy::cross_stitch;
  EXPECT_THROW(MultiTaskModel::assemble(cs_cfg, co.towers(), co.heads(), co.alpha(), co.beta()),
               ConfigError);
  // head geometry that does not fit the task
  auto heads = co.heads();
  std::swap(heads[0], heads[1]);
  EXPECT_THROW(MultiTaskModel::assemble(cfg, co.towers(), heads, co.alpha(), co.beta()), ConfigError);
}

TEST(ModelConfig, Validation) {
  auto cfg = testing::tiny_model(SharingStrategy::co_task_aware);
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.tasks.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.tasks[1].num_classes = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.proj_dim = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.tasks.resize(1);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.strategy = SharingStrategy::hard_shared;
  EXPECT_NO_THROW(bad.validate());
  bad = cfg;
  bad.tasks.push_back({"third", 2});
  bad.share_form = ShareForm::printed;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ModelForward, ThreeTaskCotask) {
  auto cfg = testing::tiny_model(SharingStrategy::co_task_aware);
  cfg.tasks.push_back({"third", 4});
  const auto model = MultiTaskModel::create(cfg, 9);
  EXPECT_EQ(model.alpha()->shape(), (Shape{3, 3}));
  EXPECT_EQ(model.beta()->shape(), (Shape{2, 3, 3}));
  Rng rng(28);
  const auto out = model.forward(testing::random_ids(rng, 5, 16));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[2].shape(), (Shape{1, 4}));
}

TEST(StrategyNames, RoundTrip) {
  for (const auto s : kAllStrategies) EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("bogus"), ConfigError);
  EXPECT_EQ(parse_share_form("printed"), ShareForm::printed);
  EXPECT_THROW(parse_share_form("bogus"), ConfigError);
}

}  // namespace
}  // namespace cotask
