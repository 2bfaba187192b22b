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

#include <vector>

#include "cotask/errors.hpp"
#include "cotask/metrics.hpp"
#include "properties.hpp"

namespace cotask {
namespace {

TEST(Evaluate, WorkedExample) {
  const std::vector<LabelSet> gold{{0}, {1}};
  const std::vector<LabelSet> pred{{0}, {0}};
  const Metrics m = evaluate(pred, gold, 2);
  EXPECT_EQ(m.per_class[0].tp, 1u);
  EXPECT_EQ(m.per_class[0].fp, 1u);
  EXPECT_EQ(m.per_class[0].fn, 0u);
  EXPECT_DOUBLE_EQ(m.per_class[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(m.per_class[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(m.per_class[0].f1, 2.0 / 3.0);
  EXPECT_EQ(m.per_class[1].precision, 0.0);
  EXPECT_EQ(m.per_class[1].recall, 0.0);
  EXPECT_EQ(m.per_class[1].f1, 0.0);
  EXPECT_DOUBLE_EQ(m.weighted.f1, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.micro.f1, 0.5);
}

TEST(Evaluate, PerfectPredictions) {
  const std::vector<LabelSet> gold{{0, 2}, {1}, {}, {2}};
  const Metrics m = evaluate(gold, gold, 3);
  for (const auto& a : {m.weighted, m.micro}) {
    EXPECT_EQ(a.precision, 1.0);
    EXPECT_EQ(a.recall, 1.0);
    EXPECT_EQ(a.f1, 1.0);
  }
}

TEST(Evaluate, EmptyPredictions) {
  const std::vector<LabelSet> gold{{0}, {1}, {0, 1}};
  const std::vector<LabelSet> pred(3);
  const Metrics m = evaluate(pred, gold, 2);
  EXPECT_EQ(m.weighted.recall, 0.0);
  EXPECT_EQ(m.weighted.f1, 0.0);
  EXPECT_EQ(m.micro.recall, 0.0);
  EXPECT_EQ(m.micro.f1, 0.0);
}

TEST(Evaluate, NoGoldSupportGivesZeroWeighted) {
  const std::vector<LabelSet> gold(2);
  const std::vector<LabelSet> pred{{0}, {}};
  const Metrics m = evaluate(pred, gold, 2);
  EXPECT_EQ(m.weighted.f1, 0.0);
  EXPECT_EQ(m.micro.precision, 0.0);
}

TEST(Evaluate, MatchesBruteForceOnExhaustiveSpace) {
  EXPECT_EQ(properties::exhaustive_metrics_disagreements(), 0u);
}

TEST(Evaluate, LabelOutsideSchemaIsSchemaError) {
  const std::vector<LabelSet> gold{{0}};
  const std::vector<LabelSet> pred{{2}};
  EXPECT_THROW(evaluate(pred, gold, 2), SchemaError);
  EXPECT_THROW(evaluate(gold, pred, 2), SchemaError);
}

TEST(Evaluate, LengthMismatchIsInputError) {
  const std::vector<LabelSet> gold{{0}, {1}};
  const std::vector<LabelSet> pred{{0}};
  EXPECT_THROW(evaluate(pred, gold, 2), InputError);
}

TEST(LabelsFromMultiHot, PicksPositiveEntries) {
  const std::vector<double> y{1, 0, 1, 0};
  EXPECT_EQ(labels_from_multi_hot(y), (LabelSet{0, 2}));
  EXPECT_TRUE(labels_from_multi_hot(std::vector<double>(3, 0.0)).empty());
}

}  // namespace
}  // namespace cotask
