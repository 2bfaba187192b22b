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

#include <cstddef>
#include <span>
#include <vector>

namespace cotask {

using LabelSet = std::vector<std::size_t>;

struct ClassMetrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t support = 0;  // gold occurrences
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct AggregateMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

struct Metrics {
  std::vector<ClassMetrics> per_class;
  AggregateMetrics weighted;  // gold-support weighted over classes
  AggregateMetrics micro;
};

// Ratios with a zero denominator are 0. Labels >= num_classes raise
// SchemaError.
Metrics evaluate(std::span<const LabelSet> predictions, std::span<const LabelSet> gold,
                 std::size_t num_classes);

LabelSet labels_from_multi_hot(std::span<const double> multi_hot);

}  // namespace cotask
