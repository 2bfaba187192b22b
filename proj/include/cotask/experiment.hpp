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

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cotask/checkpoint.hpp"

namespace cotask {

// Threshold applied to the auxiliary task at evaluation time.
inline constexpr double kAuxThreshold = 0.5;

// One split of a corpus, its training vocabulary and the encoded task views.
struct PreparedData {
  Splits splits;
  Vocabulary vocabulary;
  TaskDataset train;
  TaskDataset dev;
  TaskDataset test;
};

// Splits with `seed`, builds the vocabulary from the training texts and
// encodes every partition.
PreparedData prepare_data(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed,
                          std::size_t max_len);

ModelConfig make_model_config(const RunConfig& config, SharingStrategy strategy,
                              const LabelSchema& schema, std::size_t vocab_size);

struct TrainedRun {
  PreparedData data;
  MultiTaskModel model;
  TrainConfig train_config;
  TrainResult training;
};

// Split, vocabulary, initialization and training all keyed by `seed`.
TrainedRun train_run(const Dataset& data, SharingStrategy strategy, const RunConfig& config,
                     std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch = {});

struct TaskEvaluation {
  Metrics primary;
  Metrics aux;
};

// Primary labels at `threshold`, auxiliary labels at kAuxThreshold.
TaskEvaluation evaluate_model(const MultiTaskModel& model, const TaskDataset& data,
                              double threshold);

struct ExperimentResult {
  SharingStrategy strategy = SharingStrategy::co_task_aware;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  double primary_weighted_f1 = 0;
  double aux_weighted_f1 = 0;
};

// train_run followed by test-set evaluation.
ExperimentResult run_experiment(const Dataset& data, SharingStrategy strategy,
                                const RunConfig& config, std::uint64_t seed);

// Linearly interpolated quantile of unsorted values; q in [0, 1].
double quantile(std::span<const double> values, double q);
double median(std::span<const double> values);
double interquartile_range(std::span<const double> values);

}  // namespace cotask
