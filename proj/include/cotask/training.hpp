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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotask/data.hpp"
#include "cotask/metrics.hpp"
#include "cotask/model.hpp"

namespace cotask {

std::vector<double> default_threshold_grid();  // 0.05, 0.10, ..., 0.95

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-4;
  double dropout_p = 0.5;
  double loss_weight_primary = 0.7;
  double loss_weight_aux = 0.3;
  std::uint64_t seed = 0;
  std::vector<double> threshold_grid = default_threshold_grid();
  SplitRatios split;

  void validate() const;
  // {1} for a single task, {primary, aux} for two.
  std::vector<double> loss_weights(std::size_t tasks) const;
  bool operator==(const TrainConfig&) const = default;
};

// Token ids plus one multi-hot target vector per task.
struct TaskExample {
  std::vector<int> ids;
  std::vector<std::vector<double>> targets;
};
using TaskDataset = std::vector<TaskExample>;

// Requires encoded tokens (see encode_dataset).
TaskDataset multitask_examples(const Dataset& data);
// Single task, single class: any symptom present.
TaskDataset binary_examples(const Dataset& data);

/// sum_t w_t * BCE(probs_t, gold_t); `probs[t]` is [batch, classes] and
/// `gold[t]` its row-major 0/1 targets.
Tensor multitask_loss(std::span<const Tensor> probs, std::span<const std::vector<double>> gold,
                      std::span<const double> weights);

class Adam {
 public:
  explicit Adam(ParameterList params, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // Bias-corrected update of every parameter; StateError when one has no
  // gradient.
  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }
  const ParameterList& parameters() const { return params_; }

 private:
  ParameterList params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  std::optional<double> dev_weighted_f1;  // absent without a dev set
  double threshold = 0.5;
};

std::string to_json_line(const EpochRecord& record);

struct TrainResult {
  std::vector<EpochRecord> log;
  double threshold = 0.5;
  double final_train_loss = 0;  // inference-mode loss on the training set
};

/// Shuffled mini-batch Adam training with dropout on. After every epoch the
/// threshold is re-selected on `dev` for the primary task.
TrainResult train(MultiTaskModel& model, const TaskDataset& train_set, const TaskDataset& dev_set,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Inference-mode probabilities of one task, one row per example.
std::vector<std::vector<double>> predict_probs(const MultiTaskModel& model, const TaskDataset& data,
                                               std::size_t task);

// Inference-mode joint loss averaged over the dataset.
double dataset_loss(const MultiTaskModel& model, const TaskDataset& data,
                    std::span<const double> weights);

std::vector<LabelSet> threshold_predictions(std::span<const std::vector<double>> probs,
                                            double threshold);
std::vector<LabelSet> gold_labels(const TaskDataset& data, std::size_t task);

// Grid value with the best weighted F1; ties go to the smaller threshold.
double select_threshold(std::span<const std::vector<double>> probs, std::span<const LabelSet> gold,
                        std::size_t num_classes, std::span<const double> grid);
double select_threshold(const MultiTaskModel& model, const TaskDataset& dev,
                        std::span<const double> grid);

struct GradCheckOptions {
  double eps = 1e-5;
  double rel_tol = 1e-4;
  double abs_tol = 1e-6;  // used where both gradients are below abs_tol
};

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0;
  double max_abs_err = 0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_err = 0;
  double max_abs_err = 0;
  std::string offending;  // group holding the worst coordinate
  std::size_t offending_index = 0;
  std::vector<GradCheckGroup> groups;
};

/// Compares backprop gradients of the joint loss on `batch` against central
/// differences for every trainable parameter (frozen ones are skipped).
/// Dropout is off. Parameters are perturbed in place and restored.
GradCheckReport gradient_check(MultiTaskModel& model, const TaskDataset& batch,
                               std::span<const double> weights,
                               const GradCheckOptions& options = {});

struct TransferOptions {
  bool freeze_encoder = false;
  bool from_scratch = false;  // baseline: fresh tower, same budget
};

struct TransferResult {
  MultiTaskModel model;
  TrainResult training;
  double accuracy = 0;
};

/// Builds a single-task binary model whose tower starts from the source
/// model's auxiliary-task tower, trains it, and reports test accuracy at the
/// dev-selected threshold.
TransferResult transfer_finetune(const MultiTaskModel& source, const EncoderConfig& expected,
                                 const TaskDataset& train_set, const TaskDataset& dev_set,
                                 const TaskDataset& test_set, const TrainConfig& config,
                                 const TransferOptions& options = {});

double binary_accuracy(std::span<const std::vector<double>> probs, const TaskDataset& data,
                       double threshold);

}  // namespace cotask
