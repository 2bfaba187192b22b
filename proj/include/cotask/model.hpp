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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotask/encoder.hpp"
#include "cotask/sharing.hpp"

namespace cotask {

struct TaskSpec {
  std::string name;
  std::size_t num_classes = 0;

  bool operator==(const TaskSpec&) const = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::vector<TaskSpec> tasks;  // task 0 is the primary task
  int proj_dim = 256;
  SharingStrategy strategy = SharingStrategy::co_task_aware;
  ShareForm share_form = ShareForm::symmetric;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Towers, heads and (for the soft-sharing strategies) the factor matrices
/// of one multi-task network.
class MultiTaskModel {
 public:
  // Random initialization; the same config and seed give bitwise-equal
  // parameters.
  static MultiTaskModel create(const ModelConfig& config, std::uint64_t seed);

  // Wires existing parameters together; ConfigError when they do not fit the
  // strategy (e.g. factor matrices on a single-task model).
  static MultiTaskModel assemble(ModelConfig config, std::vector<EncoderTower> towers,
                                 std::vector<TaskHead> heads, std::optional<Tensor> alpha,
                                 std::optional<Tensor> beta);

  /// Per-task probabilities, each [1, classes]. Dropout on the projected
  /// features is active only when `train` is set and `rng` is given.
  std::vector<Tensor> forward(std::span<const int> ids, std::span<const std::uint8_t> keep = {},
                              bool train = false, double dropout_p = 0.0,
                              Rng* rng = nullptr) const;

  // Row b of each [sequences, classes] result belongs to sequences[b].
  std::vector<Tensor> forward_batch(std::span<const std::vector<int>> sequences,
                                    bool train = false, double dropout_p = 0.0,
                                    Rng* rng = nullptr) const;

  // Every parameter in a fixed order; frozen ones have requires_grad off.
  ParameterList parameters() const;
  ParameterList trainable_parameters() const;

  // Deep copy with independent storage.
  MultiTaskModel clone() const;

  const ModelConfig& config() const { return config_; }
  std::size_t num_tasks() const { return config_.tasks.size(); }
  const std::vector<EncoderTower>& towers() const { return towers_; }
  std::vector<EncoderTower>& towers() { return towers_; }
  const std::vector<TaskHead>& heads() const { return heads_; }
  std::vector<TaskHead>& heads() { return heads_; }
  const std::optional<Tensor>& alpha() const { return alpha_; }
  const std::optional<Tensor>& beta() const { return beta_; }

 private:
  MultiTaskModel() = default;
  void check_consistency() const;
  std::vector<Tensor> heads_forward(const std::vector<LayerStates>& states, bool train,
                                    double dropout_p, Rng* rng) const;

  ModelConfig config_;
  std::vector<EncoderTower> towers_;
  std::vector<TaskHead> heads_;
  std::optional<Tensor> alpha_;
  std::optional<Tensor> beta_;
};

std::size_t expected_tower_count(SharingStrategy strategy, std::size_t tasks);
bool uses_factor_matrices(SharingStrategy strategy);

}  // namespace cotask
