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
#include <string_view>
#include <utility>
#include <vector>

#include "cotask/rng.hpp"
#include "cotask/tensor.hpp"

namespace cotask {

enum class SharingStrategy {
  single_task,    // one tower per task, no feature exchange
  hard_shared,    // one tower, task-specific heads
  cross_stitch,   // co-task factors only; layer factors frozen at one
  co_task_aware,  // learnable co-task and layer factor matrices
};

std::string_view to_string(SharingStrategy s);
// Accepts the canonical names and the short CLI names (stl, hard,
// cross-stitch, cotask).
SharingStrategy parse_strategy(std::string_view name);
inline constexpr SharingStrategy kAllStrategies[] = {
    SharingStrategy::single_task, SharingStrategy::hard_shared, SharingStrategy::cross_stitch,
    SharingStrategy::co_task_aware};

// How the self term of the auxiliary task is wired for T = 2. `symmetric`
// scales each task's own features by its diagonal factor. `printed` pairs the
// auxiliary diagonal factors with the primary task's features and vice versa.
enum class ShareForm { symmetric, printed };

std::string_view to_string(ShareForm f);
ShareForm parse_share_form(std::string_view name);

// Per-task projection (shared by all tapped layers) and sigmoid classifier.
struct TaskHead {
  Tensor proj_weight;  // [proj_dim, d]
  Tensor proj_bias;    // [proj_dim]
  Tensor head_weight;  // [classes, proj_dim]
  Tensor head_bias;    // [classes]
};

TaskHead task_head_init(std::size_t hidden_dim, std::size_t proj_dim, std::size_t classes, Rng& rng);

// Diagonal 0.9, off-diagonal 0.1.
Tensor cotask_alpha_init(std::size_t tasks);
// All ones, shape [tapped_layers, tasks, tasks].
Tensor cotask_beta_init(std::size_t tapped_layers, std::size_t tasks);

/// Mixes the same-layer states of all tasks:
///   r_x = sum_y alpha[x][y] * beta[layer][x][y] * h_y.
/// `states` holds one tensor per task, all of the same shape.
std::vector<Tensor> cotask_share(std::span<const Tensor> states, const Tensor& alpha,
                                 const Tensor& beta, std::size_t layer,
                                 ShareForm form = ShareForm::symmetric);

std::pair<Tensor, Tensor> cotask_share(const Tensor& h_primary, const Tensor& h_aux,
                                       const Tensor& alpha, const Tensor& beta,
                                       std::size_t layer,
                                       ShareForm form = ShareForm::symmetric);

/// z = mean_l sigmoid(W r_l + b). Dropout with probability `dropout_p` is
/// applied to each projected layer when `rng` is given and `train` is set.
Tensor pool_task_features(std::span<const Tensor> shared, const TaskHead& head,
                          double dropout_p = 0.0, Rng* rng = nullptr, bool train = false);

// Independent per-class probabilities sigmoid(W z + b), shape [1, classes].
Tensor classify(const Tensor& pooled, const TaskHead& head);

// Classes whose probability reaches the threshold.
std::vector<std::size_t> predict_labels(std::span<const double> probs, double threshold);

}  // namespace cotask
