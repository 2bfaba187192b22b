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

#include "cotask/sharing.hpp"

#include <string>

#include "cotask/encoder.hpp"
#include "cotask/errors.hpp"

namespace cotask {

std::string_view to_string(SharingStrategy s) {
  switch (s) {
    case SharingStrategy::single_task:
      return "single_task";
    case SharingStrategy::hard_shared:
      return "hard_shared";
    case SharingStrategy::cross_stitch:
      return "cross_stitch";
    case SharingStrategy::co_task_aware:
      return "co_task_aware";
  }
  return "?";
}

SharingStrategy parse_strategy(std::string_view name) {
  if (name == "single_task" || name == "stl") return SharingStrategy::single_task;
  if (name == "hard_shared" || name == "hard") return SharingStrategy::hard_shared;
  if (name == "cross_stitch" || name == "cross-stitch") return SharingStrategy::cross_stitch;
  if (name == "co_task_aware" || name == "cotask") return SharingStrategy::co_task_aware;
  throw ConfigError("unknown sharing strategy '" + std::string(name) + "'");
}

std::string_view to_string(ShareForm f) {
  return f == ShareForm::symmetric ? "symmetric" : "printed";
}

ShareForm parse_share_form(std::string_view name) {
  if (name == "symmetric") return ShareForm::symmetric;
  if (name == "printed") return ShareForm::printed;
  throw ConfigError("unknown share form '" + std::string(name) + "'");
}

TaskHead task_head_init(std::size_t hidden_dim, std::size_t proj_dim, std::size_t classes,
                        Rng& rng) {
  TaskHead h;
  h.proj_weight = xavier_uniform(proj_dim, hidden_dim, rng);
  h.proj_bias = Tensor::zeros({proj_dim}, true);
  h.head_weight = xavier_uniform(classes, proj_dim, rng);
  h.head_bias = Tensor::zeros({classes}, true);
  return h;
}

Tensor cotask_alpha_init(std::size_t tasks) {
  std::vector<double> v(tasks * tasks, 0.1);
  for (std::size_t t = 0; t < tasks; ++t) v[t * tasks + t] = 0.9;
  return Tensor::from({tasks, tasks}, std::move(v), true);
}

Tensor cotask_beta_init(std::size_t tapped_layers, std::size_t tasks) {
  return Tensor::full({tapped_layers, tasks, tasks}, 1.0, true);
}

std::vector<Tensor> cotask_share(std::span<const Tensor> states, const Tensor& alpha,
                                 const Tensor& beta, std::size_t layer, ShareForm form) {
  const std::size_t tasks = states.size();
  if (tasks == 0) throw InputError("cotask_share: no task states");
  if (alpha.shape() != Shape{tasks, tasks}) {
    throw ShapeError("cotask_share: alpha has shape " + shape_to_string(alpha.shape()) +
                     ", expected " + shape_to_string({tasks, tasks}));
  }
  if (beta.rank() != 3 || beta.dim(1) != tasks || beta.dim(2) != tasks) {
    throw ShapeError("cotask_share: beta has shape " + shape_to_string(beta.shape()) +
                     ", expected [layers, " + std::to_string(tasks) + ", " +
                     std::to_string(tasks) + "]");
  }
  if (layer >= beta.dim(0)) {
    throw ShapeError("cotask_share: layer " + std::to_string(layer) + " outside beta of shape " +
                     shape_to_string(beta.shape()));
  }
  for (const auto& h : states) {
    if (h.shape() != states[0].shape()) {
      throw ShapeError("cotask_share: state shapes " + shape_to_string(states[0].shape()) +
                       " and " + shape_to_string(h.shape()) + " differ");
    }
  }
  if (form == ShareForm::printed && tasks != 2) {
    throw ConfigError("cotask_share: the printed form is defined for two tasks only");
  }

  std::vector<Tensor> shared;
  shared.reserve(tasks);
  for (std::size_t x = 0; x < tasks; ++x) {
    Tensor acc;
    for (std::size_t y = 0; y < tasks; ++y) {
      const Tensor factor = mul(element(alpha, x * tasks + y),
                                element(beta, (layer * tasks + x) * tasks + y));
      // printed wiring for the auxiliary row: its own factors meet the
      // primary features and its cross factors meet its own features
      std::size_t source = y;
      if (form == ShareForm::printed && x == 1) source = 1 - y;
      const Tensor term = mul(states[source], factor);
      acc = acc.defined() ? add(acc, term) : term;
    }
    shared.push_back(std::move(acc));
  }
  return shared;
}

std::pair<Tensor, Tensor> cotask_share(const Tensor& h_primary, const Tensor& h_aux,
                                       const Tensor& alpha, const Tensor& beta,
                                       std::size_t layer, ShareForm form) {
  const Tensor states[] = {h_primary, h_aux};
  auto out = cotask_share(states, alpha, beta, layer, form);
  return {out[0], out[1]};
}

Tensor pool_task_features(std::span<const Tensor> shared, const TaskHead& head,
                          double dropout_p, Rng* rng, bool train) {
  if (shared.empty()) throw InputError("pool_task_features: no layer features to pool");
  Tensor total;
  for (const auto& r : shared) {
    const Tensor row = r.rank() == 2 ? r : reshape(r, {1, r.size()});
    Tensor act = sigmoid(linear(row, head.proj_weight, head.proj_bias));
    if (rng != nullptr) act = dropout(act, dropout_p, *rng, train);
    total = total.defined() ? add(total, act) : act;
  }
  return shared.size() == 1 ? total : scale(total, 1.0 / static_cast<double>(shared.size()));
}

Tensor classify(const Tensor& pooled, const TaskHead& head) {
  const Tensor row = pooled.rank() == 2 ? pooled : reshape(pooled, {1, pooled.size()});
  return sigmoid(linear(row, head.head_weight, head.head_bias));
}

std::vector<std::size_t> predict_labels(std::span<const double> probs, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < probs.size(); ++c)
    if (probs[c] >= threshold) labels.push_back(c);
  return labels;
}

}  // namespace cotask
