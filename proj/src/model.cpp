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

#include "cotask/model.hpp"

#include "cotask/errors.hpp"

namespace cotask {

void ModelConfig::validate() const {
  encoder.validate();
  if (tasks.empty()) throw ConfigError("model needs at least one task");
  for (const auto& t : tasks)
    if (t.num_classes == 0) throw ConfigError("task '" + t.name + "' has no classes");
  if (proj_dim <= 0) throw ConfigError("proj_dim must be positive");
  if (strategy != SharingStrategy::single_task && strategy != SharingStrategy::hard_shared &&
      tasks.size() < 2) {
    throw ConfigError(std::string(to_string(strategy)) + " needs at least two tasks");
  }
  if (share_form == ShareForm::printed && uses_factor_matrices(strategy) && tasks.size() != 2) {
    throw ConfigError("the printed share form is defined for two tasks only");
  }
}

std::size_t expected_tower_count(SharingStrategy strategy, std::size_t tasks) {
  return strategy == SharingStrategy::hard_shared ? 1 : tasks;
}

bool uses_factor_matrices(SharingStrategy strategy) {
  return strategy == SharingStrategy::cross_stitch || strategy == SharingStrategy::co_task_aware;
}

MultiTaskModel MultiTaskModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t tasks = config.tasks.size();
  std::vector<EncoderTower> towers;
  for (std::size_t i = 0; i < expected_tower_count(config.strategy, tasks); ++i) {
    Rng tower_rng = rng.split(i);
    towers.push_back(encoder_init(config.encoder, tower_rng));
  }
  std::vector<TaskHead> heads;
  for (std::size_t t = 0; t < tasks; ++t) {
    Rng head_rng = rng.split(1000 + t);
    heads.push_back(task_head_init(static_cast<std::size_t>(config.encoder.hidden_dim),
                                   static_cast<std::size_t>(config.proj_dim),
                                   config.tasks[t].num_classes, head_rng));
  }
  std::optional<Tensor> alpha, beta;
  if (uses_factor_matrices(config.strategy)) {
    alpha = cotask_alpha_init(tasks);
    beta = cotask_beta_init(static_cast<std::size_t>(config.encoder.tap_top_k), tasks);
    if (config.strategy == SharingStrategy::cross_stitch) beta->set_requires_grad(false);
  }
  return assemble(config, std::move(towers), std::move(heads), std::move(alpha),
                  std::move(beta));
}

MultiTaskModel MultiTaskModel::assemble(ModelConfig config, std::vector<EncoderTower> towers,
                                        std::vector<TaskHead> heads, std::optional<Tensor> alpha,
                                        std::optional<Tensor> beta) {
  config.validate();
  MultiTaskModel m;
  m.config_ = std::move(config);
  m.towers_ = std::move(towers);
  m.heads_ = std::move(heads);
  m.alpha_ = std::move(alpha);
  m.beta_ = std::move(beta);
  m.check_consistency();
  return m;
}

void MultiTaskModel::check_consistency() const {
  const auto strategy = config_.strategy;
  const std::size_t tasks = config_.tasks.size();
  const auto name = std::string(to_string(strategy));
  if (towers_.size() != expected_tower_count(strategy, tasks)) {
    throw ConfigError(name + " expects " + std::to_string(expected_tower_count(strategy, tasks)) +
                      " encoder towers, got " + std::to_string(towers_.size()));
  }
  if (heads_.size() != tasks) throw ConfigError("one task head per task is required");
  const auto d = static_cast<std::size_t>(config_.encoder.hidden_dim);
  const auto p = static_cast<std::size_t>(config_.proj_dim);
  for (std::size_t t = 0; t < tasks; ++t) {
    const auto& h = heads_[t];
    const auto c = config_.tasks[t].num_classes;
    if (h.proj_weight.shape() != Shape{p, d} || h.proj_bias.shape() != Shape{p} ||
        h.head_weight.shape() != Shape{c, p} || h.head_bias.shape() != Shape{c}) {
      throw ConfigError("task head " + std::to_string(t) + " does not match the model geometry");
    }
  }
  const auto& enc = config_.encoder;
  for (const auto& tw : towers_) {
    if (tw.layers.size() != static_cast<std::size_t>(enc.num_layers) ||
        tw.token_embedding.shape() != Shape{static_cast<std::size_t>(enc.vocab_size), d} ||
        tw.position_embedding.shape() != Shape{static_cast<std::size_t>(enc.max_len), d}) {
      throw ConfigError("encoder tower does not match the encoder config");
    }
  }
  if (uses_factor_matrices(strategy)) {
    if (!alpha_ || !beta_) throw ConfigError(name + " requires alpha and beta");
    if (alpha_->shape() != Shape{tasks, tasks}) throw ConfigError("alpha shape mismatch");
    if (beta_->shape() != Shape{static_cast<std::size_t>(enc.tap_top_k), tasks, tasks}) {
      throw ConfigError("beta shape mismatch");
    }
    if (strategy == SharingStrategy::cross_stitch && beta_->requires_grad()) {
      throw ConfigError("cross_stitch keeps beta frozen");
    }
  } else if (alpha_ || beta_) {
    throw ConfigError(name + " has no factor matrices");
  }
}

std::vector<Tensor> MultiTaskModel::forward(std::span<const int> ids,
                                            std::span<const std::uint8_t> keep, bool train,
                                            double dropout_p, Rng* rng) const {
  std::vector<LayerStates> states;
  states.reserve(towers_.size());
  for (const auto& tower : towers_) states.push_back(encoder_forward(tower, config_.encoder, ids, keep));
  return heads_forward(states, train, dropout_p, rng);
}

std::vector<Tensor> MultiTaskModel::forward_batch(std::span<const std::vector<int>> sequences,
                                                  bool train, double dropout_p, Rng* rng) const {
  std::vector<LayerStates> states;
  states.reserve(towers_.size());
  for (const auto& tower : towers_) {
    states.push_back(encoder_forward_batch(tower, config_.encoder, sequences));
  }
  return heads_forward(states, train, dropout_p, rng);
}

std::vector<Tensor> MultiTaskModel::heads_forward(const std::vector<LayerStates>& states,
                                                  bool train, double dropout_p, Rng* rng) const {
  const std::size_t tasks = config_.tasks.size();
  std::vector<Tensor> probs;
  probs.reserve(tasks);
  if (!uses_factor_matrices(config_.strategy)) {
    for (std::size_t t = 0; t < tasks; ++t) {
      const auto& own = states[config_.strategy == SharingStrategy::hard_shared ? 0 : t].states;
      probs.push_back(classify(pool_task_features(own, heads_[t], dropout_p, rng, train), heads_[t]));
    }
    return probs;
  }

  const auto tapped = static_cast<std::size_t>(config_.encoder.tap_top_k);
  std::vector<std::vector<Tensor>> shared(tasks);
  std::vector<Tensor> layer_states(tasks);
  for (std::size_t l = 0; l < tapped; ++l) {
    for (std::size_t t = 0; t < tasks; ++t) layer_states[t] = states[t].states[l];
    auto mixed = cotask_share(layer_states, *alpha_, *beta_, l, config_.share_form);
    for (std::size_t t = 0; t < tasks; ++t) shared[t].push_back(std::move(mixed[t]));
  }
  for (std::size_t t = 0; t < tasks; ++t) {
    probs.push_back(
        classify(pool_task_features(shared[t], heads_[t], dropout_p, rng, train), heads_[t]));
  }
  return probs;
}

ParameterList MultiTaskModel::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < towers_.size(); ++i)
    towers_[i].append_parameters("tower" + std::to_string(i), out);
  for (std::size_t t = 0; t < heads_.size(); ++t) {
    const std::string p = "head" + std::to_string(t) + ".";
    out.push_back({p + "proj_weight", heads_[t].proj_weight});
    out.push_back({p + "proj_bias", heads_[t].proj_bias});
    out.push_back({p + "head_weight", heads_[t].head_weight});
    out.push_back({p + "head_bias", heads_[t].head_bias});
  }
  if (alpha_) out.push_back({"alpha", *alpha_});
  if (beta_) out.push_back({"beta", *beta_});
  return out;
}

ParameterList MultiTaskModel::trainable_parameters() const {
  ParameterList out;
  for (auto& p : parameters())
    if (p.tensor.requires_grad()) out.push_back(std::move(p));
  return out;
}

MultiTaskModel MultiTaskModel::clone() const {
  auto copy = [](const Tensor& t) { return t.clone(t.requires_grad()); };
  std::vector<EncoderTower> towers;
  for (const auto& tw : towers_) {
    EncoderTower c;
    c.token_embedding = copy(tw.token_embedding);
    c.position_embedding = copy(tw.position_embedding);
    for (const auto& L : tw.layers) {
      c.layers.push_back({copy(L.ln1_gain), copy(L.ln1_bias), copy(L.wq), copy(L.bq), copy(L.wk),
                          copy(L.bk), copy(L.wv), copy(L.bv), copy(L.wo), copy(L.bo),
                          copy(L.ln2_gain), copy(L.ln2_bias), copy(L.w1), copy(L.b1), copy(L.w2),
                          copy(L.b2)});
    }
    towers.push_back(std::move(c));
  }
  std::vector<TaskHead> heads;
  for (const auto& h : heads_) {
    heads.push_back({copy(h.proj_weight), copy(h.proj_bias), copy(h.head_weight), copy(h.head_bias)});
  }
  std::optional<Tensor> alpha, beta;
  if (alpha_) alpha = copy(*alpha_);
  if (beta_) beta = copy(*beta_);
  return assemble(config_, std::move(towers), std::move(heads), std::move(alpha), std::move(beta));
}

}  // namespace cotask
