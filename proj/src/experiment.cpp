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

#include "cotask/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "cotask/errors.hpp"

namespace cotask {

PreparedData prepare_data(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed,
                          std::size_t max_len) {
  PreparedData out;
  out.splits = split(data, ratios, seed);
  const auto texts = texts_of(out.splits.train);
  out.vocabulary = Vocabulary::build(texts, 1);
  encode_dataset(out.splits.train, out.vocabulary, max_len);
  encode_dataset(out.splits.dev, out.vocabulary, max_len);
  encode_dataset(out.splits.test, out.vocabulary, max_len);
  out.train = multitask_examples(out.splits.train);
  out.dev = multitask_examples(out.splits.dev);
  out.test = multitask_examples(out.splits.test);
  return out;
}

ModelConfig make_model_config(const RunConfig& config, SharingStrategy strategy,
                              const LabelSchema& schema, std::size_t vocab_size) {
  ModelConfig m;
  m.encoder = config.encoder;
  m.encoder.vocab_size = static_cast<int>(vocab_size);
  m.tasks = {{"primary", schema.primary_names.size()}, {"aux", schema.aux_names.size()}};
  m.proj_dim = config.proj_dim;
  m.strategy = strategy;
  m.share_form = config.share_form;
  m.validate();
  return m;
}

TrainedRun train_run(const Dataset& data, SharingStrategy strategy, const RunConfig& config,
                     std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.train.validate();
  config.encoder.validate();
  PreparedData prepared = prepare_data(data, config.train.split, seed,
                                       static_cast<std::size_t>(config.encoder.max_len));
  if (prepared.train.empty()) throw InputError("training split is empty");
  const ModelConfig model_config = make_model_config(config, strategy, LabelSchema::standard(),
                                                     prepared.vocabulary.size());
  MultiTaskModel model = MultiTaskModel::create(model_config, seed);
  TrainConfig train_config = config.train;
  train_config.seed = seed;
  TrainResult result = train(model, prepared.train, prepared.dev, train_config, on_epoch);
  return {std::move(prepared), std::move(model), std::move(train_config), std::move(result)};
}

TaskEvaluation evaluate_model(const MultiTaskModel& model, const TaskDataset& data,
                              double threshold) {
  TaskEvaluation out;
  const auto& tasks = model.config().tasks;
  {
    const auto probs = predict_probs(model, data, 0);
    const auto preds = threshold_predictions(probs, threshold);
    const auto gold = gold_labels(data, 0);
    out.primary = evaluate(preds, gold, tasks[0].num_classes);
  }
  if (tasks.size() > 1) {
    const auto probs = predict_probs(model, data, 1);
    const auto preds = threshold_predictions(probs, kAuxThreshold);
    const auto gold = gold_labels(data, 1);
    out.aux = evaluate(preds, gold, tasks[1].num_classes);
  }
  return out;
}

ExperimentResult run_experiment(const Dataset& data, SharingStrategy strategy,
                                const RunConfig& config, std::uint64_t seed) {
  TrainedRun run = train_run(data, strategy, config, seed);
  const TaskEvaluation eval = evaluate_model(run.model, run.data.test, run.training.threshold);
  ExperimentResult r;
  r.strategy = strategy;
  r.seed = seed;
  r.threshold = run.training.threshold;
  r.primary_weighted_f1 = eval.primary.weighted.f1;
  r.aux_weighted_f1 = eval.aux.weighted.f1;
  return r;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile q must lie in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double median(std::span<const double> values) { return quantile(values, 0.5); }

double interquartile_range(std::span<const double> values) {
  return quantile(values, 0.75) - quantile(values, 0.25);
}

}  // namespace cotask
