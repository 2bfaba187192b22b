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

#include "cotask/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "cotask/errors.hpp"

namespace cotask {

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(i / 20.0);
  return grid;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(dropout_p >= 0 && dropout_p < 1)) throw ConfigError("dropout_p must lie in [0, 1)");
  if (loss_weight_primary < 0 || loss_weight_aux < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (threshold_grid.empty()) throw ConfigError("threshold_grid is empty");
  for (double t : threshold_grid)
    if (!(t > 0 && t < 1)) throw ConfigError("threshold grid values must lie in (0, 1)");
  split.validate();
}

std::vector<double> TrainConfig::loss_weights(std::size_t tasks) const {
  if (tasks == 1) return {1.0};
  if (tasks == 2) return {loss_weight_primary, loss_weight_aux};
  throw ConfigError("loss weights are defined for one or two tasks");
}

namespace {
std::vector<double> to_double(const std::vector<std::uint8_t>& bits) {
  return {bits.begin(), bits.end()};
}
}  // namespace

TaskDataset multitask_examples(const Dataset& data) {
  TaskDataset out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    if (ex.tokens.empty()) throw InputError("example is not encoded: '" + ex.text + "'");
    out.push_back({ex.tokens, {to_double(ex.primary), to_double(ex.aux)}});
  }
  return out;
}

TaskDataset binary_examples(const Dataset& data) {
  TaskDataset out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    if (ex.tokens.empty()) throw InputError("example is not encoded: '" + ex.text + "'");
    const bool any = std::any_of(ex.primary.begin(), ex.primary.end(),
                                 [](std::uint8_t b) { return b != 0; });
    out.push_back({ex.tokens, {{any ? 1.0 : 0.0}}});
  }
  return out;
}

Tensor multitask_loss(std::span<const Tensor> probs, std::span<const std::vector<double>> gold,
                      std::span<const double> weights) {
  if (probs.size() != gold.size() || probs.size() != weights.size() || probs.empty()) {
    throw ShapeError("multitask_loss: " + std::to_string(probs.size()) + " task outputs, " +
                     std::to_string(gold.size()) + " targets, " + std::to_string(weights.size()) +
                     " weights");
  }
  Tensor total;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const Tensor term = scale(binary_cross_entropy(probs[t], gold[t]), weights[t]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

// ---- Adam -------------------------------------------------------------------------

Adam::Adam(ParameterList params, double learning_rate, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw StateError("adam: parameter '" + p.name + "' has no gradient");
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    const auto g = t.grad();
    auto w = t.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---- evaluation helpers -------------------------------------------------------------

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  if (r.dev_weighted_f1) {
    j["dev_weighted_f1"] = *r.dev_weighted_f1;
  } else {
    j["dev_weighted_f1"] = nullptr;
  }
  j["threshold"] = r.threshold;
  return j.dump();
}

namespace {

constexpr std::size_t kEvalChunk = 64;

// Ids of data[order[begin..end)] (identity order when `order` is empty).
std::vector<std::vector<int>> batch_ids(const TaskDataset& data, std::span<const std::size_t> order,
                                        std::size_t begin, std::size_t end) {
  std::vector<std::vector<int>> ids;
  ids.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) ids.push_back(data[order.empty() ? i : order[i]].ids);
  return ids;
}

std::vector<std::vector<double>> batch_gold(const TaskDataset& data,
                                            std::span<const std::size_t> order, std::size_t begin,
                                            std::size_t end, std::size_t tasks) {
  std::vector<std::vector<double>> gold(tasks);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& ex = data[order.empty() ? i : order[i]];
    for (std::size_t t = 0; t < tasks; ++t) {
      gold[t].insert(gold[t].end(), ex.targets[t].begin(), ex.targets[t].end());
    }
  }
  return gold;
}

}  // namespace

std::vector<std::vector<double>> predict_probs(const MultiTaskModel& model, const TaskDataset& data,
                                               std::size_t task) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  const std::size_t classes = model.config().tasks.at(task).num_classes;
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t end = std::min(data.size(), start + kEvalChunk);
    const auto probs = model.forward_batch(batch_ids(data, {}, start, end));
    const auto v = probs[task].values();
    for (std::size_t r = 0; r < end - start; ++r) {
      out.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(r * classes),
                       v.begin() + static_cast<std::ptrdiff_t>((r + 1) * classes));
    }
  }
  return out;
}

double dataset_loss(const MultiTaskModel& model, const TaskDataset& data,
                    std::span<const double> weights) {
  if (data.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0;
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t end = std::min(data.size(), start + kEvalChunk);
    const auto probs = model.forward_batch(batch_ids(data, {}, start, end));
    const auto gold = batch_gold(data, {}, start, end, model.num_tasks());
    total += multitask_loss(probs, gold, weights).item() * static_cast<double>(end - start);
  }
  return total / static_cast<double>(data.size());
}

std::vector<LabelSet> threshold_predictions(std::span<const std::vector<double>> probs,
                                            double threshold) {
  std::vector<LabelSet> out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.push_back(predict_labels(p, threshold));
  return out;
}

std::vector<LabelSet> gold_labels(const TaskDataset& data, std::size_t task) {
  std::vector<LabelSet> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(labels_from_multi_hot(ex.targets.at(task)));
  return out;
}

double select_threshold(std::span<const std::vector<double>> probs, std::span<const LabelSet> gold,
                        std::size_t num_classes, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("select_threshold: empty grid");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  double best = sorted[0];
  double best_f1 = -1.0;
  for (double t : sorted) {
    const auto preds = threshold_predictions(probs, t);
    const double f1 = evaluate(preds, gold, num_classes).weighted.f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = t;
    }
  }
  return best;
}

double select_threshold(const MultiTaskModel& model, const TaskDataset& dev,
                        std::span<const double> grid) {
  const auto probs = predict_probs(model, dev, 0);
  return select_threshold(probs, gold_labels(dev, 0), model.config().tasks[0].num_classes, grid);
}

// ---- training loop -----------------------------------------------------------------

TrainResult train(MultiTaskModel& model, const TaskDataset& train_set, const TaskDataset& dev_set,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw InputError("train: empty training set");
  const std::size_t tasks = model.num_tasks();
  for (const auto* set : {&train_set, &dev_set}) {
    for (const auto& ex : *set) {
      if (ex.targets.size() != tasks) {
        throw SchemaError("train: example carries " + std::to_string(ex.targets.size()) +
                          " target vectors for a " + std::to_string(tasks) + "-task model");
      }
      for (std::size_t t = 0; t < tasks; ++t) {
        if (ex.targets[t].size() != model.config().tasks[t].num_classes) {
          throw SchemaError("train: target width does not match task '" +
                            model.config().tasks[t].name + "'");
        }
      }
    }
  }
  const auto weights = config.loss_weights(tasks);
  Adam adam(model.trainable_parameters(), config.learning_rate);
  const Rng root(config.seed);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < static_cast<std::size_t>(config.epochs); ++epoch) {
    Rng shuffle_rng = root.split(2 * epoch + 1);
    Rng dropout_rng = root.split(2 * epoch + 2);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto probs = model.forward_batch(batch_ids(train_set, order, start, end), true,
                                             config.dropout_p, &dropout_rng);
      const auto gold = batch_gold(train_set, order, start, end, tasks);
      const Tensor loss = multitask_loss(probs, gold, weights);
      if (!std::isfinite(loss.item())) throw DivergedError(epoch, b);
      backward(loss);
      adam.step();
      adam.zero_grad();
      loss_sum += loss.item() * static_cast<double>(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.threshold = result.threshold;
    if (!dev_set.empty()) {
      const auto probs = predict_probs(model, dev_set, 0);
      const auto gold = gold_labels(dev_set, 0);
      const auto classes = model.config().tasks[0].num_classes;
      rec.threshold = select_threshold(probs, gold, classes, config.threshold_grid);
      rec.dev_weighted_f1 =
          evaluate(threshold_predictions(probs, rec.threshold), gold, classes).weighted.f1;
    }
    result.threshold = rec.threshold;
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_train_loss = dataset_loss(model, train_set, weights);
  if (!std::isfinite(result.final_train_loss)) {
    throw DivergedError(static_cast<std::size_t>(config.epochs), 0);
  }
  return result;
}

// ---- gradient check -------------------------------------------------------------------

GradCheckReport gradient_check(MultiTaskModel& model, const TaskDataset& batch,
                               std::span<const double> weights, const GradCheckOptions& options) {
  if (batch.empty()) throw InputError("gradient_check: empty batch");
  const std::size_t tasks = model.num_tasks();
  const auto ids = batch_ids(batch, {}, 0, batch.size());
  const auto gold = batch_gold(batch, {}, 0, batch.size(), tasks);
  auto loss_on_batch = [&] { return multitask_loss(model.forward_batch(ids), gold, weights); };

  const auto params = model.trainable_parameters();
  for (auto p : params) p.tensor.zero_grad();
  backward(loss_on_batch());
  std::vector<std::vector<double>> analytic;
  std::vector<Tensor> tensors;
  for (auto p : params) {
    const auto g = p.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.tensor.size(), 0.0);
    p.tensor.zero_grad();
    tensors.push_back(p.tensor);
  }
  const auto numeric = finite_difference_grad([&] { return loss_on_batch().item(); }, tensors,
                                              options.eps);

  GradCheckReport report;
  double worst = -1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    GradCheckGroup group;
    group.name = params[i].name;
    for (std::size_t j = 0; j < analytic[i].size(); ++j) {
      const double a = analytic[i][j];
      const double n = numeric[i][j];
      const double diff = std::abs(a - n);
      const double mag = std::max(std::abs(a), std::abs(n));
      double badness;  // > 1 means failure
      if (mag < options.abs_tol) {
        group.max_abs_err = std::max(group.max_abs_err, diff);
        badness = diff / options.abs_tol;
      } else {
        const double rel = diff / mag;
        group.max_rel_err = std::max(group.max_rel_err, rel);
        badness = rel / options.rel_tol;
      }
      if (badness > 1.0) group.passed = false;
      if (badness > worst) {
        worst = badness;
        report.offending = group.name;
        report.offending_index = j;
        group.worst_index = j;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, group.max_rel_err);
    report.max_abs_err = std::max(report.max_abs_err, group.max_abs_err);
    report.passed = report.passed && group.passed;
    report.groups.push_back(std::move(group));
  }
  return report;
}

// ---- transfer ------------------------------------------------------------------------------

double binary_accuracy(std::span<const std::vector<double>> probs, const TaskDataset& data,
                       double threshold) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool predicted = probs[i][0] >= threshold;
    const bool gold = data[i].targets[0][0] > 0.5;
    correct += predicted == gold;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TransferResult transfer_finetune(const MultiTaskModel& source, const EncoderConfig& expected,
                                 const TaskDataset& train_set, const TaskDataset& dev_set,
                                 const TaskDataset& test_set, const TrainConfig& config,
                                 const TransferOptions& options) {
  if (!(source.config().encoder == expected)) {
    throw ConfigError("transfer: checkpoint encoder geometry differs from the requested config");
  }
  ModelConfig target;
  target.encoder = expected;
  target.tasks = {{"depression", 1}};
  target.proj_dim = source.config().proj_dim;
  target.strategy = SharingStrategy::single_task;
  MultiTaskModel model = MultiTaskModel::create(target, config.seed);
  if (!options.from_scratch) {
    // the auxiliary-task tower; hard sharing has only one
    const std::size_t src = std::min<std::size_t>(1, source.towers().size() - 1);
    const MultiTaskModel copy = source.clone();
    model.towers()[0] = copy.towers()[src];
  }
  if (options.freeze_encoder) {
    ParameterList tower;
    model.towers()[0].append_parameters("tower0", tower);
    for (auto& p : tower) p.tensor.set_requires_grad(false);
  }
  TransferResult result{std::move(model), {}, 0.0};
  result.training = train(result.model, train_set, dev_set, config);
  const auto probs = predict_probs(result.model, test_set, 0);
  result.accuracy = binary_accuracy(probs, test_set, result.training.threshold);
  return result;
}

}  // namespace cotask
