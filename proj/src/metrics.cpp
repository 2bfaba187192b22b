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

#include "cotask/metrics.hpp"

#include <string>

#include "cotask/errors.hpp"

namespace cotask {
namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::vector<std::uint8_t> to_mask(const LabelSet& labels, std::size_t num_classes) {
  std::vector<std::uint8_t> mask(num_classes, 0);
  for (const auto c : labels) {
    if (c >= num_classes) {
      throw SchemaError("label " + std::to_string(c) + " outside a schema of " +
                        std::to_string(num_classes) + " classes");
    }
    mask[c] = 1;
  }
  return mask;
}

}  // namespace

Metrics evaluate(std::span<const LabelSet> predictions, std::span<const LabelSet> gold,
                 std::size_t num_classes) {
  if (predictions.size() != gold.size()) {
    throw InputError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(gold.size()) + " gold label sets");
  }
  Metrics m;
  m.per_class.resize(num_classes);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto p = to_mask(predictions[i], num_classes);
    const auto g = to_mask(gold[i], num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto& cm = m.per_class[c];
      cm.tp += p[c] && g[c];
      cm.fp += p[c] && !g[c];
      cm.fn += !p[c] && g[c];
      cm.support += g[c];
    }
  }
  double tp = 0, fp = 0, fn = 0, support = 0;
  for (auto& cm : m.per_class) {
    cm.precision = ratio(cm.tp, cm.tp + cm.fp);
    cm.recall = ratio(cm.tp, cm.tp + cm.fn);
    cm.f1 = harmonic(cm.precision, cm.recall);
    const double w = static_cast<double>(cm.support);
    m.weighted.precision += w * cm.precision;
    m.weighted.recall += w * cm.recall;
    m.weighted.f1 += w * cm.f1;
    support += w;
    tp += cm.tp;
    fp += cm.fp;
    fn += cm.fn;
  }
  m.weighted.precision = ratio(m.weighted.precision, support);
  m.weighted.recall = ratio(m.weighted.recall, support);
  m.weighted.f1 = ratio(m.weighted.f1, support);
  m.micro.precision = ratio(tp, tp + fp);
  m.micro.recall = ratio(tp, tp + fn);
  m.micro.f1 = harmonic(m.micro.precision, m.micro.recall);
  return m;
}

LabelSet labels_from_multi_hot(std::span<const double> multi_hot) {
  LabelSet out;
  for (std::size_t c = 0; c < multi_hot.size(); ++c)
    if (multi_hot[c] > 0.5) out.push_back(c);
  return out;
}

}  // namespace cotask
