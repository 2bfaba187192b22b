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

#include "cotask/encoder.hpp"

#include <cmath>

#include "cotask/data.hpp"
#include "cotask/errors.hpp"

namespace cotask {

void EncoderConfig::validate() const {
  if (num_layers <= 0 || hidden_dim <= 0 || num_heads <= 0 || ffn_dim <= 0 || max_len <= 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (hidden_dim % num_heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                      " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (tap_top_k < 1 || tap_top_k > num_layers) {
    throw ConfigError("tap_top_k must lie in [1, num_layers]");
  }
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from({rows, cols}, std::move(v), true);
}

EncoderTower encoder_init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  if (config.vocab_size < Vocabulary::kReserved + 1) {
    throw ConfigError("vocab_size must exceed the " + std::to_string(Vocabulary::kReserved) +
                      " reserved ids");
  }
  const auto d = static_cast<std::size_t>(config.hidden_dim);
  const auto f = static_cast<std::size_t>(config.ffn_dim);
  auto zeros = [](std::size_t n) { return Tensor::zeros({n}, true); };
  auto ones = [](std::size_t n) { return Tensor::full({n}, 1.0, true); };

  EncoderTower t;
  t.token_embedding = xavier_uniform(static_cast<std::size_t>(config.vocab_size), d, rng);
  t.position_embedding = xavier_uniform(static_cast<std::size_t>(config.max_len), d, rng);
  for (int l = 0; l < config.num_layers; ++l) {
    EncoderLayer layer;
    layer.ln1_gain = ones(d);
    layer.ln1_bias = zeros(d);
    layer.wq = xavier_uniform(d, d, rng);
    layer.bq = zeros(d);
    layer.wk = xavier_uniform(d, d, rng);
    layer.bk = zeros(d);
    layer.wv = xavier_uniform(d, d, rng);
    layer.bv = zeros(d);
    layer.wo = xavier_uniform(d, d, rng);
    layer.bo = zeros(d);
    layer.ln2_gain = ones(d);
    layer.ln2_bias = zeros(d);
    layer.w1 = xavier_uniform(f, d, rng);
    layer.b1 = zeros(f);
    layer.w2 = xavier_uniform(d, f, rng);
    layer.b2 = zeros(d);
    t.layers.push_back(std::move(layer));
  }
  return t;
}

void EncoderTower::append_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".token_embedding", token_embedding});
  out.push_back({prefix + ".position_embedding", position_embedding});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string p = prefix + ".layer" + std::to_string(l) + ".";
    out.push_back({p + "ln1_gain", L.ln1_gain});
    out.push_back({p + "ln1_bias", L.ln1_bias});
    out.push_back({p + "wq", L.wq});
    out.push_back({p + "bq", L.bq});
    out.push_back({p + "wk", L.wk});
    out.push_back({p + "bk", L.bk});
    out.push_back({p + "wv", L.wv});
    out.push_back({p + "bv", L.bv});
    out.push_back({p + "wo", L.wo});
    out.push_back({p + "bo", L.bo});
    out.push_back({p + "ln2_gain", L.ln2_gain});
    out.push_back({p + "ln2_bias", L.ln2_bias});
    out.push_back({p + "w1", L.w1});
    out.push_back({p + "b1", L.b1});
    out.push_back({p + "w2", L.w2});
    out.push_back({p + "b2", L.b2});
  }
}

Tensor self_attention(const EncoderLayer& layer, const EncoderConfig& config, const Tensor& x,
                      std::span<const std::size_t> lengths, std::span<const std::uint8_t> keep) {
  const Tensor q = linear(x, layer.wq, layer.bq);
  const Tensor k = linear(x, layer.wk, layer.bk);
  const Tensor v = linear(x, layer.wv, layer.bv);
  const Tensor mixed =
      segment_attention(q, k, v, lengths, static_cast<std::size_t>(config.num_heads), keep);
  return linear(mixed, layer.wo, layer.bo);
}

namespace {

void check_sequence(const EncoderConfig& config, std::span<const int> ids,
                    std::span<const std::uint8_t> keep) {
  if (ids.empty()) throw InputError("encoder: empty token sequence");
  if (ids.size() > static_cast<std::size_t>(config.max_len)) {
    throw InputError("encoder: sequence of " + std::to_string(ids.size()) +
                     " tokens exceeds max_len " + std::to_string(config.max_len));
  }
  if (!keep.empty() && keep.size() != ids.size()) {
    throw InputError("encoder: mask length does not match the token sequence");
  }
  if (ids[0] != Vocabulary::kSeqStart || (!keep.empty() && keep[0] == 0)) {
    throw InputError("encoder: position 0 must hold the sequence-start token");
  }
  for (const int id : ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw VocabError("encoder: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(config.vocab_size));
    }
  }
}

// ids and keep are row-packed; lengths gives each sequence's row count.
LayerStates forward_packed(const EncoderTower& tower, const EncoderConfig& config,
                           std::span<const int> ids, std::span<const std::size_t> lengths,
                           std::span<const std::uint8_t> keep) {
  std::vector<int> positions, firsts;
  positions.reserve(ids.size());
  for (const std::size_t n : lengths) {
    firsts.push_back(static_cast<int>(positions.size()));
    for (std::size_t i = 0; i < n; ++i) positions.push_back(static_cast<int>(i));
  }
  Tensor x = add(gather_rows(tower.token_embedding, ids),
                 gather_rows(tower.position_embedding, positions));
  const std::size_t first_tapped = tower.layers.size() - static_cast<std::size_t>(config.tap_top_k);
  LayerStates out;
  for (std::size_t l = 0; l < tower.layers.size(); ++l) {
    const auto& layer = tower.layers[l];
    x = add(x, self_attention(layer, config, layer_norm(x, layer.ln1_gain, layer.ln1_bias),
                              lengths, keep));
    const Tensor hidden = gelu(linear(layer_norm(x, layer.ln2_gain, layer.ln2_bias), layer.w1, layer.b1));
    x = add(x, linear(hidden, layer.w2, layer.b2));
    if (l >= first_tapped) {
      out.states.push_back(lengths.size() == 1 ? slice(x, 0, 0, 1) : gather_rows(x, firsts));
    }
  }
  return out;
}

}  // namespace

LayerStates encoder_forward(const EncoderTower& tower, const EncoderConfig& config,
                            std::span<const int> ids, std::span<const std::uint8_t> keep) {
  check_sequence(config, ids, keep);
  const std::size_t lengths[] = {ids.size()};
  return forward_packed(tower, config, ids, lengths, keep);
}

LayerStates encoder_forward_batch(const EncoderTower& tower, const EncoderConfig& config,
                                  std::span<const std::vector<int>> sequences) {
  if (sequences.empty()) throw InputError("encoder: empty batch");
  std::vector<int> ids;
  std::vector<std::size_t> lengths;
  for (const auto& seq : sequences) {
    check_sequence(config, seq, {});
    ids.insert(ids.end(), seq.begin(), seq.end());
    lengths.push_back(seq.size());
  }
  return forward_packed(tower, config, ids, lengths, {});
}

}  // namespace cotask
