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
#include <span>
#include <string>
#include <vector>

#include "cotask/rng.hpp"
#include "cotask/tensor.hpp"

namespace cotask {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

struct EncoderConfig {
  int num_layers = 4;
  int hidden_dim = 32;
  int num_heads = 2;
  int ffn_dim = 64;
  int max_len = 48;
  int vocab_size = 0;  // set from the vocabulary before init
  int tap_top_k = 3;

  // Geometry only; vocab_size is checked by encoder_init.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Pre-norm transformer block. Weights are [out, in].
struct EncoderLayer {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

struct EncoderTower {
  Tensor token_embedding;     // [vocab, d]
  Tensor position_embedding;  // [max_len, d]
  std::vector<EncoderLayer> layers;

  void append_parameters(const std::string& prefix, ParameterList& out) const;
};

// First-token state of each tapped layer, bottom to top, each [sequences, d].
struct LayerStates {
  std::vector<Tensor> states;
};

EncoderTower encoder_init(const EncoderConfig& config, Rng& rng);

// ids[0] must be the sequence-start token; keep[i] == 0 marks padding. An
// empty `keep` means no padding.
LayerStates encoder_forward(const EncoderTower& tower, const EncoderConfig& config,
                            std::span<const int> ids, std::span<const std::uint8_t> keep = {});

// Several sequences packed row-wise in one pass; results match running
// encoder_forward on each sequence alone.
LayerStates encoder_forward_batch(const EncoderTower& tower, const EncoderConfig& config,
                                  std::span<const std::vector<int>> sequences);

// Multi-head self-attention of one block on row-packed x [N, d] (already
// normalized); rows attend within their own sequence.
Tensor self_attention(const EncoderLayer& layer, const EncoderConfig& config, const Tensor& x,
                      std::span<const std::size_t> lengths, std::span<const std::uint8_t> keep);

// Uniform in +-sqrt(6 / (rows + cols)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace cotask
