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

#include <gtest/gtest.h>

#include <cmath>

#include "cotask/errors.hpp"
#include "test_util.hpp"

namespace cotask {
namespace {

using testing::random_ids;
using testing::random_tensor;
using testing::tiny_encoder;
using testing::to_vector;

ParameterList params_of(const EncoderTower& t) {
  ParameterList out;
  t.append_parameters("tower", out);
  return out;
}

TEST(EncoderInit, SameSeedGivesBitwiseEqualParameters) {
  const auto cfg = tiny_encoder();
  Rng a(5), b(5);
  const auto pa = params_of(encoder_init(cfg, a));
  const auto pb = params_of(encoder_init(cfg, b));
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(to_vector(pa[i].tensor), to_vector(pb[i].tensor)) << pa[i].name;
  }
}

TEST(EncoderInit, LayerNormStartsAtIdentity) {
  Rng rng(1);
  const auto tower = encoder_init(tiny_encoder(), rng);
  for (const auto& layer : tower.layers) {
    for (double g : layer.ln1_gain.values()) EXPECT_EQ(g, 1.0);
    for (double g : layer.ln2_gain.values()) EXPECT_EQ(g, 1.0);
    for (double b : layer.ln1_bias.values()) EXPECT_EQ(b, 0.0);
    for (double b : layer.ln2_bias.values()) EXPECT_EQ(b, 0.0);
  }
}

TEST(EncoderInit, SquareWeightsRespectUniformBound) {
  Rng rng(2);
  const auto tower = encoder_init(tiny_encoder(), rng);  // d = 8
  const double bound = std::sqrt(6.0 / 16.0);
  EXPECT_NEAR(bound, 0.612, 1e-3);
  for (const auto& layer : tower.layers) {
    for (const Tensor* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
      EXPECT_EQ(w->shape(), (Shape{8, 8}));
      for (double v : w->values()) EXPECT_LE(std::abs(v), bound);
    }
  }
}

TEST(EncoderInit, RejectsVocabularyWithoutRoomForReservedIds) {
  Rng rng(0);
  auto cfg = tiny_encoder(3);
  EXPECT_THROW(encoder_init(cfg, rng), ConfigError);
  cfg.vocab_size = 4;
  EXPECT_NO_THROW(encoder_init(cfg, rng));
}

TEST(EncoderConfig, ValidatesGeometry) {
  auto cfg = tiny_encoder();
  cfg.num_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_encoder();
  cfg.tap_top_k = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.tap_top_k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(tiny_encoder().validate());
}

TEST(EncoderConfig, DefaultsMatchDeskScale) {
  const EncoderConfig c;
  EXPECT_EQ(c.num_layers, 4);
  EXPECT_EQ(c.hidden_dim, 32);
  EXPECT_EQ(c.num_heads, 2);
  EXPECT_EQ(c.max_len, 48);
  EXPECT_EQ(c.tap_top_k, 3);
}

TEST(SelfAttention, SingleTokenReturnsProjectedValue) {
  Rng rng(3);
  const auto cfg = tiny_encoder();
  const auto tower = encoder_init(cfg, rng);
  const auto& layer = tower.layers[0];
  const Tensor x = random_tensor({1, 8}, rng);
  const std::size_t lengths[] = {1};
  const auto got = to_vector(self_attention(layer, cfg, x, lengths, {}));
  const auto want = to_vector(linear(linear(x, layer.wv, layer.bv), layer.wo, layer.bo));
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-15);
}

TEST(EncoderForward, PaddingNeverInfluencesStates) {
  Rng rng(4);
  auto cfg = tiny_encoder(20);
  cfg.max_len = 16;
  const auto tower = encoder_init(cfg, rng);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t len = 1 + rng.below(8);
    const auto ids = random_ids(rng, len, cfg.vocab_size);
    const auto base = encoder_forward(tower, cfg, ids);
    const std::size_t pad = 1 + rng.below(16 - len);
    auto padded = ids;
    std::vector<std::uint8_t> keep(len, 1);
    for (std::size_t i = 0; i < pad; ++i) {
      // padding slots may hold any id; the mask alone must silence them
      padded.push_back(static_cast<int>(rng.below(20)));
      keep.push_back(0);
    }
    const auto with_pad = encoder_forward(tower, cfg, padded, keep);
    ASSERT_EQ(base.states.size(), with_pad.states.size());
    for (std::size_t l = 0; l < base.states.size(); ++l) {
      const auto a = to_vector(base.states[l]);
      const auto b = to_vector(with_pad.states[l]);
      for (std::size_t j = 0; j < a.size(); ++j) ASSERT_NEAR(a[j], b[j], 1e-12);
    }
  }
}

TEST(EncoderForward, ShapeContract) {
  Rng rng(5);
  const auto cfg = tiny_encoder();
  const auto tower = encoder_init(cfg, rng);
  const auto out = encoder_forward(tower, cfg, random_ids(rng, 6, cfg.vocab_size));
  ASSERT_EQ(out.states.size(), 2u);
  for (const auto& s : out.states) EXPECT_EQ(s.shape(), (Shape{1, 8}));
}

TEST(EncoderForward, SingleLayerSingleTapMatchesManualBlock) {
  Rng rng(6);
  EncoderConfig cfg;
  cfg.num_layers = 1;
  cfg.hidden_dim = 4;
  cfg.num_heads = 2;
  cfg.ffn_dim = 8;
  cfg.max_len = 6;
  cfg.vocab_size = 10;
  cfg.tap_top_k = 1;
  const auto tower = encoder_init(cfg, rng);
  const std::vector<int> ids{Vocabulary::kSeqStart, 5, 7};
  const auto out = encoder_forward(tower, cfg, ids);
  ASSERT_EQ(out.states.size(), 1u);
  EXPECT_EQ(out.states[0].shape(), (Shape{1, 4}));

  const auto& L = tower.layers[0];
  Tensor x = add(gather_rows(tower.token_embedding, ids), slice(tower.position_embedding, 0, 0, 3));
  const std::size_t lengths[] = {3};
  x = add(x, self_attention(L, cfg, layer_norm(x, L.ln1_gain, L.ln1_bias), lengths, {}));
  x = add(x, linear(gelu(linear(layer_norm(x, L.ln2_gain, L.ln2_bias), L.w1, L.b1)), L.w2, L.b2));
  const auto want = to_vector(slice(x, 0, 0, 1));
  const auto got = to_vector(out.states[0]);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got[j], want[j], 1e-15);
}

TEST(EncoderForward, DeterministicAcrossCalls) {
  Rng rng(7);
  const auto cfg = tiny_encoder();
  const auto tower = encoder_init(cfg, rng);
  const auto ids = random_ids(rng, 7, cfg.vocab_size);
  const auto a = encoder_forward(tower, cfg, ids);
  const auto b = encoder_forward(tower, cfg, ids);
  for (std::size_t l = 0; l < a.states.size(); ++l) {
    EXPECT_EQ(to_vector(a.states[l]), to_vector(b.states[l]));
  }
}

TEST(EncoderForward, BatchMatchesSequenceBySequence) {
  Rng rng(8);
  const auto cfg = tiny_encoder();
  const auto tower = encoder_init(cfg, rng);
  std::vector<std::vector<int>> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(random_ids(rng, 1 + rng.below(10), cfg.vocab_size));
  const auto packed = encoder_forward_batch(tower, cfg, batch);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto single = encoder_forward(tower, cfg, batch[b]);
    for (std::size_t l = 0; l < single.states.size(); ++l) {
      EXPECT_EQ(packed.states[l].shape(), (Shape{batch.size(), 8}));
      for (std::size_t j = 0; j < 8; ++j) {
        ASSERT_NEAR(packed.states[l][b * 8 + j], single.states[l][j], 1e-12);
      }
    }
  }
}

TEST(EncoderForward, InputErrors) {
  Rng rng(9);
  const auto cfg = tiny_encoder();
  const auto tower = encoder_init(cfg, rng);
  EXPECT_THROW(encoder_forward(tower, cfg, std::vector<int>{}), InputError);
  EXPECT_THROW(encoder_forward(tower, cfg, std::vector<int>{Vocabulary::kSeqStart, 16}), VocabError);
  EXPECT_THROW(encoder_forward(tower, cfg, std::vector<int>{Vocabulary::kSeqStart, -1}), VocabError);
  EXPECT_THROW(encoder_forward(tower, cfg, std::vector<int>{5, 6}), InputError);
  EXPECT_THROW(encoder_forward(tower, cfg, std::vector<int>(11, Vocabulary::kSeqStart)), InputError);
  const std::vector<std::uint8_t> short_mask{1};
  EXPECT_THROW(encoder_forward(tower, cfg, std::vector<int>{Vocabulary::kSeqStart, 4}, short_mask),
               InputError);
}

TEST(EncoderForward, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  const auto cfg = tiny_encoder();
  const auto tower = encoder_init(cfg, rng);
  const auto ids = random_ids(rng, 6, cfg.vocab_size);
  std::vector<Tensor> weights;
  for (int l = 0; l < cfg.tap_top_k; ++l) weights.push_back(random_tensor({1, 8}, rng));
  auto objective = [&] {
    const auto out = encoder_forward(tower, cfg, ids);
    Tensor total;
    for (std::size_t l = 0; l < out.states.size(); ++l) {
      const Tensor t = sum(mul(out.states[l], weights[l]));
      total = total.defined() ? add(total, t) : t;
    }
    return total;
  };
  const auto params = params_of(tower);
  backward(objective());
  std::vector<Tensor> tensors;
  std::vector<std::vector<double>> analytic;
  for (auto p : params) {
    analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    if (analytic.back().empty()) analytic.back().assign(p.tensor.size(), 0.0);
    p.tensor.zero_grad();
    tensors.push_back(p.tensor);
  }
  const auto numeric = finite_difference_grad([&] { return objective().item(); }, tensors, 1e-5);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < analytic[i].size(); ++j) {
      const double a = analytic[i][j], n = numeric[i][j];
      const double mag = std::max(std::abs(a), std::abs(n));
      if (mag < 1e-6) {
        EXPECT_LE(std::abs(a - n), 1e-6) << params[i].name << "[" << j << "]";
      } else {
        EXPECT_LE(std::abs(a - n) / mag, 1e-4) << params[i].name << "[" << j << "]";
      }
    }
  }
}

}  // namespace
}  // namespace cotask
