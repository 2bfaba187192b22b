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
#include <utility>

namespace cotask {

/// Counter-based generator: draw i is a pure function of (key, i), so the
/// sequence is identical on every platform and streams can be split off
/// without consuming draws from the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Independent child stream; does not advance this generator.
  Rng split(std::uint64_t stream) const noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  Rng(std::uint64_t seed, std::uint64_t key) noexcept;

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cotask
