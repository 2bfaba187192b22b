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
#include <cstdint>

#include "cotask/data.hpp"

namespace cotask {

/// Knobs of the template corpus generator.
///
/// Every symptom has a domain vocabulary (words about sleep, food, ...) that
/// also shows up in upbeat non-depressive texts. Literal templates state the
/// symptom with dedicated keywords. Figurative templates only use domain words
/// wrapped in metaphor or sarcasm frames, so whether a domain mention encodes a
/// symptom depends on the figurative bit the auxiliary task labels.
struct SynthSpec {
  double figurative_fraction = 0.4;       // of depressive examples
  double non_depressive_fraction = 0.69;  // of all examples
  double multi_p = 0.15;                  // second symptom appended

  void validate() const;
};

Dataset synth_generate(std::size_t n, std::uint64_t seed, const SynthSpec& spec = {});

}  // namespace cotask
