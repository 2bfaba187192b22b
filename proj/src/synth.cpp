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

#include "cotask/synth.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "cotask/errors.hpp"
#include "cotask/rng.hpp"

namespace cotask {
namespace {

struct FigurativeTemplate {
  std::string_view text;
  bool metaphor;
  bool sarcasm;
};

struct SymptomTemplates {
  std::array<std::string_view, 4> domain;
  std::vector<std::string_view> literal;
  std::vector<FigurativeTemplate> figurative;
};

// "{d}" expands to one of the symptom's domain words.
const std::array<SymptomTemplates, 9>& symptom_templates() {
  static const std::array<SymptomTemplates, 9> table = {{
      {{"games", "music", "hobbies", "plans"},
       {"bored of everything lately", "dont care about my {d} anymore",
        "lost all interest in {d}", "nothing feels fun , not even {d}"},
       {{"my {d} are just grey noise now", true, false},
        {"{d} turned to dust in my hands", true, false},
        {"oh wow {d} sound so thrilling , yay", false, true},
        {"sure , {d} are totally the highlight of my life lol", false, true}}},
      {{"room", "weekend", "heart", "days"},
       {"feeling so depressed and alone", "i feel hopeless in my {d}",
        "cant stop crying all {d}", "so sad and empty inside"},
       {{"a dark cloud lives in my {d}", true, false},
        {"drowning in grey {d} with no shore", true, false},
        {"oh great another wonderful {d} alone , yay", false, true},
        {"wow best {d} ever , just me and the walls lol", true, true}}},
      {{"night", "bed", "pillow", "sheets"},
       {"cant sleep again", "insomnia is back every {d}", "wide awake at 4am again",
        "nightmares ruin every {d}"},
       {{"my {d} is a battlefield", true, false},
        {"the {d} is a cage and sleep is a stranger", true, false},
        {"oh great another lovely {d} staring at nothing", false, true},
        {"yay my {d} and i are totally best friends now lol", false, true}}},
      {{"body", "legs", "morning", "stairs"},
       {"so exhausted all the time", "no energy left in my {d}", "too tired to even get up",
        "weak and drained every {d}"},
       {{"my {d} is a dead battery", true, false},
        {"running on empty , my {d} made of lead", true, false},
        {"wow so full of energy , my {d} totally cooperating lol", false, true},
        {"oh sure the {d} are my favorite marathon , yay", false, true}}},
      {{"food", "dinner", "stomach", "plate"},
       {"binge eating again", "havent eaten in days", "skipping every meal , no {d}",
        "forced myself to eat {d}"},
       {{"my {d} is an enemy at war", true, false},
        {"every {d} tastes like poison", true, false},
        {"oh sure am eating ? lol , another amazing {d}", false, true},
        {"yay another {d} i totally wont touch", false, true}}},
      {{"mirror", "face", "photos", "reflection"},
       {"i hate myself", "i am worthless and ugly", "such a failure , cant stand my {d}",
        "so ugly in every {d}"},
       {{"i look like death in the {d}", true, false},
        {"feel like trash , a broken {d}", true, false},
        {"oh great my {d} is such a masterpiece lol", false, true},
        {"wow what a winner , just look at that {d} , yay", false, true}}},
      {{"head", "thoughts", "mind", "brain"},
       {"cant focus on anything", "so confused all day", "overthinking everything in my {d}",
        "cant concentrate , my {d} wont work"},
       {{"my {d} is a storm of static", true, false},
        {"my {d} is a maze with no exit", true, false},
        {"wow my {d} is so sharp today lol", false, true},
        {"oh sure losing my {d} every hour is totally fine , yay", false, true}}},
      {{"feet", "steps", "hands", "afternoon"},
       {"so restless cant sit still", "moving so slowly lately", "dont wanna move my {d}",
        "jittery and restless all {d}"},
       {{"my {d} are stuck in wet cement", true, false},
        {"frozen like a statue , my {d} are stone", true, false},
        {"oh yes so productive , my {d} totally sprinting lol", false, true},
        {"wow look at my {d} go , such speed , yay", false, true}}},
      {{"rope", "blade", "road", "bridge"},
       {"want to kill myself", "thinking about suicide again", "cut myself again",
        "i just want to die"},
       {{"i am a candle ready to go out by the {d}", true, false},
        {"the {d} is calling me home", true, false},
        {"hang on a {d} or bated breath , whichever you prefer lol", false, true},
        {"if looks could kill i would be dead by now , oh sure , the {d}", false, true}}},
  }};
  return table;
}

// Upbeat texts reuse domain words with genuine positive framing.
constexpr std::array<std::string_view, 10> kNeutral = {
    "really love my new {d}",        "had a great {d} with friends today",
    "so excited about the {d}",      "what an amazing {d} this weekend",
    "the {d} was wonderful today",   "just finished cleaning up the {d}",
    "thinking about the {d} for the trip", "best {d} in a long time",
    "cant wait to share the {d} with family", "my sister loves the {d} too"};

constexpr std::array<std::string_view, 8> kFillers = {
    "honestly", "today", "tbh", "rn", "@user", "this week", "idk", "url"};

// Symptom frequencies of the reference corpus (S1..S9).
constexpr std::array<double, 9> kSymptomWeights = {494, 657, 261, 301, 473, 1054, 136, 122, 970};

std::string expand(std::string_view tpl, const SymptomTemplates& sym, Rng& rng) {
  std::string out;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl.compare(i, 3, "{d}") == 0) {
      out += sym.domain[rng.below(sym.domain.size())];
      i += 2;
    } else {
      out += tpl[i];
    }
  }
  return out;
}

std::size_t draw_symptom(Rng& rng) {
  double total = 0;
  for (double w : kSymptomWeights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t k = 0; k < kSymptomWeights.size(); ++k) {
    if (u < kSymptomWeights[k]) return k;
    u -= kSymptomWeights[k];
  }
  return kSymptomWeights.size() - 1;
}

std::string with_fillers(std::string body, Rng& rng) {
  if (rng.bernoulli(0.5)) body = std::string(kFillers[rng.below(kFillers.size())]) + " " + body;
  if (rng.bernoulli(0.3)) body += " " + std::string(kFillers[rng.below(kFillers.size())]);
  return body;
}

}  // namespace

void SynthSpec::validate() const {
  for (double f : {figurative_fraction, non_depressive_fraction, multi_p}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ConfigError("synthetic corpus fractions must lie in [0, 1]");
    }
  }
}

Dataset synth_generate(std::size_t n, std::uint64_t seed, const SynthSpec& spec) {
  spec.validate();
  const auto& table = symptom_templates();
  Rng rng(seed);
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.primary.assign(9, 0);
    ex.aux.assign(3, 0);
    if (rng.bernoulli(spec.non_depressive_fraction)) {
      const auto& sym = table[rng.below(table.size())];
      ex.text = with_fillers(expand(kNeutral[rng.below(kNeutral.size())], sym, rng), rng);
      ex.aux[kOthers] = 1;
      out.push_back(std::move(ex));
      continue;
    }
    const bool figurative = rng.bernoulli(spec.figurative_fraction);
    std::vector<std::size_t> symptoms{draw_symptom(rng)};
    if (rng.bernoulli(spec.multi_p)) {
      std::size_t second = draw_symptom(rng);
      while (second == symptoms[0]) second = draw_symptom(rng);
      symptoms.push_back(second);
    }
    std::string body;
    for (const auto k : symptoms) {
      const auto& sym = table[k];
      ex.primary[k] = 1;
      std::string part;
      if (figurative) {
        const auto& tpl = sym.figurative[rng.below(sym.figurative.size())];
        part = expand(tpl.text, sym, rng);
        ex.aux[kMetaphor] |= tpl.metaphor ? 1 : 0;
        ex.aux[kSarcasm] |= tpl.sarcasm ? 1 : 0;
      } else {
        part = expand(sym.literal[rng.below(sym.literal.size())], sym, rng);
      }
      body = body.empty() ? part : body + " and " + part;
    }
    ex.aux[kOthers] = (ex.aux[kMetaphor] || ex.aux[kSarcasm]) ? 0 : 1;
    ex.text = with_fillers(std::move(body), rng);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace cotask
