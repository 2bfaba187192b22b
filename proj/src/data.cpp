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

#include "cotask/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cotask/errors.hpp"
#include "cotask/rng.hpp"

namespace cotask {

LabelSchema LabelSchema::standard() {
  return LabelSchema{
      {"Lack of Interest", "Feeling Down", "Sleeping Disorder", "Lack of Energy",
       "Eating Disorder", "Low Self-Esteem", "Concentration Problem", "Hyper/Lower Activity",
       "Self-Harm"},
      {"metaphor", "sarcasm", "others"}};
}

namespace {
std::size_t index_in(const std::vector<std::string>& names, std::string_view name,
                     const char* what) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw SchemaError(std::string("unknown ") + what + " label '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - names.begin());
}
}  // namespace

std::size_t LabelSchema::primary_index(std::string_view name) const {
  return index_in(primary_names, name, "symptom");
}

std::size_t LabelSchema::aux_index(std::string_view name) const {
  return index_in(aux_names, name, "figurative");
}

void LabelSchema::validate() const {
  for (const auto* names : {&primary_names, &aux_names}) {
    if (names->empty()) throw SchemaError("label schema has an empty class list");
    std::set<std::string> unique(names->begin(), names->end());
    if (unique.size() != names->size()) throw SchemaError("label names must be unique");
  }
}

// ---- tokenizer / vocabulary ---------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& tok : tokenize(text)) ++counts[std::move(tok)];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], kReserved + static_cast<int>(i)).second) {
      throw SchemaError("vocabulary token '" + v.tokens_[i] + "' appears twice");
    }
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  static const std::string reserved[kReserved] = {"[PAD]", "[UNK]", "[SEQ]"};
  if (id >= 0 && id < kReserved) return reserved[id];
  return tokens_.at(static_cast<std::size_t>(id - kReserved));
}

std::vector<int> Vocabulary::encode(std::string_view text, std::size_t max_len) const {
  std::vector<int> ids{kSeqStart};
  for (const auto& tok : tokenize(text)) {
    if (ids.size() >= max_len) break;
    ids.push_back(id(tok));
  }
  return ids;
}

void encode_dataset(Dataset& data, const Vocabulary& vocab, std::size_t max_len) {
  for (auto& ex : data) ex.tokens = vocab.encode(ex.text, max_len);
}

std::vector<std::string> texts_of(const Dataset& data) {
  std::vector<std::string> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(ex.text);
  return out;
}

// ---- JSONL ------------------------------------------------------------------------

Dataset parse_jsonl(std::istream& in, const LabelSchema& schema) {
  using nlohmann::json;
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!rec.is_object()) throw ParseError("record is not a JSON object", lineno);
    auto field = [&](const char* key, auto check, const char* kind) -> const json& {
      const auto it = rec.find(key);
      if (it == rec.end()) throw ParseError(std::string("missing \"") + key + "\"", lineno);
      if (!check(*it)) throw ParseError(std::string("\"") + key + "\" must be " + kind, lineno);
      return *it;
    };
    const auto is_str = [](const json& j) { return j.is_string(); };
    const auto is_arr = [](const json& j) {
      return j.is_array() && std::all_of(j.begin(), j.end(),
                                         [](const json& e) { return e.is_string(); });
    };
    Example ex;
    ex.text = field("text", is_str, "a string").get<std::string>();
    ex.primary.assign(schema.primary_names.size(), 0);
    ex.aux.assign(schema.aux_names.size(), 0);
    for (const auto& name : field("symptoms", is_arr, "an array of strings")) {
      ex.primary[schema.primary_index(name.get<std::string>())] = 1;
    }
    const std::size_t others = schema.aux_names.size() - 1;
    bool explicit_others = false;
    for (const auto& name : field("figurative", is_arr, "an array of strings")) {
      const auto idx = schema.aux_index(name.get<std::string>());
      if (idx == others) {
        explicit_others = true;
      } else {
        ex.aux[idx] = 1;
      }
    }
    const bool any_figurative =
        std::any_of(ex.aux.begin(), ex.aux.begin() + static_cast<long>(others),
                    [](std::uint8_t b) { return b != 0; });
    if (explicit_others && any_figurative) {
      throw SchemaError("line " + std::to_string(lineno) + ": '" + schema.aux_names[others] +
                        "' cannot be combined with figurative labels");
    }
    ex.aux[others] = any_figurative ? 0 : 1;
    out.push_back(std::move(ex));
  }
  return out;
}

Dataset load_jsonl(const std::filesystem::path& path, const LabelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_jsonl(in, schema);
}

void write_jsonl(std::ostream& out, const Dataset& data, const LabelSchema& schema) {
  using nlohmann::ordered_json;
  const std::size_t others = schema.aux_names.size() - 1;
  for (const auto& ex : data) {
    ordered_json rec;
    rec["text"] = ex.text;
    rec["symptoms"] = ordered_json::array();
    for (std::size_t c = 0; c < ex.primary.size(); ++c)
      if (ex.primary[c]) rec["symptoms"].push_back(schema.primary_names[c]);
    rec["figurative"] = ordered_json::array();
    for (std::size_t c = 0; c < others; ++c)
      if (ex.aux[c]) rec["figurative"].push_back(schema.aux_names[c]);
    out << rec.dump() << '\n';
  }
}

void save_jsonl(const std::filesystem::path& path, const Dataset& data,
                const LabelSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_jsonl(out, data, schema);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---- split ------------------------------------------------------------------------

void SplitRatios::validate() const {
  if (train < 0 || dev < 0 || test < 0) throw ConfigError("split ratios must be non-negative");
  if (std::abs(train + dev + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(train + dev + test));
  }
}

Splits split(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const double n = static_cast<double>(data.size());
  // the small slack keeps e.g. 0.7 * 10 from flooring to 6
  const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
  const auto n_dev = std::min(data.size() - n_train,
                              static_cast<std::size_t>(std::floor(n * ratios.dev + 1e-9)));
  Splits s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& dst = i < n_train ? s.train : (i < n_train + n_dev ? s.dev : s.test);
    dst.push_back(data[order[i]]);
  }
  return s;
}

}  // namespace cotask
