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
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cotask {

// Fixed class order for the two label spaces; multi-hot vectors follow it.
struct LabelSchema {
  std::vector<std::string> primary_names;
  std::vector<std::string> aux_names;

  static LabelSchema standard();

  std::size_t primary_index(std::string_view name) const;  // SchemaError if unknown
  std::size_t aux_index(std::string_view name) const;
  void validate() const;

  bool operator==(const LabelSchema&) const = default;
};

// Positions of the auxiliary classes in LabelSchema::standard().
inline constexpr std::size_t kMetaphor = 0;
inline constexpr std::size_t kSarcasm = 1;
inline constexpr std::size_t kOthers = 2;

struct Example {
  std::string text;
  std::vector<int> tokens;  // filled by encode_dataset
  std::vector<std::uint8_t> primary;
  std::vector<std::uint8_t> aux;

  bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

// Lowercases ASCII letters and splits on whitespace; every ASCII punctuation
// character becomes a token of its own.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSeqStart = 2;
  static constexpr int kReserved = 3;

  Vocabulary() = default;

  // Tokens seen at least min_count times, ordered by (count desc, token asc).
  static Vocabulary build(std::span<const std::string> corpus, std::size_t min_count);
  // Rebuilds from the non-reserved tokens in id order (checkpoint load).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return kReserved + tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Sequence-start id followed by token ids, tail-truncated to max_len.
  std::vector<int> encode(std::string_view text, std::size_t max_len) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

void encode_dataset(Dataset& data, const Vocabulary& vocab, std::size_t max_len);
std::vector<std::string> texts_of(const Dataset& data);

// Line-delimited {"text": str, "symptoms": [names], "figurative": [names]}.
Dataset parse_jsonl(std::istream& in, const LabelSchema& schema);
Dataset load_jsonl(const std::filesystem::path& path, const LabelSchema& schema);
void write_jsonl(std::ostream& out, const Dataset& data, const LabelSchema& schema);
void save_jsonl(const std::filesystem::path& path, const Dataset& data,
                const LabelSchema& schema);

struct SplitRatios {
  double train = 0.7;
  double dev = 0.1;
  double test = 0.2;

  void validate() const;
  bool operator==(const SplitRatios&) const = default;
};

struct Splits {
  Dataset train;
  Dataset dev;
  Dataset test;
};

// Seeded shuffle then contiguous cut. Train and dev sizes are floored; the
// remainder goes to test.
Splits split(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace cotask
