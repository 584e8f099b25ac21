// Copyright 2026 The unitkit Authors
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

// Unit language models and the scoring contract used by evaluation.
//
// NgramModel is an interpolated Kneser-Ney model. Highest-order grams use
// raw counts; lower orders use continuation counts (number of distinct left
// extensions). The lowest order interpolates with a uniform floor over the
// event space, so every event has non-zero probability.
//
// Symbol ids: units are [0, vocab); BOS = vocab; EOS = vocab + 1. Events are
// units plus EOS (when enabled). Log-probabilities are natural logs.
//
// Model file layout (little-endian):
//   "SNGM" | u16 version = 1 | u32 order | u32 vocab | u32 flags (bit 0:
//   EOS enabled) | for each order k = 1..order: f64 discount, u64 gram
//   count, then per gram (sorted): k x u32 symbols, u64 count
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "unitkit/unitizer.hpp"

namespace unitkit {

/// Discount used when count-of-count statistics leave it undefined.
inline constexpr double kFallbackDiscount = 0.75;

struct NgramConfig {
  std::uint32_t order = 5;
  /// Fixed per-order discount in (0, 1]; empty estimates n1 / (n1 + 2 n2).
  std::optional<double> discount;
  /// Predict an end-of-sequence event after every sequence.
  bool use_eos = true;
};

class NgramModel {
 public:
  NgramModel() = default;

  static NgramModel train(std::span<const std::vector<std::uint32_t>> corpus,
                          std::uint32_t vocab_size, const NgramConfig& config);

  std::uint32_t order() const { return order_; }
  std::uint32_t vocab_size() const { return vocab_; }
  bool use_eos() const { return use_eos_; }
  std::uint32_t bos() const { return vocab_; }
  std::uint32_t eos() const { return vocab_ + 1; }
  std::uint32_t event_count() const { return vocab_ + (use_eos_ ? 1u : 0u); }
  double discount(std::uint32_t k) const { return discounts_.at(k - 1); }

  /// p(event | context). Only the last order - 1 context symbols are used;
  /// shorter contexts are scored at the matching lower order.
  double prob(std::span<const std::uint32_t> context, std::uint32_t event) const;

  /// Sum of log p over the units and EOS, with order - 1 BOS symbols of
  /// left padding. With `per_token` the sum is divided by the number of
  /// predicted events.
  double sequence_logprob(std::span<const std::uint32_t> units,
                          bool per_token = false) const;

  /// Contexts (order - 1 symbols) observed in training, sorted.
  std::vector<std::vector<std::uint32_t>> seen_contexts() const;

  /// Raw or continuation count stored for a gram of length 1..order.
  std::uint64_t count(std::span<const std::uint32_t> gram) const;

  std::string serialize() const;
  static NgramModel deserialize(std::string_view bytes);

  bool operator==(const NgramModel& other) const {
    return serialize() == other.serialize();
  }

 private:
  struct ContextStats {
    std::uint64_t total = 0;  // sum of counts following the context
    std::uint64_t types = 0;  // distinct events following the context
  };
  using GramTable = std::unordered_map<std::u32string, std::uint64_t>;
  using ContextTable = std::unordered_map<std::u32string, ContextStats>;

  void build_context_tables();
  double prob_at(std::uint32_t k, std::u32string_view context,
                 std::uint32_t event) const;

  std::uint32_t order_ = 0;
  std::uint32_t vocab_ = 0;
  bool use_eos_ = true;
  std::vector<double> discounts_;
  std::vector<GramTable> grams_;       // index k - 1
  std::vector<ContextTable> contexts_;  // index k - 1
};

NgramModel train_ngram(std::span<const UnitSequence> corpus,
                       std::uint32_t vocab_size, const NgramConfig& config);

double sequence_logprob(const NgramModel& model,
                        std::span<const std::uint32_t> units,
                        bool per_token = false);

/// exp(-total logprob / predicted events) over the corpus.
double perplexity(const NgramModel& model, std::span<const UnitSequence> corpus);

void write_ngram(const NgramModel& model, const std::filesystem::path& path);
NgramModel read_ngram(const std::filesystem::path& path);

struct PairScores {
  double pos_logprob = 0.0;
  double neg_logprob = 0.0;
  bool operator==(const PairScores&) const = default;
};

/// pair_id -> scores, natural-log units.
using ScoreTable = std::map<std::string, PairScores>;

/// TSV lines "pair_id<TAB>pos_logprob<TAB>neg_logprob".
ScoreTable load_external_scores(const std::filesystem::path& source);
void write_scores(const ScoreTable& table, const std::filesystem::path& path);

/// One stimulus pair as seen by a scorer.
struct ScoringRequest {
  std::string_view pair_id;
  std::span<const std::uint32_t> pos_units;
  std::span<const std::uint32_t> neg_units;
};

/// Anything that can assign log-likelihoods to both members of a pair.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual PairScores score(const ScoringRequest& request) const = 0;
};

class NgramScorer final : public Scorer {
 public:
  explicit NgramScorer(const NgramModel& model, bool per_token = false)
      : model_(model), per_token_(per_token) {}
  PairScores score(const ScoringRequest& request) const override;

 private:
  const NgramModel& model_;
  bool per_token_;
};

/// Looks scores up by pair_id; unknown ids throw.
class TableScorer final : public Scorer {
 public:
  explicit TableScorer(ScoreTable table) : table_(std::move(table)) {}
  PairScores score(const ScoringRequest& request) const override;

 private:
  ScoreTable table_;
};

}  // namespace unitkit
