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

// Utterance tokenization (segment, pool, assign, deduplicate), corpus token
// statistics and time-aligned comparison of unit sequences.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unitkit/feature_store.hpp"
#include "unitkit/quantizer.hpp"
#include "unitkit/segmenter.hpp"

namespace unitkit {

/// Half-open time interval in milliseconds.
struct TimeSpan {
  double start_ms = 0.0;
  double end_ms = 0.0;
  bool operator==(const TimeSpan&) const = default;
};

/// Identifies one tokenization: a segmentation label ("80" for N = 80 ms,
/// or a variable-plan name) and the codebook size K.
struct TokenizerConfig {
  std::string segmentation;
  std::uint32_t k = 0;
  bool operator==(const TokenizerConfig&) const = default;
};

struct UnitSequence {
  std::string utt_id;
  std::vector<std::uint32_t> units;
  std::optional<std::vector<TimeSpan>> spans;
  bool dedup = false;
  /// Unit count before deduplication, when known.
  std::optional<std::size_t> raw_length;
  std::optional<TokenizerConfig> config;

  bool operator==(const UnitSequence&) const = default;
};

/// Collapses maximal runs of equal adjacent units.
std::vector<std::uint32_t> deduplicate(std::span<const std::uint32_t> units);

/// Sequence form: merges the spans of each collapsed run.
UnitSequence deduplicate(const UnitSequence& sequence);

UnitSequence encode(const FeatureMatrix& features, const SegmentationPlan& plan,
                    const Codebook& codebook, bool dedup,
                    std::string utt_id = {});

struct CorpusStats {
  TokenizerConfig config;
  std::uint64_t total_tokens_pre_dedup = 0;
  std::uint64_t total_tokens_post_dedup = 0;
  struct PerUtterance {
    std::string utt_id;
    std::uint64_t pre_dedup = 0;
    std::uint64_t post_dedup = 0;
  };
  std::vector<PerUtterance> per_utterance;
};

/// Throws InvalidArgument if any sequence carries a different config, or
/// if a deduplicated sequence has no recorded raw length.
CorpusStats corpus_stats(std::span<const UnitSequence> corpus,
                         const TokenizerConfig& config);

struct DiffInterval {
  TimeSpan span;
  std::optional<std::uint32_t> unit_a;
  std::optional<std::uint32_t> unit_b;
  bool differs = false;
  bool operator==(const DiffInterval&) const = default;
};

/// Splits the union timeline at every span boundary of either sequence and
/// reports the active unit of each side per interval.
std::vector<DiffInterval> align_diff(const UnitSequence& a,
                                     const UnitSequence& b);

/// Unit corpus: lines "utt_id<TAB>u1 u2 ...". The optional span file holds
/// "utt_id<TAB>s1:e1 s2:e2 ..." in milliseconds.
void write_unit_corpus(std::span<const UnitSequence> corpus,
                       const std::filesystem::path& units_path,
                       const std::optional<std::filesystem::path>& spans_path =
                           std::nullopt);
std::vector<UnitSequence> read_unit_corpus(
    const std::filesystem::path& units_path,
    const std::optional<std::filesystem::path>& spans_path = std::nullopt);

}  // namespace unitkit
