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

// Paired-stimuli zero-shot evaluation: per-pair decisions, category
// accuracies, seed aggregation and (segmentation, K) grid tables.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unitkit/unit_lm.hpp"

namespace unitkit {

struct StimulusPair {
  std::string pair_id;
  std::string benchmark;  // sblimp, swuggy, pros_syntax, ... or custom
  std::string category;
  std::vector<std::uint32_t> pos_units;
  std::vector<std::uint32_t> neg_units;
};

/// Identifies one evaluated cell of the grid.
struct RunConfig {
  std::string segmentation;  // "80", "syllable", ...
  std::uint32_t k = 0;
  std::uint64_t seed = 0;
  bool operator==(const RunConfig&) const = default;
};

struct PairResult {
  std::string pair_id;
  std::string category;
  PairScores scores;
  double credit = 0.0;  // 1, 0 or 0.5 on an exact tie
  bool tie = false;
};

struct CategoryAccuracy {
  double accuracy = 0.0;
  std::size_t pairs = 0;
  bool operator==(const CategoryAccuracy&) const = default;
};

struct EvalReport {
  std::string benchmark;
  RunConfig config;
  double accuracy = 0.0;
  double tie_rate = 0.0;
  std::size_t pair_count = 0;
  std::map<std::string, CategoryAccuracy> categories;
  std::vector<PairResult> results;
};

/// Credit for one pair: 1 if pos scores higher, 0 if lower, 0.5 on ties.
double pair_credit(const PairScores& scores);

/// Scores every pair (in parallel over `workers`) and aggregates in pair
/// order. A scorer failure is rethrown with the offending pair_id.
EvalReport evaluate(const Scorer& scorer, std::span<const StimulusPair> pairs,
                    const std::string& benchmark = "custom",
                    const RunConfig& config = {}, std::size_t workers = 1);

/// Per-category mean credit; categories without pairs are absent.
std::map<std::string, CategoryAccuracy> split_by_category(
    std::span<const PairResult> results);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  bool operator==(const MeanStd&) const = default;
};

struct SeedAggregate {
  std::string benchmark;
  std::string segmentation;
  std::uint32_t k = 0;
  std::size_t seeds = 0;
  MeanStd accuracy;
  MeanStd tie_rate;
  std::map<std::string, MeanStd> categories;
};

/// Mean and population std over seeds of one (benchmark, segmentation, K).
SeedAggregate aggregate_seeds(std::span<const EvalReport> reports);

/// Arithmetic mean and population standard deviation.
MeanStd mean_std(std::span<const double> values);

/// Orders segmentation labels: numeric widths ascending, then names.
bool segmentation_less(const std::string& a, const std::string& b);

struct GridMatrix {
  std::string name;  // benchmark, or "average"
  std::vector<std::string> rows;    // segmentation labels
  std::vector<std::uint32_t> cols;  // K values, ascending
  std::vector<std::optional<double>> cells;  // rows x cols, row-major

  const std::optional<double>& at(std::size_t r, std::size_t c) const {
    return cells[r * cols.size() + c];
  }
  bool operator==(const GridMatrix&) const = default;
};

struct BestK {
  std::string segmentation;
  std::uint32_t k = 0;
  double accuracy = 0.0;
  bool operator==(const BestK&) const = default;
};

struct GridTables {
  std::vector<GridMatrix> per_benchmark;
  /// Cross-benchmark mean; a cell is present only when every benchmark
  /// has it.
  GridMatrix average;
  /// Per row of `average`: the K with the highest accuracy (smaller K on
  /// ties). Rows without any present cell are skipped.
  std::vector<BestK> best_k;
};

/// Builds mean-accuracy matrices. Missing cells stay empty; duplicate
/// (benchmark, segmentation, K) aggregates throw.
GridTables grid_table(std::span<const SeedAggregate> aggregates);

/// Argmax over present cells of one row, ties toward the smaller K.
std::optional<BestK> best_k_for_row(const GridMatrix& grid, std::size_t row);

/// Benchmark manifest entry: one JSON object per line with pair_id,
/// category, pos and neg (plus optional benchmark). pos/neg name unit
/// corpus entries or feature files relative to the manifest.
struct BenchmarkEntry {
  std::string pair_id;
  std::string benchmark;
  std::string category;
  std::string pos;
  std::string neg;
};

std::vector<BenchmarkEntry> read_benchmark_manifest(
    const std::filesystem::path& source);
void write_benchmark_manifest(std::span<const BenchmarkEntry> entries,
                              const std::filesystem::path& destination);

/// Seed-aggregate rows: benchmark, N, K, seeds, mean, std, tie_rate and
/// one column per category (union over rows, sorted).
std::string aggregates_to_csv(std::span<const SeedAggregate> aggregates);
std::string aggregates_to_json(std::span<const SeedAggregate> aggregates);

/// Per-cell report including per-pair results; round-trips exactly.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);

/// Resolves pos/neg against a unit corpus keyed by utt_id.
std::vector<StimulusPair> pairs_from_units(
    std::span<const BenchmarkEntry> entries,
    std::span<const UnitSequence> corpus);

}  // namespace unitkit
