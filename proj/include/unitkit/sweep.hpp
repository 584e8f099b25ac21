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

// Grid experiment orchestration over (segmentation, K, seed) cells.
//
// Every cell runs kmeans -> encode -> pack -> lm -> eval. Each stage's
// artifact lives under <output>/cache/<stage>/<key>/ where the key is a
// SHA-256 over the stage's inputs (file contents, not timestamps) and the
// config fields that affect it. A rerun with unchanged inputs recomputes
// nothing.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unitkit/evaluator.hpp"
#include "unitkit/feature_store.hpp"

namespace unitkit {

/// Environment variable that relative output directories resolve against.
inline constexpr const char* kOutputRootEnv = "UNITKIT_OUTPUT_ROOT";

struct VariablePlanSource {
  std::string name;  // e.g. "phoneme", "syllable", "word"
  std::vector<std::filesystem::path> boundary_files;
};

struct BenchmarkSource {
  std::string name;
  std::filesystem::path manifest;  // JSON lines; pos/neg are feature files
};

struct ScorerConfig {
  enum class Kind { ngram, external };
  Kind kind = Kind::ngram;
  std::uint32_t order = 5;
  std::optional<double> discount;
  bool per_token = false;
  /// For external scores: path with {benchmark}, {segmentation}, {k} and
  /// {seed} placeholders, one score TSV per evaluated cell.
  std::string external_pattern;
};

struct SweepConfig {
  std::vector<std::uint32_t> n_values{20, 40, 80, 120, 160, 200, 240, 280};
  std::vector<std::uint32_t> k_values{128,  256,  512,  1024,
                                      2048, 4096, 8192, 16384};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path features_manifest;
  double kmeans_subset_hours = 100.0;
  std::vector<BenchmarkSource> benchmarks;
  std::filesystem::path output_dir;
  ScorerConfig scorer;
  std::vector<VariablePlanSource> variable_plans;

  float hop_ms = kDefaultHopMs;
  bool dedup = true;
  std::uint32_t kmeans_max_iters = 100;
  double kmeans_rel_tol = 1e-4;
  std::uint32_t kmeans_minibatch = 0;
  std::uint32_t chunk_len = 2048;
  bool use_separator = true;
  /// Cells evaluated concurrently.
  std::size_t workers = 1;
  /// Threads inside k-means and pair scoring.
  std::size_t inner_workers = 1;
  /// Recompute one cached stage per run and compare bytes.
  bool verify_cache = true;

  /// Throws InvalidArgument on an unusable configuration.
  void validate() const;
  /// Number of segmentations (fixed widths plus variable plans) x K.
  std::size_t tokenization_count() const {
    return (n_values.size() + variable_plans.size()) * k_values.size();
  }
};

/// Parses a JSON config; relative paths resolve against `base_dir`, except
/// output_dir which resolves against $UNITKIT_OUTPUT_ROOT when set.
SweepConfig parse_sweep_config(std::string_view json_text,
                               const std::filesystem::path& base_dir);
SweepConfig load_sweep_config(const std::filesystem::path& path);
std::string sweep_config_to_json(const SweepConfig& config);

enum class Stage { kmeans, encode, pack, lm, eval };
inline constexpr std::array<Stage, 5> kStages{
    Stage::kmeans, Stage::encode, Stage::pack, Stage::lm, Stage::eval};
std::string_view stage_name(Stage stage);

/// Content key of one stage invocation.
struct RunKey {
  std::string hex;
  bool operator==(const RunKey&) const = default;
};

/// Incremental SHA-256 key builder; fields are length-prefixed so
/// ("ab","c") and ("a","bc") differ.
class RunKeyBuilder {
 public:
  explicit RunKeyBuilder(std::string_view stage);
  RunKeyBuilder& add(std::string_view field);
  RunKeyBuilder& add(std::uint64_t value);
  RunKeyBuilder& add(double value);
  RunKey finish() const;

 private:
  std::string material_;
};

struct StageRecord {
  Stage stage = Stage::kmeans;
  std::string detail;  // benchmark name for eval stages
  std::string key;
  bool cached = false;
  double seconds = 0.0;
};

struct CellOutcome {
  std::string segmentation;
  std::uint32_t k = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<StageRecord> stages;
};

struct StageCounters {
  std::map<Stage, std::size_t> computed;
  std::map<Stage, std::size_t> cache_hits;
  std::size_t total_computed() const;
};

struct CacheCheck {
  bool performed = false;
  bool ok = true;
  std::string cell;
  std::string detail;
};

struct SweepResult {
  std::vector<CellOutcome> cells;
  std::vector<EvalReport> reports;
  std::vector<SeedAggregate> aggregates;
  GridTables grid;
  StageCounters counters;
  CacheCheck cache_check;
  std::vector<std::filesystem::path> report_files;
};

/// Runs every cell, writes <output>/ledger.json, per-cell reports under
/// <output>/reports and the consolidated tables under <output>/report.
SweepResult run_sweep(const SweepConfig& config);

/// Groups reports by (benchmark, segmentation, K) and aggregates seeds.
std::vector<SeedAggregate> summarize_reports(std::span<const EvalReport> reports);

/// Loads every per-cell report JSON below `reports_dir`.
std::vector<EvalReport> load_reports(const std::filesystem::path& reports_dir);

/// Writes grid_<benchmark>.{csv,json}, grid_average.{csv,json},
/// best_k.{csv,json}, aggregates.{csv,json} and summary.txt. Files whose
/// content is unchanged are not rewritten.
std::vector<std::filesystem::path> emit_report(
    std::span<const SeedAggregate> aggregates,
    const std::filesystem::path& out_dir);

std::string grid_to_csv(const GridMatrix& grid);
GridMatrix grid_from_csv(std::string_view text, std::string name);
std::string best_k_to_csv(std::span<const BestK> rows);

}  // namespace unitkit
