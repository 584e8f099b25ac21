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

// Binary feature files, corpus manifests, subset sampling and synthetic
// corpora.
//
// Feature file layout (little-endian):
//   "SFEA" | u16 version = 1 | u16 reserved = 0 | u32 dim | u32 frames |
//   f32 hop_ms | frames * dim f32 values, row-major
//
// Manifest: UTF-8 TSV lines "utt_id<TAB>path<TAB>duration_ms", with paths
// relative to the manifest's directory.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unitkit {

/// Frame duration of the upstream SSL features, in milliseconds.
inline constexpr float kDefaultHopMs = 20.0f;

/// A T x D sequence of frame vectors.
struct FeatureMatrix {
  std::uint32_t frames = 0;
  std::uint32_t dim = 1;
  float hop_ms = kDefaultHopMs;
  std::vector<float> values;  // frames * dim, row-major

  FeatureMatrix() = default;
  FeatureMatrix(std::uint32_t frames, std::uint32_t dim, float hop_ms,
                std::vector<float> values);

  std::span<const float> row(std::size_t t) const {
    return {values.data() + t * dim, dim};
  }
  double duration_ms() const {
    return static_cast<double>(frames) * static_cast<double>(hop_ms);
  }

  /// Throws InvalidArgument if the shape, hop or values are invalid.
  void validate() const;

  bool operator==(const FeatureMatrix&) const = default;
};

struct UtteranceRecord {
  std::string utt_id;
  FeatureMatrix features;

  bool operator==(const UtteranceRecord&) const = default;
};

struct ManifestEntry {
  std::string utt_id;
  std::filesystem::path path;  // relative to the manifest root
  double duration_ms = 0.0;

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  /// Directory that entry paths are relative to.
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const {
    return e.path.is_absolute() ? e.path : root / e.path;
  }
  double total_ms() const;
};

void write_features(const UtteranceRecord& record,
                    const std::filesystem::path& destination);

/// The returned utt_id is the file stem; identity lives in the manifest.
UtteranceRecord read_features(const std::filesystem::path& source);

std::string encode_features(const FeatureMatrix& features);
FeatureMatrix decode_features(std::string_view bytes);

void write_manifest(const CorpusManifest& manifest,
                    const std::filesystem::path& destination);
/// Entry paths are resolved against the manifest's parent directory.
CorpusManifest read_manifest(const std::filesystem::path& source);

/// Checks unique non-empty ids without tabs or newlines.
void validate_manifest(const CorpusManifest& manifest);

/// Shuffles the manifest with `seed` and keeps the shortest prefix whose
/// total duration reaches `target_hours`, in shuffled order. A manifest
/// shorter than the target is returned whole (shuffled).
CorpusManifest sample_subset(const CorpusManifest& manifest,
                             double target_hours, std::uint64_t seed);

struct SyntheticSpec {
  std::uint32_t num_utts = 10;
  std::uint32_t min_frames = 50;
  std::uint32_t max_frames = 100;
  std::uint32_t dim = 8;
  std::uint32_t num_latent_classes = 4;
  double noise_scale = 0.05;
  std::uint64_t seed = 0;
  float hop_ms = kDefaultHopMs;
  /// Frames per latent-class run, drawn uniformly from [min, max].
  std::uint32_t min_run = 2;
  std::uint32_t max_run = 8;
  /// Spread of the class prototypes (standard deviation per component).
  double prototype_scale = 1.0;
  /// Seed for prototypes; defaults to `seed`. Two corpora sharing this
  /// value share prototypes even when their sequences differ.
  std::optional<std::uint64_t> prototype_seed;
  /// Row-stochastic class transition matrix (num_latent_classes^2,
  /// row-major). Empty means each run's class is drawn uniformly.
  std::vector<double> transitions;
  /// When set, frames glide linearly from one run's prototype to the next
  /// instead of holding a constant value.
  bool smooth = false;
  std::string id_prefix = "utt";
};

struct SyntheticCorpus {
  CorpusManifest manifest;
  /// Latent class of every frame, per utterance, in manifest order.
  std::vector<std::vector<std::uint32_t>> frame_classes;
  /// num_latent_classes x dim, row-major.
  std::vector<float> prototypes;
};

/// Writes one feature file per utterance plus "manifest.tsv" into
/// `out_dir` and returns the manifest.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir);

}  // namespace unitkit
