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

// K-means codebooks over pooled segment vectors.
//
// Codebook file layout (little-endian):
//   "SCBK" | u16 version = 1 | u16 reserved | u32 k | u32 dim |
//   u32 meta_len | meta_len bytes of UTF-8 JSON | k * dim f32 centroids
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unitkit {

/// Non-owning row-major view of `size()` vectors of length `dim`.
struct VectorView {
  std::span<const float> data;
  std::size_t dim = 1;

  VectorView() = default;
  VectorView(std::span<const float> data_, std::size_t dim_);

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const {
    return data.subspan(i * dim, dim);
  }
};

struct KMeansConfig {
  std::uint32_t k = 128;
  std::uint32_t max_iters = 100;
  double rel_tol = 1e-4;
  std::uint64_t seed = 0;
  /// Zero selects full Lloyd; otherwise minibatch updates of this size.
  std::uint32_t minibatch_size = 0;
  /// Threads used for distance computations. Results do not depend on it.
  std::size_t workers = 1;

  void validate() const;
};

struct CodebookMeta {
  /// Fixed width in ms, or 0 for variable segmentation.
  std::uint32_t segment_width_ms = 0;
  std::string segmentation;  // free-form label, e.g. "80" or "syllable"
  std::uint64_t seed = 0;
  std::uint32_t iterations_run = 0;
  double final_inertia = 0.0;
  /// Inertia after each assignment step; entry 0 is the k-means++ seeding.
  std::vector<double> inertia_history;
  bool minibatch = false;

  bool operator==(const CodebookMeta&) const = default;
};

struct Codebook {
  std::uint32_t k = 0;
  std::uint32_t dim = 0;
  std::vector<float> centroids;  // k * dim, row-major
  CodebookMeta meta;

  std::span<const float> centroid(std::size_t c) const {
    return {centroids.data() + c * dim, dim};
  }
  VectorView view() const { return {centroids, dim}; }
  void validate() const;

  bool operator==(const Codebook&) const = default;
};

/// k-means++ seeding followed by Lloyd (or minibatch) refinement.
/// Deterministic in (vectors, config) regardless of config.workers.
Codebook train_kmeans(VectorView vectors, const KMeansConfig& config);

/// k-means++ seeding only; exposed for diagnostics and tests.
std::vector<float> kmeanspp_init(VectorView vectors, std::uint32_t k,
                                 std::uint64_t seed, std::size_t workers = 1);

/// Nearest centroid by squared Euclidean distance, lowest index on ties.
std::vector<std::uint32_t> assign(const Codebook& codebook, VectorView vectors,
                                  std::size_t workers = 1);

/// Sum of squared distances to the assigned centroids.
double inertia(const Codebook& codebook, VectorView vectors,
               std::size_t workers = 1);

/// Squared Euclidean distance accumulated in double, in index order.
double squared_distance(std::span<const float> a, std::span<const float> b);

std::string encode_codebook(const Codebook& codebook);
Codebook decode_codebook(std::string_view bytes);
void write_codebook(const Codebook& codebook,
                    const std::filesystem::path& destination);
Codebook read_codebook(const std::filesystem::path& source);

}  // namespace unitkit
