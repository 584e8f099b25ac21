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

// Fixed-length chunking of a unit corpus for LM training.
//
// Packed file: header "#chunk_len=<n>;vocab=<v>;sep=<id|none>" then one
// line of chunk_len space-separated unit ids per chunk.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "unitkit/unitizer.hpp"

namespace unitkit {

inline constexpr std::uint32_t kDefaultChunkLen = 2048;

struct PackedDataset {
  std::uint32_t chunk_len = kDefaultChunkLen;
  std::vector<std::vector<std::uint32_t>> chunks;
  std::uint32_t vocab_size = 0;
  std::optional<std::uint32_t> separator_id;
  std::uint64_t dropped_tail = 0;
  /// The dropped tokens themselves, in stream order.
  std::vector<std::uint32_t> tail;

  bool operator==(const PackedDataset&) const = default;
};

/// Concatenates the corpus in order (appending separator id = k after each
/// utterance when enabled) and cuts the stream into full chunks.
PackedDataset pack(std::span<const UnitSequence> corpus, std::uint32_t k,
                   std::uint32_t chunk_len = kDefaultChunkLen,
                   bool use_separator = true);

/// The tail is not persisted; a reloaded dataset has an empty `tail`.
void write_packed(const PackedDataset& packed,
                  const std::filesystem::path& destination);
PackedDataset read_packed(const std::filesystem::path& source);

}  // namespace unitkit
