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

// Fixed-width and boundary-driven segmentation with mean pooling.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "unitkit/feature_store.hpp"

namespace unitkit {

/// Pool every `width_ms` of speech into one vector.
struct FixedPlan {
  std::uint32_t width_ms = 20;
  bool operator==(const FixedPlan&) const = default;
};

/// Pool between externally supplied boundaries. `ends` holds exclusive
/// segment end frames, strictly ascending, with the last equal to T.
struct VariablePlan {
  std::vector<std::uint32_t> ends;
  bool operator==(const VariablePlan&) const = default;
};

using SegmentationPlan = std::variant<FixedPlan, VariablePlan>;

/// Half-open frame interval [start, end).
struct FrameSpan {
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  std::uint32_t width() const { return end - start; }
  bool operator==(const FrameSpan&) const = default;
};

struct PooledSequence {
  std::uint32_t dim = 1;
  float hop_ms = kDefaultHopMs;
  std::vector<float> segments;  // size() x dim, row-major
  std::vector<FrameSpan> spans;

  std::size_t size() const { return spans.size(); }
  std::span<const float> row(std::size_t s) const {
    return {segments.data() + s * dim, dim};
  }
};

/// Frames per segment for a fixed width; throws unless width_ms is a
/// positive integer multiple of hop_ms.
std::uint32_t frames_per_segment(std::uint32_t width_ms, float hop_ms);

PooledSequence segment_fixed(const FeatureMatrix& features,
                             std::uint32_t width_ms);
PooledSequence segment_variable(const FeatureMatrix& features,
                                std::span<const std::uint32_t> ends);
PooledSequence segment(const FeatureMatrix& features,
                       const SegmentationPlan& plan);

/// Throws InvalidArgument when `ends` is not a valid plan for T frames.
void validate_ends(std::span<const std::uint32_t> ends, std::uint32_t frames);

struct WidthStats {
  double median_ms = 0.0;  // lower-middle element for even counts
  double mean_ms = 0.0;
  std::size_t count = 0;
  std::map<double, std::size_t> histogram;  // width_ms -> segments
};

WidthStats width_stats(std::span<const VariablePlan> plans, float hop_ms);

/// Boundary file: lines "utt_id<TAB>e1 e2 ... eM".
using BoundaryMap = std::map<std::string, VariablePlan>;
BoundaryMap read_boundaries(const std::filesystem::path& source);
void write_boundaries(const BoundaryMap& plans,
                      const std::filesystem::path& destination);

}  // namespace unitkit
