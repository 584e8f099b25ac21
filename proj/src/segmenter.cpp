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

#include "unitkit/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"

namespace unitkit {

namespace {

// Means are accumulated in double and narrowed once.
void pool_span(const FeatureMatrix& f, FrameSpan span, std::vector<double>& acc,
               float* out) {
  std::fill(acc.begin(), acc.end(), 0.0);
  for (std::uint32_t t = span.start; t < span.end; ++t) {
    auto row = f.row(t);
    for (std::uint32_t d = 0; d < f.dim; ++d) acc[d] += row[d];
  }
  const double inv = 1.0 / span.width();
  for (std::uint32_t d = 0; d < f.dim; ++d) {
    out[d] = static_cast<float>(acc[d] * inv);
  }
}

PooledSequence pool(const FeatureMatrix& f, std::vector<FrameSpan> spans) {
  PooledSequence out;
  out.dim = f.dim;
  out.hop_ms = f.hop_ms;
  out.segments.resize(spans.size() * f.dim);
  std::vector<double> acc(f.dim);
  for (std::size_t s = 0; s < spans.size(); ++s) {
    if (spans[s].width() == 1) {
      // Single-frame spans copy exactly, so N == hop reproduces the input.
      auto row = f.row(spans[s].start);
      std::copy(row.begin(), row.end(), out.segments.begin() + s * f.dim);
    } else {
      pool_span(f, spans[s], acc, out.segments.data() + s * f.dim);
    }
  }
  out.spans = std::move(spans);
  return out;
}

}  // namespace

std::uint32_t frames_per_segment(std::uint32_t width_ms, float hop_ms) {
  if (!(hop_ms > 0.0f)) throw InvalidArgument("hop_ms must be positive");
  if (width_ms == 0) throw InvalidArgument("segment width must be positive");
  const double ratio = static_cast<double>(width_ms) / hop_ms;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-6 * ratio) {
    throw InvalidArgument("segment width " + std::to_string(width_ms) +
                          " ms is not a multiple of hop " +
                          format_double(hop_ms) + " ms");
  }
  return static_cast<std::uint32_t>(rounded);
}

PooledSequence segment_fixed(const FeatureMatrix& features,
                             std::uint32_t width_ms) {
  const std::uint32_t step = frames_per_segment(width_ms, features.hop_ms);
  std::vector<FrameSpan> spans;
  spans.reserve((features.frames + step - 1) / step);
  for (std::uint32_t start = 0; start < features.frames; start += step) {
    spans.push_back({start, std::min(features.frames, start + step)});
  }
  return pool(features, std::move(spans));
}

void validate_ends(std::span<const std::uint32_t> ends, std::uint32_t frames) {
  if (ends.empty()) {
    if (frames == 0) return;
    throw InvalidArgument("empty boundary list for non-empty utterance");
  }
  std::uint32_t prev = 0;
  for (auto e : ends) {
    if (e <= prev) throw InvalidArgument("segment ends must strictly ascend");
    if (e > frames) throw InvalidArgument("segment end beyond last frame");
    prev = e;
  }
  if (prev != frames) {
    throw InvalidArgument("final segment end " + std::to_string(prev) +
                          " != frame count " + std::to_string(frames));
  }
}

PooledSequence segment_variable(const FeatureMatrix& features,
                                std::span<const std::uint32_t> ends) {
  validate_ends(ends, features.frames);
  std::vector<FrameSpan> spans;
  spans.reserve(ends.size());
  std::uint32_t prev = 0;
  for (auto e : ends) {
    spans.push_back({prev, e});
    prev = e;
  }
  return pool(features, std::move(spans));
}

PooledSequence segment(const FeatureMatrix& features,
                       const SegmentationPlan& plan) {
  if (const auto* fixed = std::get_if<FixedPlan>(&plan)) {
    return segment_fixed(features, fixed->width_ms);
  }
  return segment_variable(features, std::get<VariablePlan>(plan).ends);
}

WidthStats width_stats(std::span<const VariablePlan> plans, float hop_ms) {
  if (!(hop_ms > 0.0f)) throw InvalidArgument("hop_ms must be positive");
  std::vector<std::uint32_t> widths;
  for (const auto& plan : plans) {
    std::uint32_t prev = 0;
    for (auto e : plan.ends) {
      if (e <= prev) throw InvalidArgument("segment ends must strictly ascend");
      widths.push_back(e - prev);
      prev = e;
    }
  }
  if (widths.empty()) throw InvalidArgument("width_stats needs segments");

  WidthStats stats;
  stats.count = widths.size();
  std::sort(widths.begin(), widths.end());
  stats.median_ms =
      static_cast<double>(widths[(widths.size() - 1) / 2]) * hop_ms;
  double total = 0.0;
  for (auto w : widths) {
    const double ms = static_cast<double>(w) * hop_ms;
    total += ms;
    ++stats.histogram[ms];
  }
  stats.mean_ms = total / static_cast<double>(widths.size());
  return stats;
}

BoundaryMap read_boundaries(const std::filesystem::path& source) {
  BoundaryMap plans;
  const std::string text = read_file(source);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw FormatError(FormatError::Kind::malformed,
                        source.string() + ":" + std::to_string(line_no) +
                            ": expected 'utt_id<TAB>ends'");
    }
    VariablePlan plan;
    for (auto tok : split_ws(line.substr(tab + 1))) {
      plan.ends.push_back(static_cast<std::uint32_t>(parse_u64(tok)));
    }
    std::string id(line.substr(0, tab));
    if (!plans.emplace(id, std::move(plan)).second) {
      throw FormatError(FormatError::Kind::malformed,
                        "duplicate utt_id in boundary file: " + id);
    }
  }
  return plans;
}

void write_boundaries(const BoundaryMap& plans,
                      const std::filesystem::path& destination) {
  std::ostringstream out;
  for (const auto& [id, plan] : plans) {
    out << id << '\t';
    for (std::size_t i = 0; i < plan.ends.size(); ++i) {
      if (i) out << ' ';
      out << plan.ends[i];
    }
    out << '\n';
  }
  write_file_atomic(destination, out.str());
}

}  // namespace unitkit
