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

#include "unitkit/unitizer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"

namespace unitkit {

std::vector<std::uint32_t> deduplicate(std::span<const std::uint32_t> units) {
  std::vector<std::uint32_t> out;
  out.reserve(units.size());
  for (auto u : units) {
    if (out.empty() || out.back() != u) out.push_back(u);
  }
  return out;
}

UnitSequence deduplicate(const UnitSequence& sequence) {
  UnitSequence out;
  out.utt_id = sequence.utt_id;
  out.config = sequence.config;
  out.dedup = true;
  out.raw_length = sequence.raw_length.value_or(sequence.units.size());
  const auto& units = sequence.units;
  const std::vector<TimeSpan>* spans =
      sequence.spans ? &*sequence.spans : nullptr;
  if (spans && spans->size() != units.size()) {
    throw InvalidArgument("span count does not match unit count");
  }
  std::vector<TimeSpan> merged;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!out.units.empty() && out.units.back() == units[i]) {
      if (spans) merged.back().end_ms = (*spans)[i].end_ms;
      continue;
    }
    out.units.push_back(units[i]);
    if (spans) merged.push_back((*spans)[i]);
  }
  if (spans) out.spans = std::move(merged);
  return out;
}

UnitSequence encode(const FeatureMatrix& features, const SegmentationPlan& plan,
                    const Codebook& codebook, bool dedup, std::string utt_id) {
  if (features.dim != codebook.dim) {
    throw InvalidArgument("feature dim " + std::to_string(features.dim) +
                          " != codebook dim " + std::to_string(codebook.dim));
  }
  const PooledSequence pooled = segment(features, plan);
  UnitSequence seq;
  seq.utt_id = std::move(utt_id);
  seq.units = assign(codebook, VectorView(pooled.segments, pooled.dim));
  seq.raw_length = seq.units.size();
  std::vector<TimeSpan> spans;
  spans.reserve(pooled.spans.size());
  const double hop = features.hop_ms;
  for (const auto& s : pooled.spans) {
    spans.push_back({s.start * hop, s.end * hop});
  }
  seq.spans = std::move(spans);
  return dedup ? deduplicate(seq) : seq;
}

CorpusStats corpus_stats(std::span<const UnitSequence> corpus,
                         const TokenizerConfig& config) {
  CorpusStats stats;
  stats.config = config;
  stats.per_utterance.reserve(corpus.size());
  for (const auto& seq : corpus) {
    if (seq.config && *seq.config != config) {
      throw InvalidArgument("utterance " + seq.utt_id +
                            " was tokenized with a different config");
    }
    std::uint64_t pre = 0;
    if (seq.raw_length) {
      pre = *seq.raw_length;
    } else if (!seq.dedup) {
      pre = seq.units.size();
    } else {
      throw InvalidArgument("pre-dedup length unknown for " + seq.utt_id);
    }
    const std::uint64_t post =
        seq.dedup ? seq.units.size() : deduplicate(seq.units).size();
    stats.total_tokens_pre_dedup += pre;
    stats.total_tokens_post_dedup += post;
    stats.per_utterance.push_back({seq.utt_id, pre, post});
  }
  return stats;
}

std::vector<DiffInterval> align_diff(const UnitSequence& a,
                                     const UnitSequence& b) {
  if (!a.spans || !b.spans) {
    throw InvalidArgument("align_diff needs sequences with spans");
  }
  const auto& sa = *a.spans;
  const auto& sb = *b.spans;
  if (sa.size() != a.units.size() || sb.size() != b.units.size()) {
    throw InvalidArgument("span count does not match unit count");
  }
  std::vector<double> cuts;
  for (const auto* spans : {&sa, &sb}) {
    for (const auto& s : *spans) {
      cuts.push_back(s.start_ms);
      cuts.push_back(s.end_ms);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // Both span lists are ordered, so one cursor per side suffices.
  auto active = [](const std::vector<TimeSpan>& spans,
                   const std::vector<std::uint32_t>& units, std::size_t& cursor,
                   double t) -> std::optional<std::uint32_t> {
    while (cursor < spans.size() && spans[cursor].end_ms <= t) ++cursor;
    if (cursor < spans.size() && spans[cursor].start_ms <= t) {
      return units[cursor];
    }
    return std::nullopt;
  };

  std::vector<DiffInterval> out;
  std::size_t ca = 0;
  std::size_t cb = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double t = cuts[i];
    auto ua = active(sa, a.units, ca, t);
    auto ub = active(sb, b.units, cb, t);
    if (!ua && !ub) continue;
    out.push_back({{t, cuts[i + 1]}, ua, ub, ua != ub});
  }
  return out;
}

void write_unit_corpus(std::span<const UnitSequence> corpus,
                       const std::filesystem::path& units_path,
                       const std::optional<std::filesystem::path>& spans_path) {
  std::ostringstream units;
  std::ostringstream spans;
  for (const auto& seq : corpus) {
    if (seq.utt_id.empty() ||
        seq.utt_id.find_first_of("\t\n") != std::string::npos) {
      throw InvalidArgument("invalid utt_id '" + seq.utt_id + "'");
    }
    units << seq.utt_id << '\t';
    for (std::size_t i = 0; i < seq.units.size(); ++i) {
      if (i) units << ' ';
      units << seq.units[i];
    }
    units << '\n';
    if (spans_path) {
      if (!seq.spans) throw InvalidArgument("missing spans for " + seq.utt_id);
      spans << seq.utt_id << '\t';
      for (std::size_t i = 0; i < seq.spans->size(); ++i) {
        if (i) spans << ' ';
        spans << format_double((*seq.spans)[i].start_ms) << ':'
              << format_double((*seq.spans)[i].end_ms);
      }
      spans << '\n';
    }
  }
  write_file_atomic(units_path, units.str());
  if (spans_path) write_file_atomic(*spans_path, spans.str());
}

namespace {

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  const std::string text = read_file(path);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw FormatError(FormatError::Kind::malformed,
                        path.string() + ":" + std::to_string(line_no) +
                            ": expected 'utt_id<TAB>...'");
    }
    fn(std::string(line.substr(0, tab)), line.substr(tab + 1));
  }
}

}  // namespace

std::vector<UnitSequence> read_unit_corpus(
    const std::filesystem::path& units_path,
    const std::optional<std::filesystem::path>& spans_path) {
  std::vector<UnitSequence> corpus;
  std::map<std::string, std::size_t> index;
  for_each_record(units_path, [&](std::string id, std::string_view body) {
    UnitSequence seq;
    seq.utt_id = id;
    for (auto tok : split_ws(body)) {
      seq.units.push_back(static_cast<std::uint32_t>(parse_u64(tok)));
    }
    if (!index.emplace(id, corpus.size()).second) {
      throw FormatError(FormatError::Kind::malformed,
                        "duplicate utt_id in unit corpus: " + id);
    }
    corpus.push_back(std::move(seq));
  });
  if (!spans_path) return corpus;

  for_each_record(*spans_path, [&](std::string id, std::string_view body) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw FormatError(FormatError::Kind::malformed,
                        "span file names unknown utterance " + id);
    }
    std::vector<TimeSpan> spans;
    for (auto tok : split_ws(body)) {
      auto colon = tok.find(':');
      if (colon == std::string_view::npos) {
        throw FormatError(FormatError::Kind::malformed,
                          "span token without ':' for " + id);
      }
      spans.push_back(
          {parse_f64(tok.substr(0, colon)), parse_f64(tok.substr(colon + 1))});
    }
    auto& seq = corpus[it->second];
    if (spans.size() != seq.units.size()) {
      throw FormatError(FormatError::Kind::malformed,
                        "span count mismatch for " + id);
    }
    seq.spans = std::move(spans);
  });
  return corpus;
}

}  // namespace unitkit
